import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import mk_prefix
from nesymon.eventlog import ABSENT, Prefix
from nesymon.features import (
    CYCLE_TIME_NAME,
    PAD_INDEX,
    UNK_INDEX,
    FeatureConfig,
    FeatureSchema,
    activity_duration,
    build_schema,
    case_attr,
    cycle_time,
    encode,
    encode_batch,
    event_attr,
    has_act,
    has_condition,
    next_after,
    preceded_by,
    wait_time,
)

ACTS = ["Rev", "Exam", "Lab", "ATB", "Surg", "PAdm", "PostCU"]


class TestHasAct:
    def test_present(self):
        assert has_act(mk_prefix(["Rev", "Exam"]), "Rev") == 1

    def test_absent(self):
        assert has_act(mk_prefix(["Rev"]), "Surg") == 0

    @settings(max_examples=60, deadline=None)
    @given(acts=st.lists(st.sampled_from(ACTS), min_size=1, max_size=8),
           query=st.sampled_from(ACTS), grow=st.integers(1, 3))
    def test_monotone_under_growth(self, acts, query, grow):
        # extending a prefix can only turn has_act from 0 to 1, never back
        longer = acts + ["Lab"] * grow
        p_small = Prefix(mk_prefix(longer).trace, len(acts), 0)
        p_big = Prefix(p_small.trace, len(longer), 0)
        assert has_act(p_big, query) >= has_act(p_small, query)


class TestNextAfter:
    def test_eventually_satisfied(self):
        assert next_after(mk_prefix(["Rev", "Lab", "Exam"]), "Rev", "Exam") == 1

    def test_immediately_satisfied(self):
        p = mk_prefix(["Surg", "PostCU"])
        assert next_after(p, "Surg", "PostCU", mode="immediately") == 1

    def test_vacuous_when_activation_missing(self):
        assert next_after(mk_prefix(["Exam"]), "Rev", "Exam") == 1

    def test_eventually_unsatisfied(self):
        assert next_after(mk_prefix(["Rev"]), "Rev", "Exam") == 0

    def test_immediately_needs_direct_successor(self):
        p = mk_prefix(["Surg", "Lab", "PostCU"])
        assert next_after(p, "Surg", "PostCU", mode="immediately") == 0

    def test_universal_reading_over_repeats(self):
        # the second Rev has no Exam after it
        assert next_after(mk_prefix(["Rev", "Exam", "Rev"]), "Rev", "Exam") == 0

    def test_trailing_activation_fails_immediately(self):
        p = mk_prefix(["Surg"])
        assert next_after(p, "Surg", "PostCU", mode="immediately") == 0

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            next_after(mk_prefix(["Rev"]), "Rev", "Exam", mode="someday")


class TestPrecededBy:
    def test_satisfied(self):
        assert preceded_by(mk_prefix(["PostCU", "PAdm"]), "PAdm", "PostCU") == 1

    def test_violated(self):
        assert preceded_by(mk_prefix(["PAdm", "PostCU"]), "PAdm", "PostCU") == 0

    def test_vacuous_without_target(self):
        assert preceded_by(mk_prefix(["Rev"]), "PAdm", "PostCU") == 1


class TestTemporalFunctions:
    def test_wait_time_hours(self):
        p = mk_prefix(["Surg", "ATB"], hours=[2.0, 3.5])
        assert wait_time(p, "Surg", "ATB") == pytest.approx(1.5)

    def test_wait_time_absent_without_target(self):
        assert wait_time(mk_prefix(["Surg"]), "Surg", "ATB") is ABSENT

    def test_wait_time_ignores_target_before_anchor(self):
        p = mk_prefix(["ATB", "Surg"], hours=[0.0, 1.0])
        assert wait_time(p, "Surg", "ATB") is ABSENT

    def test_wait_time_uses_first_anchor(self):
        p = mk_prefix(["Surg", "Surg", "ATB"], hours=[0.0, 4.0, 5.0])
        assert wait_time(p, "Surg", "ATB") == pytest.approx(5.0)

    def test_cycle_time_single_event(self):
        assert cycle_time(mk_prefix(["Rev"])) == 0.0

    def test_cycle_time_span(self):
        p = mk_prefix(["Rev", "Lab", "Surg"], hours=[0.0, 5.0, 12.0])
        assert cycle_time(p) == pytest.approx(12.0)

    def test_activity_duration_paired(self):
        p = mk_prefix(
            ["Surg", "Surg"], hours=[1.0, 3.5],
            payloads=[{"lifecycle:transition": "start"},
                      {"lifecycle:transition": "complete"}])
        assert activity_duration(p, "Surg") == pytest.approx(2.5)

    def test_activity_duration_absent_without_pairing(self):
        assert activity_duration(mk_prefix(["Surg", "Surg"]), "Surg") is ABSENT


class TestPayloadLookups:
    def test_case_attr_exact_and_case_insensitive(self):
        p = mk_prefix(["Rev"], case_payload={"Age": 71})
        assert case_attr(p, "Age") == 71
        assert case_attr(p, "age") == 71
        assert case_attr(p, "weight") is ABSENT

    def test_event_attr_takes_latest(self):
        p = mk_prefix(["Rev", "Lab"], payloads=[{"oxygen": 95}, {"oxygen": 88}])
        assert event_attr(p, "oxygen") == 88
        assert event_attr(p, "pulse") is ABSENT

    def test_has_condition_variants(self):
        assert has_condition(
            mk_prefix(["Rev"], case_payload={"Diabetes": True}), "Diabetes") == 1
        assert has_condition(
            mk_prefix(["Rev"], case_payload={"Diabetes": "true"}), "Diabetes") == 1
        assert has_condition(
            mk_prefix(["Rev"], case_payload={"Diabetes": False}), "Diabetes") == 0
        assert has_condition(mk_prefix(["Rev"]), "Diabetes") == 0


def _train_prefixes():
    return [
        mk_prefix(["Rev", "Exam"], case_payload={"Age": 2, "ward": "a"},
                  payloads=[{"oxygen": 90}, {"oxygen": 99}], case_id="c1"),
        mk_prefix(["Surg", "ATB"], hours=[0.0, 6.0],
                  case_payload={"Age": 4, "ward": "b"},
                  payloads=[{}, {"oxygen": 93}], case_id="c2"),
        mk_prefix(["Surg", "ATB"], hours=[0.0, 0.0],
                  case_payload={"Age": 10, "ward": "a"},
                  payloads=[{}, {}], case_id="c3"),
    ]


SCHEMA_CONFIG = FeatureConfig(temporal_pairs=(("Surg", "ATB"),))


class TestBuildSchema:
    def test_numeric_bounds_from_train(self):
        schema = build_schema(_train_prefixes(), SCHEMA_CONFIG)
        assert schema.case_numeric[0].name == "Age"
        assert schema.case_numeric[0].lo == 2.0
        assert schema.case_numeric[0].hi == 10.0

    def test_activity_vocabulary_sorted_with_reserved_slots(self):
        schema = build_schema(_train_prefixes(), SCHEMA_CONFIG)
        assert schema.activities == ("ATB", "Exam", "Rev", "Surg")
        assert schema.activity_index("ATB") == 2
        assert schema.activity_index("NeverSeen") == UNK_INDEX
        assert schema.activity_table_size == 6

    def test_categorical_vocab_sorted(self):
        schema = build_schema(_train_prefixes(), SCHEMA_CONFIG)
        ward = schema.case_categorical[0]
        assert ward.name == "ward"
        assert ward.vocab == ("a", "b")
        assert ward.index("b") == 3
        assert ward.index("zzz") == UNK_INDEX

    def test_constant_attr_encodes_half(self):
        prefixes = [mk_prefix(["A"], case_payload={"Age": 7}, case_id=f"c{i}")
                    for i in range(3)]
        schema = build_schema(prefixes)
        vec = encode(prefixes[0], schema)
        assert vec.static_num[0] == 0.5

    def test_temporal_bounds_collected(self):
        schema = build_schema(_train_prefixes(), SCHEMA_CONFIG)
        assert schema.numeric_bounds("wait:Surg->ATB") == (0.0, 6.0)
        assert schema.numeric_bounds(CYCLE_TIME_NAME) is not None
        assert schema.numeric_bounds("nope") is None

    def test_empty_train_rejected(self):
        with pytest.raises(ValueError):
            build_schema([])

    def test_excluded_attributes_stay_out_of_the_schema(self):
        config = FeatureConfig(temporal_pairs=(("Surg", "ATB"),),
                               exclude_attributes=("ward", "OXYGEN"))
        schema = build_schema(_train_prefixes(), config)
        assert [a.name for a in schema.case_numeric] == ["Age"]
        assert schema.case_categorical == ()
        assert schema.event_numeric == ()

    def test_json_round_trip(self):
        schema = build_schema(_train_prefixes(), SCHEMA_CONFIG)
        assert FeatureSchema.from_json(schema.to_json()) == schema


class TestEncode:
    def test_wait_time_normalized_quarter(self):
        schema = build_schema(_train_prefixes(), SCHEMA_CONFIG)
        p = mk_prefix(["Surg", "ATB"], hours=[0.0, 1.5])
        vec = encode(p, schema)
        pos = len(schema.case_numeric)  # wait slot follows case numerics
        assert vec.static_num[pos] == pytest.approx(0.25)
        assert vec.static_pres[pos] == 1.0

    def test_absent_encodes_zero_zero(self):
        schema = build_schema(_train_prefixes(), SCHEMA_CONFIG)
        p = mk_prefix(["Rev"])  # no Surg/ATB anchor, no Age payload
        vec = encode(p, schema)
        assert vec.static_num[0] == 0.0 and vec.static_pres[0] == 0.0
        pos = len(schema.case_numeric)
        assert vec.static_num[pos] == 0.0 and vec.static_pres[pos] == 0.0

    def test_deterministic(self):
        schema = build_schema(_train_prefixes(), SCHEMA_CONFIG)
        p = mk_prefix(["Surg", "ATB"], hours=[0.0, 2.0],
                      case_payload={"Age": 5, "ward": "b"},
                      payloads=[{"oxygen": 91}, {}])
        a, b = encode(p, schema), encode(p, schema)
        for name in ("act_idx", "ev_num", "ev_pres", "ev_cat", "static_num",
                     "static_pres", "case_cat"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_unseen_activity_maps_to_unk(self):
        schema = build_schema(_train_prefixes(), SCHEMA_CONFIG)
        vec = encode(mk_prefix(["Mystery"]), schema)
        assert vec.act_idx[0] == UNK_INDEX

    def test_out_of_range_values_clamped(self):
        schema = build_schema(_train_prefixes(), SCHEMA_CONFIG)
        hot = encode(mk_prefix(["Rev"], case_payload={"Age": 500}), schema)
        cold = encode(mk_prefix(["Rev"], case_payload={"Age": -500}), schema)
        assert hot.static_num[0] == 1.0
        assert cold.static_num[0] == 0.0

    @settings(max_examples=40, deadline=None)
    @given(age=st.floats(-1e6, 1e6), wait_h=st.floats(0, 1e3))
    def test_all_outputs_in_unit_interval(self, age, wait_h):
        schema = build_schema(_train_prefixes(), SCHEMA_CONFIG)
        p = mk_prefix(["Surg", "ATB"], hours=[0.0, wait_h],
                      case_payload={"Age": age}, payloads=[{"oxygen": 1e5}, {}])
        vec = encode(p, schema)
        for arr in (vec.ev_num, vec.ev_pres, vec.static_num, vec.static_pres):
            assert np.all(arr >= 0.0) and np.all(arr <= 1.0)


class TestEncodeBatch:
    def test_padding_and_lengths(self):
        schema = build_schema(_train_prefixes(), SCHEMA_CONFIG)
        batch = encode_batch(
            [mk_prefix(["Rev"], label=1), mk_prefix(["Surg", "ATB", "Rev"])],
            schema)
        assert batch.act_idx.shape == (2, 3)
        assert list(batch.lengths) == [1, 3]
        assert batch.act_idx[0, 1] == PAD_INDEX
        assert list(batch.labels) == [1, 0]
        assert batch.expansion.shape == (2, 0)

    def test_expansion_shape_checked(self):
        schema = build_schema(_train_prefixes(), SCHEMA_CONFIG)
        with pytest.raises(ValueError, match="expansion"):
            encode_batch([mk_prefix(["Rev"])], schema,
                         expansion=np.zeros((3, 2)))

    def test_empty_batch_rejected(self):
        schema = build_schema(_train_prefixes(), SCHEMA_CONFIG)
        with pytest.raises(ValueError):
            encode_batch([], schema)
