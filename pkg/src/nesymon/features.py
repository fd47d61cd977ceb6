"""Prefix feature functions and fixed-schema encoding.

Two consumers share this module.  The logic layer grounds function and
predicate symbols (waiting times, activity occurrence, payload lookups) in
the deterministic functions defined here, evaluated on raw values.  The
neural layer consumes :func:`encode` / :func:`encode_batch` output, where
every numeric entry is min-max normalized to [0, 1] using bounds collected
from the training split only.

Missing values stay explicit: numeric features encode as (value, presence)
pairs with presence 0 when the underlying value is ABSENT, and categorical
vocabularies reserve index 0 for padding/absent and index 1 for categories
unseen at training time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Mapping, Sequence

import numpy as np

from .eventlog import ABSENT, Prefix, PrefixSet

PAD_INDEX = 0
UNK_INDEX = 1
_RESERVED = 2  # vocabulary entries start after PAD and UNK

SECONDS_PER_HOUR = 3600.0


# --------------------------------------------------------------------------
# deterministic feature functions (logic groundings)


def has_act(prefix: Prefix, activity: str) -> int:
    """1 iff the activity occurs among the prefix's events."""
    return int(activity in prefix.activities)


def next_after(prefix: Prefix, a: str, b: str, mode: str = "eventually") -> int:
    """Universal follow check: every a is followed by b (1 if a never occurs).

    mode "eventually": some later event is b.  mode "immediately": the
    directly succeeding event is b; an `a` at the end of the prefix has no
    successor and fails.
    """
    acts = prefix.activities
    if mode == "eventually":
        last_a = max((i for i, x in enumerate(acts) if x == a), default=None)
        if last_a is None:
            return 1
        return int(any(x == b for x in acts[last_a + 1:]))
    if mode == "immediately":
        for i, x in enumerate(acts):
            if x == a and (i + 1 >= len(acts) or acts[i + 1] != b):
                return 0
        return 1
    raise ValueError(f"unknown mode {mode!r}")


def preceded_by(prefix: Prefix, b: str, a: str) -> int:
    """1 iff every occurrence of b has an earlier occurrence of a."""
    acts = prefix.activities
    first_b = next((i for i, x in enumerate(acts) if x == b), None)
    if first_b is None:
        return 1
    first_a = next((i for i, x in enumerate(acts) if x == a), None)
    return int(first_a is not None and first_a < first_b)


def wait_time(prefix: Prefix, a: str, b: str):
    """Hours from the first a to the first b after it; ABSENT if unanchored."""
    events = prefix.events
    first_a = next((i for i, e in enumerate(events) if e.activity == a), None)
    if first_a is None:
        return ABSENT
    t_a = events[first_a].timestamp
    for e in events[first_a + 1:]:
        if e.activity == b:
            return (e.timestamp - t_a).total_seconds() / SECONDS_PER_HOUR
    return ABSENT


def cycle_time(prefix: Prefix) -> float:
    """Hours between the first and last event of the prefix."""
    events = prefix.events
    span = events[-1].timestamp - events[0].timestamp
    return span.total_seconds() / SECONDS_PER_HOUR


def activity_duration(prefix: Prefix, activity: str):
    """Hours from an activity's lifecycle start to its completion.

    Requires a "start" transition followed by a "complete" one for the same
    activity (the lifecycle:transition payload key); ABSENT otherwise.
    """
    start = None
    for e in prefix.events:
        if e.activity != activity:
            continue
        transition = str(e.payload.get("lifecycle:transition", "complete")).lower()
        if transition == "start" and start is None:
            start = e.timestamp
        elif transition == "complete" and start is not None:
            return (e.timestamp - start).total_seconds() / SECONDS_PER_HOUR
    return ABSENT


def case_attr(prefix: Prefix, name: str):
    """Case payload lookup; exact key first, then case-insensitive."""
    payload = prefix.trace.case_payload
    if name in payload:
        return payload[name]
    lowered = name.lower()
    for key, value in payload.items():
        if key.lower() == lowered:
            return value
    return ABSENT


def event_attr(prefix: Prefix, name: str):
    """Most recent value of an event payload attribute within the prefix."""
    for e in reversed(prefix.events):
        if name in e.payload:
            return e.payload[name]
    return ABSENT


def has_condition(prefix: Prefix, name: str) -> int:
    """1 iff a boolean-ish case attribute marks the condition as present."""
    value = case_attr(prefix, name)
    if value is ABSENT:
        return 0
    if isinstance(value, str):
        return int(value.strip().lower() in ("true", "yes", "1"))
    return int(bool(value))


# --------------------------------------------------------------------------
# schema


@dataclass(frozen=True)
class NumericAttr:
    name: str
    lo: float
    hi: float

    def normalize(self, value: float) -> float:
        if self.hi == self.lo:
            return 0.5
        x = (value - self.lo) / (self.hi - self.lo)
        return min(1.0, max(0.0, x))


@dataclass(frozen=True)
class CategoricalAttr:
    name: str
    vocab: tuple[str, ...]  # sorted; indices offset by the reserved slots

    def index(self, value) -> int:
        try:
            return _RESERVED + self.vocab.index(_cat_key(value))
        except ValueError:
            return UNK_INDEX

    @property
    def table_size(self) -> int:
        return _RESERVED + len(self.vocab)


def _cat_key(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


@dataclass(frozen=True)
class FeatureConfig:
    temporal_pairs: tuple[tuple[str, str], ...] = ()
    include_cycle_time: bool = True
    # attribute names (case-insensitive) kept out of the schema, e.g. the
    # outcome column the labeling reads; prevents target leakage
    exclude_attributes: tuple[str, ...] = ()


@dataclass(frozen=True)
class FeatureSchema:
    """Encoding layout frozen from the training split.

    Activity indices: 0 padding, 1 unseen, then the sorted vocabulary.
    Numeric bounds are train min/max; constant attributes encode as 0.5.
    """

    activities: tuple[str, ...]
    case_numeric: tuple[NumericAttr, ...]
    case_categorical: tuple[CategoricalAttr, ...]
    event_numeric: tuple[NumericAttr, ...]
    event_categorical: tuple[CategoricalAttr, ...]
    temporal: tuple[NumericAttr, ...]  # wait:{a}->{b} pairs, then cycle_time
    config: FeatureConfig = field(default_factory=FeatureConfig)

    def activity_index(self, activity: str) -> int:
        try:
            return _RESERVED + self.activities.index(activity)
        except ValueError:
            return UNK_INDEX

    @property
    def activity_table_size(self) -> int:
        return _RESERVED + len(self.activities)

    @property
    def n_event_numeric(self) -> int:
        return len(self.event_numeric)

    @property
    def n_static_numeric(self) -> int:
        return len(self.case_numeric) + len(self.temporal)

    def numeric_bounds(self, name: str) -> tuple[float, float] | None:
        """Train-split (lo, hi) for a named numeric attribute or temporal
        feature; used to place comparison thresholds on the normalized
        scale."""
        for attr in (*self.case_numeric, *self.event_numeric, *self.temporal):
            if attr.name == name:
                return (attr.lo, attr.hi)
        return None

    def to_json(self) -> str:
        def num(attrs):
            return [{"name": a.name, "lo": a.lo, "hi": a.hi} for a in attrs]

        def cat(attrs):
            return [{"name": a.name, "vocab": list(a.vocab)} for a in attrs]

        doc = {
            "activities": list(self.activities),
            "case_numeric": num(self.case_numeric),
            "case_categorical": cat(self.case_categorical),
            "event_numeric": num(self.event_numeric),
            "event_categorical": cat(self.event_categorical),
            "temporal": num(self.temporal),
            "config": {
                "temporal_pairs": [list(p) for p in self.config.temporal_pairs],
                "include_cycle_time": self.config.include_cycle_time,
            },
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FeatureSchema":
        doc = json.loads(text)

        def num(items):
            return tuple(NumericAttr(d["name"], d["lo"], d["hi"]) for d in items)

        def cat(items):
            return tuple(CategoricalAttr(d["name"], tuple(d["vocab"]))
                         for d in items)

        cfg = FeatureConfig(
            temporal_pairs=tuple(tuple(p) for p in
                                 doc["config"]["temporal_pairs"]),
            include_cycle_time=doc["config"]["include_cycle_time"],
        )
        return cls(
            activities=tuple(doc["activities"]),
            case_numeric=num(doc["case_numeric"]),
            case_categorical=cat(doc["case_categorical"]),
            event_numeric=num(doc["event_numeric"]),
            event_categorical=cat(doc["event_categorical"]),
            temporal=num(doc["temporal"]),
            config=cfg,
        )


def _is_numeric(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _classify_attrs(observations: Mapping[str, list]) -> tuple[
        tuple[NumericAttr, ...], tuple[CategoricalAttr, ...]]:
    numeric, categorical = [], []
    for name in sorted(observations):
        values = observations[name]
        if not values:
            continue
        if all(_is_numeric(v) for v in values):
            floats = [float(v) for v in values]
            numeric.append(NumericAttr(name, min(floats), max(floats)))
        else:
            vocab = tuple(sorted({_cat_key(v) for v in values}))
            categorical.append(CategoricalAttr(name, vocab))
    return tuple(numeric), tuple(categorical)


def wait_feature_name(a: str, b: str) -> str:
    return f"wait:{a}->{b}"


CYCLE_TIME_NAME = "cycle_time"


def build_schema(train: PrefixSet | Iterable[Prefix],
                 config: FeatureConfig = FeatureConfig()) -> FeatureSchema:
    """Collect vocabularies and numeric bounds from the training prefixes."""
    prefixes = list(train)
    if not prefixes:
        raise ValueError("cannot build a feature schema from an empty train set")
    activities: set[str] = set()
    case_obs: dict[str, list] = {}
    event_obs: dict[str, list] = {}
    temporal_obs: dict[str, list] = {}
    seen_traces: set[str] = set()
    excluded = {name.lower() for name in config.exclude_attributes}
    for p in prefixes:
        for e in p.events:
            activities.add(e.activity)
            for key, value in e.payload.items():
                if isinstance(value, datetime) or key.lower() in excluded:
                    continue
                event_obs.setdefault(key, []).append(value)
        if p.case_id not in seen_traces:
            seen_traces.add(p.case_id)
            for key, value in p.trace.case_payload.items():
                if isinstance(value, datetime) or key.lower() in excluded:
                    continue
                case_obs.setdefault(key, []).append(value)
        for a, b in config.temporal_pairs:
            w = wait_time(p, a, b)
            if w is not ABSENT:
                temporal_obs.setdefault(wait_feature_name(a, b), []).append(w)
        if config.include_cycle_time:
            temporal_obs.setdefault(CYCLE_TIME_NAME, []).append(cycle_time(p))
    case_num, case_cat = _classify_attrs(case_obs)
    event_num, event_cat = _classify_attrs(event_obs)
    temporal: list[NumericAttr] = []
    for a, b in config.temporal_pairs:
        name = wait_feature_name(a, b)
        values = temporal_obs.get(name, [])
        if values:
            temporal.append(NumericAttr(name, min(values), max(values)))
        else:
            temporal.append(NumericAttr(name, 0.0, 0.0))
    if config.include_cycle_time:
        values = temporal_obs.get(CYCLE_TIME_NAME, [0.0])
        temporal.append(NumericAttr(CYCLE_TIME_NAME, min(values), max(values)))
    return FeatureSchema(
        activities=tuple(sorted(activities)),
        case_numeric=case_num,
        case_categorical=case_cat,
        event_numeric=event_num,
        event_categorical=event_cat,
        temporal=tuple(temporal),
        config=config,
    )


# --------------------------------------------------------------------------
# encoding


@dataclass(frozen=True)
class FeatureVector:
    """Encoded prefix: sequence rows plus static scalars, all in [0, 1]."""

    act_idx: np.ndarray      # (k,) int64
    ev_num: np.ndarray       # (k, n_event_numeric) normalized values
    ev_pres: np.ndarray      # (k, n_event_numeric) presence flags
    ev_cat: np.ndarray       # (k, n_event_categorical) int64 indices
    static_num: np.ndarray   # (n_static_numeric,) normalized values
    static_pres: np.ndarray  # (n_static_numeric,) presence flags
    case_cat: np.ndarray     # (n_case_categorical,) int64 indices


def encode(prefix: Prefix, schema: FeatureSchema) -> FeatureVector:
    """Deterministic encoding of one prefix against a frozen schema."""
    k = prefix.k
    act_idx = np.fromiter((schema.activity_index(a) for a in prefix.activities),
                          dtype=np.int64, count=k)
    ev_num = np.zeros((k, len(schema.event_numeric)))
    ev_pres = np.zeros((k, len(schema.event_numeric)))
    for j, attr in enumerate(schema.event_numeric):
        for i, e in enumerate(prefix.events):
            value = e.payload.get(attr.name, ABSENT)
            if value is not ABSENT and _is_numeric(value):
                ev_num[i, j] = attr.normalize(float(value))
                ev_pres[i, j] = 1.0
    ev_cat = np.zeros((k, len(schema.event_categorical)), dtype=np.int64)
    for j, attr in enumerate(schema.event_categorical):
        for i, e in enumerate(prefix.events):
            value = e.payload.get(attr.name, ABSENT)
            ev_cat[i, j] = PAD_INDEX if value is ABSENT else attr.index(value)
    n_static = schema.n_static_numeric
    static_num = np.zeros(n_static)
    static_pres = np.zeros(n_static)
    pos = 0
    for attr in schema.case_numeric:
        value = prefix.trace.case_payload.get(attr.name, ABSENT)
        if value is not ABSENT and _is_numeric(value):
            static_num[pos] = attr.normalize(float(value))
            static_pres[pos] = 1.0
        pos += 1
    for attr, (a, b) in zip(schema.temporal, schema.config.temporal_pairs):
        value = wait_time(prefix, a, b)
        if value is not ABSENT:
            static_num[pos] = attr.normalize(value)
            static_pres[pos] = 1.0
        pos += 1
    if schema.config.include_cycle_time:
        attr = schema.temporal[-1]
        static_num[pos] = attr.normalize(cycle_time(prefix))
        static_pres[pos] = 1.0
        pos += 1
    case_cat = np.zeros(len(schema.case_categorical), dtype=np.int64)
    for j, attr in enumerate(schema.case_categorical):
        value = prefix.trace.case_payload.get(attr.name, ABSENT)
        case_cat[j] = PAD_INDEX if value is ABSENT else attr.index(value)
    return FeatureVector(act_idx, ev_num, ev_pres, ev_cat,
                         static_num, static_pres, case_cat)


@dataclass
class Batch:
    """Padded, stacked feature vectors ready for the neural grounding."""

    act_idx: np.ndarray      # (n, T) int64, PAD_INDEX beyond each length
    lengths: np.ndarray      # (n,) int64 true prefix lengths
    ev_num: np.ndarray       # (n, T, e)
    ev_pres: np.ndarray      # (n, T, e)
    ev_cat: np.ndarray       # (n, T, m) int64
    static_num: np.ndarray   # (n, s)
    static_pres: np.ndarray  # (n, s)
    case_cat: np.ndarray     # (n, c) int64
    expansion: np.ndarray    # (n, x) deterministic rule-value slots
    labels: np.ndarray       # (n,) int64 in {0, 1}
    prefixes: list[Prefix]

    def __len__(self) -> int:
        return len(self.prefixes)


def encode_batch(prefixes: Sequence[Prefix], schema: FeatureSchema,
                 expansion: np.ndarray | None = None) -> Batch:
    """Stack encodings with right-padding to the longest prefix in the batch.

    `expansion` optionally supplies (n, x) extra static inputs computed by
    the knowledge-injection layer; defaults to a zero-width slot block.
    """
    if not prefixes:
        raise ValueError("cannot encode an empty batch")
    vectors = [encode(p, schema) for p in prefixes]
    n = len(vectors)
    T = max(v.act_idx.shape[0] for v in vectors)
    e = len(schema.event_numeric)
    m = len(schema.event_categorical)
    act_idx = np.full((n, T), PAD_INDEX, dtype=np.int64)
    lengths = np.zeros(n, dtype=np.int64)
    ev_num = np.zeros((n, T, e))
    ev_pres = np.zeros((n, T, e))
    ev_cat = np.full((n, T, m), PAD_INDEX, dtype=np.int64)
    for i, v in enumerate(vectors):
        k = v.act_idx.shape[0]
        lengths[i] = k
        act_idx[i, :k] = v.act_idx
        ev_num[i, :k] = v.ev_num
        ev_pres[i, :k] = v.ev_pres
        ev_cat[i, :k] = v.ev_cat
    static_num = np.stack([v.static_num for v in vectors])
    static_pres = np.stack([v.static_pres for v in vectors])
    case_cat = np.stack([v.case_cat for v in vectors])
    if expansion is None:
        expansion = np.zeros((n, 0))
    else:
        expansion = np.asarray(expansion, dtype=np.float64)
        if expansion.shape[0] != n:
            raise ValueError(
                f"expansion rows {expansion.shape[0]} != batch size {n}")
    labels = np.fromiter((p.label for p in prefixes), dtype=np.int64, count=n)
    return Batch(act_idx, lengths, ev_num, ev_pres, ev_cat, static_num,
                 static_pres, case_cat, expansion, labels, list(prefixes))
