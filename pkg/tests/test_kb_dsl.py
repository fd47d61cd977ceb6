import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from nesymon.kb import (
    And,
    Atom,
    Category,
    CATEGORY_TO_MODE,
    Compare,
    Domain,
    DslError,
    Exists,
    ForAll,
    Func,
    Implies,
    Mode,
    Not,
    Or,
    Rule,
    RuleError,
    derive_category,
    parse_rules,
    parse_single,
    pretty_print,
    validate_category,
)


class TestParsingExamples:
    def test_outcome_rule(self):
        rule = parse_single(
            "RULE r1 FORALL l+ : waittime(Surg, ATB) <= 2 -> NOT P")
        assert rule.category is Category.CLASS_DEP_OUTCOME
        assert rule.mode is Mode.B
        assert rule.domain is Domain.POS
        assert rule.body == Implies(
            Compare(Func("waittime", ("Surg", "ATB")), "<=", 2.0),
            Not(Atom("P")))

    def test_class_independent_rule(self):
        rule = parse_single("RULE r2 FORALL l : hasact(Rev) AND next(Rev, Exam)")
        assert rule.category is Category.CLASS_INDEPENDENT
        assert rule.mode is Mode.C
        assert rule.body == And(Atom("hasact", ("Rev",)),
                                Atom("next", ("Rev", "Exam")))

    def test_feature_expansion_rule_with_derived_predicate(self):
        rule = parse_single(
            "RULE r3 FORALL l+ : age > 60 AND hascond(Diabetes) -> specmon")
        assert rule.category is Category.CLASS_DEP_NON_OUTCOME
        assert rule.mode is Mode.A
        assert rule.derived_predicates == ("specmon",)

    def test_exists_quantifier(self):
        rule = parse_single("RULE r4 EXISTS l : hasact(Rev)")
        assert isinstance(rule.formula, Exists)
        assert rule.category is Category.CLASS_INDEPENDENT

    def test_domains(self):
        assert parse_single("RULE a FORALL l : hasact(Rev)").domain is \
            Domain.ALL
        assert parse_single("RULE a FORALL l+ : NOT P").domain is Domain.POS
        assert parse_single("RULE a FORALL l- : P").domain is Domain.NEG


class TestGrammar:
    def test_precedence_not_binds_tightest(self):
        rule = parse_single("RULE r FORALL l : NOT hasact(Rev) AND hasact(Exam)")
        assert rule.body == And(Not(Atom("hasact", ("Rev",))),
                                Atom("hasact", ("Exam",)))

    def test_precedence_and_over_or(self):
        rule = parse_single(
            "RULE r FORALL l : hasact(Rev) OR hasact(Exam) AND hasact(Lab)")
        assert isinstance(rule.body, Or)
        assert isinstance(rule.body.right, And)

    def test_implies_lowest_and_right_associative(self):
        rule = parse_single(
            "RULE r FORALL l : hasact(Rev) -> hasact(Exam) -> hasact(Lab)")
        assert rule.body == Implies(Atom("hasact", ("Rev",)),
                                    Implies(Atom("hasact", ("Exam",)),
                                            Atom("hasact", ("Lab",))))

    def test_parentheses_override(self):
        rule = parse_single(
            "RULE r FORALL l : (hasact(Rev) OR hasact(Exam)) AND hasact(Lab)")
        assert isinstance(rule.body, And)
        assert isinstance(rule.body.left, Or)

    def test_quoted_activity_names(self):
        rule = parse_single('RULE r FORALL l : hasact("ER Registration")')
        assert rule.body == Atom("hasact", ("ER Registration",))

    def test_negative_threshold_and_double_equals(self):
        rule = parse_single("RULE r FORALL l : attr(temp) == -2.5")
        assert rule.body == Compare(Func("attr", ("temp",)), "=", -2.5)

    def test_comments_and_blank_lines(self):
        doc = """
        # header comment
        RULE one FORALL l : hasact(Rev)  # trailing comment

        RULE two FORALL l : hasact(Exam)
        """
        rules = parse_rules(doc)
        assert [r.id for r in rules] == ["one", "two"]


class TestErrors:
    def test_syntax_error_has_location(self):
        with pytest.raises(DslError, match=r"line 1, col"):
            parse_rules("RULE r FORALL l : AND hasact(Rev)")

    def test_unknown_predicate(self):
        with pytest.raises(DslError, match="unknown predicate 'frobnicate'"):
            parse_rules("RULE r FORALL l : frobnicate(Rev)")

    def test_unknown_function(self):
        with pytest.raises(DslError, match="unknown function 'duration'"):
            parse_rules("RULE r FORALL l : duration(Surg) > 2")

    def test_predicate_used_as_function(self):
        with pytest.raises(DslError, match="predicate, not a function"):
            parse_rules("RULE r FORALL l : hasact(Rev) > 0")

    def test_function_used_as_predicate(self):
        with pytest.raises(DslError, match="is a function"):
            parse_rules("RULE r FORALL l : age")

    def test_arity_mismatch(self):
        with pytest.raises(DslError, match="takes 2 argument"):
            parse_rules("RULE r FORALL l : next(Rev)")
        with pytest.raises(DslError, match="takes 2 argument"):
            parse_rules("RULE r FORALL l : waittime(Surg) > 1")

    def test_p_with_arguments(self):
        with pytest.raises(DslError, match="P takes no arguments"):
            parse_rules("RULE r FORALL l+ : P(Rev)")

    def test_duplicate_rule_id(self):
        doc = "RULE r FORALL l : hasact(Rev)\nRULE r FORALL l : hasact(Exam)\n"
        with pytest.raises(DslError, match="duplicate rule id"):
            parse_rules(doc)

    def test_category_contradictions(self):
        with pytest.raises(DslError, match="P does not occur"):
            parse_rules("RULE r category: b FORALL l : hasact(Rev)")
        with pytest.raises(DslError, match="must quantify over l"):
            parse_rules("RULE r category: c FORALL l+ : hasact(Rev)")
        with pytest.raises(DslError, match="mentions P"):
            parse_rules("RULE r category: a FORALL l+ : NOT P")

    def test_p_in_antecedent_rejected(self):
        with pytest.raises(DslError, match="antecedent"):
            parse_rules("RULE r FORALL l+ : P -> hasact(Rev)")

    def test_outcome_rule_needs_label_domain(self):
        with pytest.raises(DslError, match="l\\+ or l-"):
            parse_rules("RULE r FORALL l : hasact(Rev) -> NOT P")

    def test_derived_predicate_only_in_mode_a_consequent(self):
        # unknown predicate in a class-independent rule is an error
        with pytest.raises(DslError, match="unknown predicate"):
            parse_rules("RULE r FORALL l : hasact(Rev) -> specmon")
        # and in a mode-A antecedent as well
        with pytest.raises(DslError, match="unknown predicate"):
            parse_rules("RULE r FORALL l+ : specmon -> hascond(Diabetes)")

    def test_derived_predicate_must_be_bare(self):
        with pytest.raises(DslError, match="takes no arguments"):
            parse_rules("RULE r FORALL l+ : age > 60 -> specmon(Diabetes)")

    def test_unknown_category_name(self):
        with pytest.raises(DslError, match="unknown category"):
            parse_rules("RULE r category: z FORALL l : hasact(Rev)")

    def test_extra_predicates_accepted(self):
        rule = parse_single("RULE r FORALL l : nutriadeq",
                            extra_predicates=("nutriadeq",))
        assert rule.body == Atom("nutriadeq")


class TestCategoryDerivation:
    def test_validate_rejects_structural_mismatches(self):
        body_p = Not(Atom("P"))
        with pytest.raises(RuleError):
            validate_category("r", Category.CLASS_DEP_OUTCOME, Domain.ALL,
                              body_p)
        assert derive_category(Domain.NEG, body_p) is Category.CLASS_DEP_OUTCOME
        assert derive_category(Domain.ALL, Atom("hasact", ("Rev",))) is \
            Category.CLASS_INDEPENDENT
        assert derive_category(Domain.POS, Atom("hasact", ("Rev",))) is \
            Category.CLASS_DEP_NON_OUTCOME


_LEAVES = st.sampled_from([
    Atom("hasact", ("Rev",)),
    Atom("hasact", ("ER Registration",)),
    Atom("next", ("Rev", "Exam")),
    Atom("chainnext", ("Surg", "PostCU")),
    Atom("precededby", ("PAdm", "PostCU")),
    Atom("hascond", ("Diabetes",)),
    Atom("P"),
    Compare(Func("waittime", ("Surg", "ATB")), "<=", 2.0),
    Compare(Func("age"), ">", 60.0),
    Compare(Func("cycletime"), "<", 48.5),
    Compare(Func("attr", ("oxygen",)), ">=", 0.9),
    Compare(Func("attr", ("oxygen",)), "=", -3.25),
])

_EXPRS = st.recursive(
    _LEAVES,
    lambda child: st.one_of(
        st.builds(Not, child),
        st.builds(And, child, child),
        st.builds(Or, child, child),
        st.builds(Implies, child, child),
    ),
    max_leaves=10,
)


class TestPrettyPrintIdentity:
    @settings(max_examples=200, deadline=None)
    @given(domain=st.sampled_from(list(Domain)), body=_EXPRS,
           exists=st.booleans())
    def test_parse_of_pretty_print_is_identity(self, domain, body, exists):
        category = derive_category(domain, body)
        try:
            validate_category("rx", category, domain, body)
        except RuleError:
            assume(False)
        formula = Exists(domain, body) if exists else ForAll(domain, body)
        rule = Rule("rx", formula, category, CATEGORY_TO_MODE[category])
        parsed = parse_single(pretty_print(rule))
        assert parsed.formula == rule.formula
        assert parsed.category is rule.category
        assert parsed.mode is rule.mode

    def test_round_trip_preserves_tree_shape(self):
        # left- vs right-nested conjunctions print differently
        left = parse_single(
            "RULE r FORALL l : hasact(Rev) AND hasact(Exam) AND hasact(Lab)")
        right = parse_single(
            "RULE r FORALL l : hasact(Rev) AND (hasact(Exam) AND hasact(Lab))")
        assert left.body != right.body
        assert parse_single(pretty_print(left)).body == left.body
        assert parse_single(pretty_print(right)).body == right.body
