"""Knowledge-base assembly: symbol resolution against a feature schema.

compile_kb takes parsed rules plus the training-split feature schema and
verifies that every activity, attribute, and temporal pair a rule touches
actually resolves, so grounding cannot fail mid-training.  The compiled
KnowledgeBase partitions rules by injection mode and records predicates
derived from label-class rule consequents.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from ..features import (
    CYCLE_TIME_NAME,
    FeatureSchema,
    NumericAttr,
    wait_feature_name,
)
from .ast import (
    Func,
    Mode,
    Rule,
    RuleError,
    atoms_of,
    funcs_of,
    pretty_print,
)
from .dsl import PRED_ARITY

_ACTIVITY_ARG_PREDICATES = {"hasact": (0,), "next": (0, 1),
                            "chainnext": (0, 1), "precededby": (0, 1)}


def resolve_numeric(schema: FeatureSchema, name: str) -> NumericAttr | None:
    """Case-insensitive lookup across case, event, and temporal numerics."""
    lowered = name.lower()
    for attr in (*schema.case_numeric, *schema.event_numeric, *schema.temporal):
        if attr.name.lower() == lowered:
            return attr
    return None


def _has_attr(schema: FeatureSchema, name: str) -> bool:
    lowered = name.lower()
    pools = (schema.case_numeric, schema.case_categorical,
             schema.event_numeric, schema.event_categorical)
    return any(a.name.lower() == lowered for pool in pools for a in pool)


def func_feature_name(func: Func, schema: FeatureSchema) -> str:
    """Schema key carrying the train-split bounds for a function symbol."""
    if func.name == "waittime":
        return wait_feature_name(func.args[0], func.args[1])
    if func.name == "cycletime":
        return CYCLE_TIME_NAME
    if func.name == "age":
        attr = resolve_numeric(schema, "age")
        return attr.name if attr else "age"
    attr = resolve_numeric(schema, func.args[0])
    return attr.name if attr else func.args[0]


@dataclass(frozen=True)
class KnowledgeBase:
    rules: tuple[Rule, ...]
    derived_predicates: tuple[str, ...] = ()
    extra_predicates: tuple[str, ...] = ()

    def by_mode(self, mode: Mode) -> tuple[Rule, ...]:
        return tuple(r for r in self.rules if r.mode is mode)

    @property
    def mode_a(self) -> tuple[Rule, ...]:
        return self.by_mode(Mode.A)

    @property
    def mode_b(self) -> tuple[Rule, ...]:
        return self.by_mode(Mode.B)

    @property
    def mode_c(self) -> tuple[Rule, ...]:
        return self.by_mode(Mode.C)

    def report(self) -> str:
        counts = {mode: len(self.by_mode(mode)) for mode in Mode}
        lines = [
            f"{len(self.rules)} rule(s): "
            + ", ".join(f"mode {m.value}={counts[m]}" for m in Mode)
        ]
        for rule in self.rules:
            lines.append(f"  [{rule.mode.value}] ({rule.category.value}, "
                         f"{rule.source}) {pretty_print(rule)}")
        if self.derived_predicates:
            lines.append("derived predicates: "
                         + ", ".join(self.derived_predicates))
        return "\n".join(lines)


def collect_temporal_pairs(rules: Iterable[Rule]) -> tuple[tuple[str, str], ...]:
    """Waiting-time pairs referenced anywhere in the rules, sorted."""
    pairs = {(f.args[0], f.args[1])
             for rule in rules for f in funcs_of(rule.body)
             if f.name == "waittime"}
    return tuple(sorted(pairs))


def validate_rule(rule: Rule, schema: FeatureSchema,
                  known_extra: set[str] = frozenset()) -> None:
    where = f"rule {rule.id!r}"
    for atom in atoms_of(rule.body):
        arg_slots = _ACTIVITY_ARG_PREDICATES.get(atom.name, ())
        for slot in arg_slots:
            activity = atom.args[slot]
            if activity not in schema.activities:
                raise RuleError(
                    f"{where}: unknown activity {activity!r} (not in the "
                    "training vocabulary)")
        if atom.name == "hascond" and not _has_attr(schema, atom.args[0]):
            raise RuleError(f"{where}: unknown attribute {atom.args[0]!r} "
                            "for hascond")
        if (atom.name not in PRED_ARITY and atom.name not in known_extra
                and atom.name not in rule.derived_predicates):
            raise RuleError(f"{where}: unknown predicate {atom.name!r}")
    for func in funcs_of(rule.body):
        if func.name == "waittime":
            a, b = func.args
            for activity in (a, b):
                if activity not in schema.activities:
                    raise RuleError(f"{where}: unknown activity {activity!r} "
                                    "in waittime")
            if schema.numeric_bounds(wait_feature_name(a, b)) is None:
                raise RuleError(
                    f"{where}: waittime({a}, {b}) has no schema bounds; add "
                    "the pair to the feature configuration's temporal pairs")
        elif func.name == "age":
            if resolve_numeric(schema, "age") is None:
                raise RuleError(f"{where}: no numeric age attribute in the "
                                "schema")
        elif func.name == "cycletime":
            if schema.numeric_bounds(CYCLE_TIME_NAME) is None:
                raise RuleError(f"{where}: cycle time is disabled in the "
                                "feature configuration")
        elif func.name == "attr":
            if resolve_numeric(schema, func.args[0]) is None:
                raise RuleError(f"{where}: unknown numeric attribute "
                                f"{func.args[0]!r}")


def compile_kb(rules: Sequence[Rule], schema: FeatureSchema,
               extra_predicates: Iterable[str] = ()) -> KnowledgeBase:
    """Validate rules against the schema and assemble the knowledge base."""
    known_extra = set(extra_predicates)
    seen: set[str] = set()
    derived: dict[str, None] = {}
    for rule in rules:
        if rule.id in seen:
            raise RuleError(f"duplicate rule id {rule.id!r}")
        seen.add(rule.id)
        validate_rule(rule, schema, known_extra)
        for name in rule.derived_predicates:
            if name in PRED_ARITY or name in known_extra:
                raise RuleError(f"rule {rule.id!r}: derived predicate "
                                f"{name!r} clashes with a registered symbol")
            derived.setdefault(name, None)
    return KnowledgeBase(
        rules=tuple(rules),
        derived_predicates=tuple(derived),
        extra_predicates=tuple(sorted(known_extra)),
    )
