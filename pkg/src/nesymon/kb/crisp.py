"""Three-valued crisp evaluation of rules on single prefixes.

Used for compliance scoring, Declare support counting, and the
conformance filter of parallel-constraint injection.  Results are TRUE,
FALSE, or NA (not applicable):

* a comparison over an ABSENT feature value is NA;
* an implication whose antecedent is FALSE or NA is NA — the rule's
  conditions are not met on this prefix, so it neither supports nor
  violates it;
* conjunction and disjunction treat NA as "unknown" (strong Kleene).

A rule counts as satisfied when it does not evaluate to FALSE, and as
applicable when it evaluates to TRUE or FALSE.
"""

from __future__ import annotations

import enum
from typing import Callable, Mapping

from ..eventlog import ABSENT, Prefix
from .. import features
from .ast import (
    And,
    Atom,
    Compare,
    Expr,
    Func,
    Implies,
    Not,
    Or,
    P_NAME,
    Rule,
    ForAll,
    Exists,
)


class Tri(enum.Enum):
    TRUE = "true"
    FALSE = "false"
    NA = "not_applicable"


class EvalError(ValueError):
    """A symbol in the formula has no evaluator here."""


def _tri(flag: bool) -> Tri:
    return Tri.TRUE if flag else Tri.FALSE


def attr_value(prefix: Prefix, name: str):
    """Raw payload lookup: case attribute first, then the latest event value."""
    value = features.case_attr(prefix, name)
    if value is ABSENT:
        value = features.event_attr(prefix, name)
    return value


def func_value(prefix: Prefix, func: Func):
    """Raw (unnormalized) value of a function symbol on one prefix."""
    if func.name == "waittime":
        return features.wait_time(prefix, func.args[0], func.args[1])
    if func.name == "age":
        return attr_value(prefix, "age")
    if func.name == "cycletime":
        return features.cycle_time(prefix)
    if func.name == "attr":
        return attr_value(prefix, func.args[0])
    raise EvalError(f"unknown function {func.name!r}")


_PREDICATES: dict[str, Callable[..., int]] = {
    "hasact": features.has_act,
    "next": lambda p, a, b: features.next_after(p, a, b, mode="eventually"),
    "chainnext": lambda p, a, b: features.next_after(p, a, b, mode="immediately"),
    "precededby": features.preceded_by,
    "hascond": features.has_condition,
}


def _compare(value, op: str, threshold: float) -> Tri:
    if value is ABSENT:
        return Tri.NA
    try:
        x = float(value)
    except (TypeError, ValueError):
        return Tri.NA
    if op == "<":
        return _tri(x < threshold)
    if op == "<=":
        return _tri(x <= threshold)
    if op == ">":
        return _tri(x > threshold)
    if op == ">=":
        return _tri(x >= threshold)
    return _tri(x == threshold)


def predicate_truth(prefix: Prefix, name: str, args: tuple,
                    extra_predicates: Mapping[str, Callable] | None = None
                    ) -> bool:
    """Boolean value of a deterministic (non-P) predicate on one prefix."""
    fn = _PREDICATES.get(name)
    if fn is None and extra_predicates:
        fn = extra_predicates.get(name)
    if fn is None:
        raise EvalError(f"unknown predicate {name!r}")
    return bool(fn(prefix, *args))


def eval_crisp(rule: Rule | Expr, prefix: Prefix,
               prediction: int | None = None,
               extra_predicates: Mapping[str, Callable] | None = None) -> Tri:
    """Evaluate a rule's matrix on one prefix (quantifiers are stripped).

    `prediction` substitutes for the outcome predicate P and must be given
    when P occurs.  `extra_predicates` maps caller-registered predicate
    names to `fn(prefix, *args) -> bool`-like evaluators.
    """
    expr = rule
    if isinstance(expr, Rule):
        expr = expr.formula
    if isinstance(expr, (ForAll, Exists)):
        expr = expr.body

    def walk(node: Expr) -> Tri:
        if isinstance(node, Atom):
            if node.name == P_NAME:
                if prediction is None:
                    raise EvalError("formula mentions P but no prediction "
                                    "was supplied")
                return _tri(bool(prediction))
            fn = _PREDICATES.get(node.name)
            if fn is None and extra_predicates:
                fn = extra_predicates.get(node.name)
            if fn is None:
                raise EvalError(f"unknown predicate {node.name!r}")
            return _tri(bool(fn(prefix, *node.args)))
        if isinstance(node, Compare):
            return _compare(func_value(prefix, node.func), node.op, node.value)
        if isinstance(node, Not):
            inner = walk(node.body)
            if inner is Tri.NA:
                return Tri.NA
            return _tri(inner is Tri.FALSE)
        if isinstance(node, And):
            left, right = walk(node.left), walk(node.right)
            if Tri.FALSE in (left, right):
                return Tri.FALSE
            if Tri.NA in (left, right):
                return Tri.NA
            return Tri.TRUE
        if isinstance(node, Or):
            left, right = walk(node.left), walk(node.right)
            if Tri.TRUE in (left, right):
                return Tri.TRUE
            if Tri.NA in (left, right):
                return Tri.NA
            return Tri.FALSE
        if isinstance(node, Implies):
            antecedent = walk(node.left)
            if antecedent is not Tri.TRUE:
                return Tri.NA
            return walk(node.right)
        raise TypeError(f"not a formula node: {node!r}")

    return walk(expr)


def is_satisfied(result: Tri) -> bool:
    """Satisfied = not violated; NA counts as (vacuously) satisfied."""
    return result is not Tri.FALSE


def is_applicable(result: Tri) -> bool:
    return result is not Tri.NA
