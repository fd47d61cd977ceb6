"""Declare templates rendered as quantified formulas over prefix predicates.

Each control-flow template becomes a class-independent rule: an
activation condition implying a fulfillment predicate, quantified over all
prefixes.  A trace that never triggers the activation satisfies the
constraint vacuously, mirroring finite-trace temporal-logic semantics.

The conjunction_form flag renders activation AND fulfillment instead of
the implication; it strengthens the rule to require the activation to
occur and is off by default.
"""

from __future__ import annotations

import re

from .ast import (
    And,
    Atom,
    Category,
    Domain,
    Expr,
    ForAll,
    Implies,
    Mode,
    Not,
    Rule,
)

TEMPLATES = ("existence", "response", "chain_response", "precedence",
             "not_coexistence")

_ID_SAFE = re.compile(r"[^A-Za-z0-9_]+")


def _slug(template: str, activities: tuple[str, ...]) -> str:
    parts = [template] + [_ID_SAFE.sub("_", a).strip("_") for a in activities]
    return "_".join(parts)


def _body(template: str, activities: tuple[str, ...],
          conjunction_form: bool) -> Expr:
    if template == "existence":
        (a,) = activities
        return Atom("hasact", (a,))
    if template == "not_coexistence":
        a, b = activities
        return Not(And(Atom("hasact", (a,)), Atom("hasact", (b,))))
    if template == "response":
        a, b = activities
        activation, fulfillment = Atom("hasact", (a,)), Atom("next", (a, b))
    elif template == "chain_response":
        a, b = activities
        activation, fulfillment = Atom("hasact", (a,)), Atom("chainnext", (a, b))
    elif template == "precedence":
        a, b = activities
        # b is admissible only once a has occurred
        activation, fulfillment = Atom("hasact", (b,)), Atom("precededby", (b, a))
    else:
        raise ValueError(f"unsupported template {template!r}; supported: "
                         f"{', '.join(TEMPLATES)}")
    if conjunction_form:
        return And(activation, fulfillment)
    return Implies(activation, fulfillment)


def translate_declare(template: str, activities: tuple[str, ...] | list[str],
                      rule_id: str | None = None,
                      conjunction_form: bool = False) -> Rule:
    """Build the class-independent rule for one Declare constraint."""
    activities = tuple(activities)
    expected = 1 if template == "existence" else 2
    if template not in TEMPLATES:
        raise ValueError(f"unsupported template {template!r}; supported: "
                         f"{', '.join(TEMPLATES)}")
    if len(activities) != expected:
        raise ValueError(f"{template} takes {expected} activity(ies), got "
                         f"{len(activities)}")
    body = _body(template, activities, conjunction_form)
    return Rule(
        id=rule_id or _slug(template, activities),
        formula=ForAll(Domain.ALL, body),
        category=Category.CLASS_INDEPENDENT,
        mode=Mode.C,
        source="translated",
    )
