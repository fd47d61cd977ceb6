"""Formula AST for process rules, with category and injection-mode typing.

Rules are single-variable quantified formulas over prefixes.  The variable
is implicit: a quantifier binds a domain (all prefixes, positives only, or
negatives only) and every atom or function application in the body applies
to that one prefix.  "P" is the learned outcome predicate; everything else
is grounded deterministically.

Each rule belongs to one knowledge category, which determines how it is
injected into training:

* class_dep_non_outcome (mode A): quantifies over one label class, P does
  not occur; its antecedent becomes a feature-expansion slot.
* class_dep_outcome (mode B): quantifies over one label class and
  constrains P in the consequent; joins the satisfaction objective.
* class_independent (mode C): quantifies over all prefixes without P;
  aggregated over the prefixes that conform to it.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Union

P_NAME = "P"


class Domain(enum.Enum):
    ALL = "l"
    POS = "l+"
    NEG = "l-"


class Category(enum.Enum):
    CLASS_DEP_NON_OUTCOME = "class_dep_non_outcome"
    CLASS_DEP_OUTCOME = "class_dep_outcome"
    CLASS_INDEPENDENT = "class_independent"


class Mode(enum.Enum):
    A = "A"
    B = "B"
    C = "C"


CATEGORY_TO_MODE = {
    Category.CLASS_DEP_NON_OUTCOME: Mode.A,
    Category.CLASS_DEP_OUTCOME: Mode.B,
    Category.CLASS_INDEPENDENT: Mode.C,
}

COMPARE_OPS = ("<", "<=", ">", ">=", "=")


class RuleError(ValueError):
    """A rule is structurally invalid or inconsistent with its annotations."""


@dataclass(frozen=True)
class Func:
    """Deterministic function application, e.g. waittime(Surg, ATB)."""

    name: str
    args: tuple[str, ...] = ()


@dataclass(frozen=True)
class Atom:
    """Predicate application, e.g. hasact(Rev) or the bare outcome P."""

    name: str
    args: tuple[str, ...] = ()


@dataclass(frozen=True)
class Compare:
    func: Func
    op: str
    value: float

    def __post_init__(self):
        if self.op not in COMPARE_OPS:
            raise RuleError(f"unknown comparison operator {self.op!r}")


@dataclass(frozen=True)
class Not:
    body: "Expr"


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Implies:
    left: "Expr"
    right: "Expr"


Expr = Union[Atom, Compare, Not, And, Or, Implies]


@dataclass(frozen=True)
class ForAll:
    domain: Domain
    body: Expr


@dataclass(frozen=True)
class Exists:
    domain: Domain
    body: Expr


Quantified = Union[ForAll, Exists]


@dataclass(frozen=True)
class Rule:
    id: str
    formula: Quantified
    category: Category
    mode: Mode
    source: str = "manual"  # manual | mined | translated
    derived_predicates: tuple[str, ...] = field(default=())

    @property
    def domain(self) -> Domain:
        return self.formula.domain

    @property
    def body(self) -> Expr:
        return self.formula.body


# --------------------------------------------------------------------------
# structural queries


def mentions_p(expr: Expr) -> bool:
    if isinstance(expr, Atom):
        return expr.name == P_NAME
    if isinstance(expr, Compare):
        return False
    if isinstance(expr, Not):
        return mentions_p(expr.body)
    return mentions_p(expr.left) or mentions_p(expr.right)


def split_implication(expr: Expr) -> tuple[Expr | None, Expr]:
    """(antecedent, consequent) for a top-level implication, else (None, expr)."""
    if isinstance(expr, Implies):
        return expr.left, expr.right
    return None, expr


def atoms_of(expr: Expr) -> list[Atom]:
    if isinstance(expr, Atom):
        return [expr]
    if isinstance(expr, Compare):
        return []
    if isinstance(expr, Not):
        return atoms_of(expr.body)
    return atoms_of(expr.left) + atoms_of(expr.right)


def funcs_of(expr: Expr) -> list[Func]:
    if isinstance(expr, Atom):
        return []
    if isinstance(expr, Compare):
        return [expr.func]
    if isinstance(expr, Not):
        return funcs_of(expr.body)
    return funcs_of(expr.left) + funcs_of(expr.right)


# --------------------------------------------------------------------------
# categorization


def derive_category(domain: Domain, body: Expr) -> Category:
    """Category implied by the quantifier domain and the occurrence of P."""
    if mentions_p(body):
        return Category.CLASS_DEP_OUTCOME
    if domain is Domain.ALL:
        return Category.CLASS_INDEPENDENT
    return Category.CLASS_DEP_NON_OUTCOME


def validate_category(rule_id: str, category: Category, domain: Domain,
                      body: Expr) -> None:
    """Reject rules whose declared category contradicts their structure."""
    has_p = mentions_p(body)
    antecedent, consequent = split_implication(body)
    where = f"rule {rule_id!r}"
    if antecedent is not None and mentions_p(antecedent):
        raise RuleError(f"{where}: the outcome predicate P may not occur in "
                        "an antecedent")
    if category is Category.CLASS_DEP_OUTCOME:
        if not has_p:
            raise RuleError(f"{where}: declared outcome-dependent but P does "
                            "not occur")
        if domain is Domain.ALL:
            raise RuleError(f"{where}: outcome-dependent rules must quantify "
                            "over l+ or l-")
    elif category is Category.CLASS_INDEPENDENT:
        if has_p:
            raise RuleError(f"{where}: declared class-independent but "
                            "mentions P")
        if domain is not Domain.ALL:
            raise RuleError(f"{where}: class-independent rules must quantify "
                            "over l")
    else:  # CLASS_DEP_NON_OUTCOME
        if has_p:
            raise RuleError(f"{where}: declared non-outcome but mentions P")
        if domain is Domain.ALL:
            raise RuleError(f"{where}: label-class rules must quantify over "
                            "l+ or l-")


# --------------------------------------------------------------------------
# pretty-printing (inverse of the DSL parser)

_BARE_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")

_PREC_IMPLIES = 1
_PREC_OR = 2
_PREC_AND = 3
_PREC_NOT = 4
_PREC_ATOM = 5


def _quote_arg(arg: str) -> str:
    if _BARE_NAME.match(arg):
        return arg
    escaped = arg.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


def _format_number(x: float) -> str:
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def _format_app(name: str, args: tuple[str, ...]) -> str:
    if not args:
        return name
    return f"{name}({', '.join(_quote_arg(a) for a in args)})"


def _pretty(expr: Expr, min_prec: int) -> str:
    if isinstance(expr, Atom):
        return _format_app(expr.name, expr.args)
    if isinstance(expr, Compare):
        return (f"{_format_app(expr.func.name, expr.func.args)} {expr.op} "
                f"{_format_number(expr.value)}")
    if isinstance(expr, Not):
        text, prec = "NOT " + _pretty(expr.body, _PREC_NOT), _PREC_NOT
    elif isinstance(expr, And):
        text = _pretty(expr.left, _PREC_AND) + " AND " + _pretty(
            expr.right, _PREC_AND + 1)
        prec = _PREC_AND
    elif isinstance(expr, Or):
        text = _pretty(expr.left, _PREC_OR) + " OR " + _pretty(
            expr.right, _PREC_OR + 1)
        prec = _PREC_OR
    elif isinstance(expr, Implies):
        text = _pretty(expr.left, _PREC_IMPLIES + 1) + " -> " + _pretty(
            expr.right, _PREC_IMPLIES)
        prec = _PREC_IMPLIES
    else:
        raise TypeError(f"not a formula node: {expr!r}")
    if prec < min_prec:
        return f"({text})"
    return text


def pretty_expr(expr: Expr) -> str:
    return _pretty(expr, 0)


def pretty_print(rule: Rule) -> str:
    """One-line DSL rendering; parsing it reproduces the rule exactly."""
    quant = "FORALL" if isinstance(rule.formula, ForAll) else "EXISTS"
    return (f"RULE {rule.id} category: {rule.category.value} "
            f"{quant} {rule.domain.value} : {pretty_expr(rule.body)}")
