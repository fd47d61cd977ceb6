"""Concrete rule syntax: one rule per line, `#` comments.

    RULE <id> [category: <a|b|c|long-name>] FORALL <l|l+|l-> : <expr>
    <expr> := atom | comparison | NOT e | e AND e | e OR e | e -> e | (e)
    comparison := <func>(<args>) <op> <number>

Functions: waittime(a, b), age, cycletime, attr(name).  Predicates:
hasact(a), next(a, b), chainnext(a, b), precededby(b, a), hascond(name),
the learned outcome P, and caller-registered extras.  Activity arguments
containing spaces or punctuation are double-quoted.

An unknown zero-argument predicate is accepted when it stands in the
consequent of a label-class (mode A) rule; it is recorded as a derived
predicate whose meaning is the rule's antecedent.  EXISTS is accepted
wherever FORALL is.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .ast import (
    And,
    Atom,
    Category,
    CATEGORY_TO_MODE,
    Compare,
    Domain,
    Exists,
    Expr,
    ForAll,
    Func,
    Implies,
    Not,
    Or,
    P_NAME,
    Rule,
    RuleError,
    atoms_of,
    derive_category,
    funcs_of,
    split_implication,
    validate_category,
)

FUNC_ARITY = {"waittime": 2, "age": 0, "cycletime": 0, "attr": 1}
PRED_ARITY = {"hasact": 1, "next": 2, "chainnext": 2, "precededby": 2,
              "hascond": 1, P_NAME: 0}

_KEYWORDS = {"RULE", "FORALL", "EXISTS", "NOT", "AND", "OR"}

_CATEGORY_ALIASES = {
    "a": Category.CLASS_DEP_NON_OUTCOME,
    "b": Category.CLASS_DEP_OUTCOME,
    "c": Category.CLASS_INDEPENDENT,
    "class_dep_non_outcome": Category.CLASS_DEP_NON_OUTCOME,
    "class_dep_outcome": Category.CLASS_DEP_OUTCOME,
    "class_independent": Category.CLASS_INDEPENDENT,
}


class DslError(ValueError):
    """Rule document syntax or symbol-resolution error (line/col in message)."""


@dataclass(frozen=True)
class _Token:
    kind: str  # kw | name | number | quoted | op | arrow | sym | end
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""(?P<ws>\s+)
      | (?P<comment>\#.*)
      | (?P<arrow>->)
      | (?P<op><=|>=|==|<|>|=)
      | (?P<number>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+)
      | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<quoted>"(?:[^"\\]|\\.)*")
      | (?P<sym>[(),:+\-])
    """,
    re.VERBOSE,
)


def _tokenize(text: str, line: int) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise DslError(f"line {line}, col {pos + 1}: unexpected character "
                           f"{text[pos]!r}")
        kind = m.lastgroup
        raw = m.group()
        col = pos + 1
        pos = m.end()
        if kind in ("ws", "comment"):
            continue
        if kind == "name" and raw in _KEYWORDS:
            tokens.append(_Token("kw", raw, line, col))
        elif kind == "quoted":
            inner = raw[1:-1].replace('\\"', '"').replace("\\\\", "\\")
            tokens.append(_Token("quoted", inner, line, col))
        elif kind == "op" and raw == "==":
            tokens.append(_Token("op", "=", line, col))
        else:
            tokens.append(_Token(kind, raw, line, col))
    tokens.append(_Token("end", "", line, len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, tokens: Sequence[_Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def take(self) -> _Token:
        tok = self.tokens[self.i]
        if tok.kind != "end":
            self.i += 1
        return tok

    def fail(self, message: str) -> DslError:
        tok = self.peek()
        got = "end of line" if tok.kind == "end" else repr(tok.text)
        return DslError(f"line {tok.line}, col {tok.col}: {message}, got {got}")

    def expect(self, kind: str, text: str | None = None,
               what: str | None = None) -> _Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            raise self.fail(f"expected {what or text or kind}")
        return self.take()

    # -- grammar -------------------------------------------------------

    def parse_rule(self) -> Rule:
        self.expect("kw", "RULE")
        rule_id = self.expect("name", what="a rule identifier").text
        category = None
        if self.peek().kind == "name" and self.peek().text == "category":
            self.take()
            self.expect("sym", ":", what="':' after category")
            value = self.expect("name", what="a category name").text
            category = _CATEGORY_ALIASES.get(value.lower())
            if category is None:
                raise DslError(
                    f"line {self.peek().line}: unknown category {value!r}; "
                    f"use a, b, c or {sorted(set(_CATEGORY_ALIASES) - set('abc'))}")
        quant_tok = self.peek()
        if quant_tok.kind != "kw" or quant_tok.text not in ("FORALL", "EXISTS"):
            raise self.fail("expected FORALL or EXISTS")
        self.take()
        domain = self._parse_domain()
        self.expect("sym", ":", what="':' before the rule body")
        body = self._parse_expr()
        end = self.peek()
        if end.kind != "end":
            raise self.fail("unexpected trailing input")
        formula = (ForAll(domain, body) if quant_tok.text == "FORALL"
                   else Exists(domain, body))
        if category is None:
            category = derive_category(domain, body)
        try:
            validate_category(rule_id, category, domain, body)
        except RuleError as err:
            raise DslError(f"line {quant_tok.line}: {err}") from None
        return Rule(id=rule_id, formula=formula, category=category,
                    mode=CATEGORY_TO_MODE[category])

    def _parse_domain(self) -> Domain:
        tok = self.expect("name", what="a domain (l, l+ or l-)")
        if tok.text != "l":
            raise DslError(f"line {tok.line}, col {tok.col}: expected domain "
                           f"l, l+ or l-, got {tok.text!r}")
        nxt = self.peek()
        if nxt.kind == "sym" and nxt.text in ("+", "-"):
            self.take()
            return Domain.POS if nxt.text == "+" else Domain.NEG
        return Domain.ALL

    def _parse_expr(self) -> Expr:
        left = self._parse_or()
        if self.peek().kind == "arrow":
            self.take()
            return Implies(left, self._parse_expr())  # right-associative
        return left

    def _parse_or(self) -> Expr:
        node = self._parse_and()
        while self.peek().kind == "kw" and self.peek().text == "OR":
            self.take()
            node = Or(node, self._parse_and())
        return node

    def _parse_and(self) -> Expr:
        node = self._parse_unary()
        while self.peek().kind == "kw" and self.peek().text == "AND":
            self.take()
            node = And(node, self._parse_unary())
        return node

    def _parse_unary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "kw" and tok.text == "NOT":
            self.take()
            return Not(self._parse_unary())
        if tok.kind == "sym" and tok.text == "(":
            self.take()
            inner = self._parse_expr()
            self.expect("sym", ")", what="')'")
            return inner
        return self._parse_application()

    def _parse_application(self) -> Expr:
        name_tok = self.peek()
        if name_tok.kind != "name":
            raise self.fail("expected a predicate, function or '('")
        self.take()
        args: tuple[str, ...] = ()
        if self.peek().kind == "sym" and self.peek().text == "(":
            self.take()
            collected = [self._parse_arg()]
            while self.peek().kind == "sym" and self.peek().text == ",":
                self.take()
                collected.append(self._parse_arg())
            self.expect("sym", ")", what="')'")
            args = tuple(collected)
        nxt = self.peek()
        if nxt.kind == "op":
            op = self.take().text
            value = self._parse_threshold()
            return Compare(Func(name_tok.text, args), op, value)
        return Atom(name_tok.text, args)

    def _parse_arg(self) -> str:
        tok = self.peek()
        if tok.kind in ("name", "quoted"):
            return self.take().text
        if tok.kind == "number":
            return self.take().text
        raise self.fail("expected an argument name")

    def _parse_threshold(self) -> float:
        sign = 1.0
        if self.peek().kind == "sym" and self.peek().text == "-":
            self.take()
            sign = -1.0
        tok = self.expect("number", what="a numeric threshold")
        return sign * float(tok.text)


def _validate_symbols(rule: Rule, line: int,
                      extra_predicates: Iterable[str]) -> Rule:
    extras = set(extra_predicates)
    antecedent, consequent = split_implication(rule.body)
    consequent_atoms = set(atoms_of(consequent))
    derived: list[str] = []
    for func in funcs_of(rule.body):
        arity = FUNC_ARITY.get(func.name)
        if arity is None:
            hint = ""
            if func.name in PRED_ARITY:
                hint = f"; {func.name} is a predicate, not a function"
            raise DslError(f"line {line}: rule {rule.id!r} compares unknown "
                           f"function {func.name!r}{hint}")
        if len(func.args) != arity:
            raise DslError(f"line {line}: rule {rule.id!r}: {func.name} takes "
                           f"{arity} argument(s), got {len(func.args)}")
    for atom in atoms_of(rule.body):
        if atom.name == P_NAME:
            if atom.args:
                raise DslError(f"line {line}: rule {rule.id!r}: P takes no "
                               "arguments")
            continue
        if atom.name in PRED_ARITY:
            if len(atom.args) != PRED_ARITY[atom.name]:
                raise DslError(
                    f"line {line}: rule {rule.id!r}: {atom.name} takes "
                    f"{PRED_ARITY[atom.name]} argument(s), got {len(atom.args)}")
            continue
        if atom.name in extras:
            continue
        if atom.name in FUNC_ARITY:
            raise DslError(f"line {line}: rule {rule.id!r}: {atom.name} is a "
                           "function; compare it to a number")
        if (rule.category is Category.CLASS_DEP_NON_OUTCOME
                and atom in consequent_atoms
                and (antecedent is None or atom not in atoms_of(antecedent))):
            if atom.args:
                raise DslError(f"line {line}: rule {rule.id!r}: derived "
                               f"predicate {atom.name!r} takes no arguments")
            derived.append(atom.name)
            continue
        raise DslError(f"line {line}: rule {rule.id!r} uses unknown predicate "
                       f"{atom.name!r}")
    if derived:
        return Rule(id=rule.id, formula=rule.formula, category=rule.category,
                    mode=rule.mode, source=rule.source,
                    derived_predicates=tuple(dict.fromkeys(derived)))
    return rule


def parse_rules(document: str,
                extra_predicates: Iterable[str] = ()) -> list[Rule]:
    """Parse a rule document into typed rules.

    Raises :class:`DslError` with line/column on syntax errors, unknown
    symbols, arity mismatches, duplicate rule ids, or category annotations
    contradicting rule structure.
    """
    rules: list[Rule] = []
    seen: dict[str, int] = {}
    for lineno, raw_line in enumerate(document.splitlines(), start=1):
        stripped = raw_line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = _tokenize(raw_line, lineno)
        if tokens[0].kind == "end":
            continue
        rule = _Parser(tokens).parse_rule()
        rule = _validate_symbols(rule, lineno, extra_predicates)
        if rule.id in seen:
            raise DslError(f"line {lineno}: duplicate rule id {rule.id!r} "
                           f"(first defined on line {seen[rule.id]})")
        seen[rule.id] = lineno
        rules.append(rule)
    return rules


def parse_single(text: str, extra_predicates: Iterable[str] = ()) -> Rule:
    """Parse exactly one rule line."""
    rules = parse_rules(text, extra_predicates)
    if len(rules) != 1:
        raise DslError(f"expected exactly one rule, found {len(rules)}")
    return rules[0]
