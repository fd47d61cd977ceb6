"""Candidate-rule discovery from a labeled training log.

Three miners feed the knowledge-base compiler: control-flow constraints
over the five supported declarative templates, timing rules that tie a
waiting-time threshold to the outcome, and payload rules that tie an
attribute split to the outcome.  All miners are deterministic given the
log and configuration, and everything they emit round-trips through the
rule DSL so the output file can be compiled directly.

Association statistics are plain support / confidence / lift counted over
full traces.  Outcome-linked rules are emitted over the label class they
push against (consequent NOT P quantifies over l+, consequent P over l-),
which is where such a rule carries training signal.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .eventlog import ABSENT, EventLog, LabelingSpec, Prefix, Trace
from .features import wait_time, case_attr, event_attr
from .kb.ast import (
    Atom,
    Category,
    CATEGORY_TO_MODE,
    Compare,
    Domain,
    ForAll,
    Func,
    Implies,
    Not,
    Rule,
    derive_category,
    pretty_print,
)
from .kb.base import FeatureSchema, validate_rule
from .kb.crisp import eval_crisp, is_satisfied
from .kb.dsl import parse_rules
from .kb.translate import TEMPLATES, translate_declare

_BINARY_TEMPLATES = ("response", "chain_response", "precedence",
                     "not_coexistence")
# a directly-follows constraint entails the eventual-follows one, so when
# both pass the threshold only the stronger is kept
_SUBSUMES = {"chain_response": "response"}

_ID_UNSAFE = re.compile(r"[^A-Za-z0-9_]+")


def _slug(text: str) -> str:
    return _ID_UNSAFE.sub("_", text).strip("_").lower()


def _full_prefix(trace: Trace, label: int = 0) -> Prefix:
    return Prefix(trace, len(trace.events), label)


@dataclass(frozen=True)
class DeclareConstraint:
    """A control-flow template instance with its log statistics."""

    template: str
    activities: tuple[str, ...]
    support: float
    confidence: float | None  # None when the constraint was never activated

    def to_rule(self, conjunction_form: bool = False) -> Rule:
        rule = translate_declare(self.template, self.activities,
                                 conjunction_form=conjunction_form)
        return dataclasses.replace(rule, source="mined")


@dataclass(frozen=True)
class MinedRule:
    """A rule plus the association statistics that justified it."""

    kind: str  # control_flow | temporal | payload | manual
    rule: Rule
    support: float
    confidence: float | None = None
    lift: float | None = None

    def stats_comment(self) -> str:
        parts = [f"kind={self.kind}", f"support={self.support:.3f}"]
        if self.confidence is not None:
            parts.append(f"confidence={self.confidence:.3f}")
        if self.lift is not None:
            parts.append(f"lift={self.lift:.3f}")
        return "# " + " ".join(parts)


def _activation(template: str, acts: tuple[str, ...],
                present: set[str]) -> bool:
    if template == "existence":
        return True
    if template in ("response", "chain_response"):
        return acts[0] in present
    if template == "precedence":
        return acts[1] in present
    return acts[0] in present or acts[1] in present  # not_coexistence


def mine_declare(log: EventLog, min_support: float,
                 prune_subsumed: bool = True) -> list[DeclareConstraint]:
    """Scan every template instance over the log's activity alphabet.

    Support is the fraction of traces whose full run satisfies the
    constraint under crisp evaluation; a trace that never activates the
    constraint satisfies it vacuously.  Confidence restricts the count to
    activating traces.  With `prune_subsumed`, an eventual-follows
    constraint is dropped when the directly-follows constraint on the same
    pair also passes.
    """
    if min_support <= 0:
        raise ValueError("min_support must be positive")
    traces = [t for t in log.traces if t.events]
    if not traces:
        return []
    alphabet = sorted({e.activity for t in traces for e in t.events})
    presence = [({e.activity for e in t.events}, _full_prefix(t))
                for t in traces]

    candidates: list[tuple[str, tuple[str, ...]]] = []
    candidates.extend(("existence", (a,)) for a in alphabet)
    for template in _BINARY_TEMPLATES:
        for a in alphabet:
            for b in alphabet:
                if a == b:
                    continue
                if template == "not_coexistence" and a > b:
                    continue  # symmetric template, unordered pair
                candidates.append((template, (a, b)))

    results: list[DeclareConstraint] = []
    for template, acts in sorted(candidates):
        rule = translate_declare(template, acts)
        sat = act = sat_act = 0
        for present, prefix in presence:
            ok = is_satisfied(eval_crisp(rule, prefix))
            sat += ok
            if _activation(template, acts, present):
                act += 1
                sat_act += ok
        support = sat / len(traces)
        if support < min_support:
            continue
        confidence = sat_act / act if act else None
        results.append(DeclareConstraint(template, acts, support, confidence))

    if prune_subsumed:
        passed = {(c.template, c.activities) for c in results}
        results = [c for c in results
                   if all((strong, c.activities) not in passed
                          for strong, weak in _SUBSUMES.items()
                          if weak == c.template)]
    return results


def declare_to_mined(constraint: DeclareConstraint) -> MinedRule:
    return MinedRule("control_flow", constraint.to_rule(),
                     support=constraint.support,
                     confidence=constraint.confidence)


def _labeled_traces(log: EventLog,
                    labeling: LabelingSpec) -> list[tuple[Trace, int]]:
    out = []
    for trace in log.traces:
        if not trace.events:
            continue
        label, missing = labeling.label(trace)
        if not missing:
            out.append((trace, label))
    return out


def _outcome_rule(rule_id: str, antecedent, positive: bool) -> Rule:
    """IF antecedent THEN P (over l-) or THEN NOT P (over l+)."""
    domain = Domain.NEG if positive else Domain.POS
    consequent = Atom("P") if positive else Not(Atom("P"))
    body = Implies(antecedent, consequent)
    category = derive_category(domain, body)
    return Rule(rule_id, ForAll(domain, body), category,
                CATEGORY_TO_MODE[category], source="mined")


def _association(match_labels: list[int], base_pos: float, base_neg: float,
                 n_total: int, positive: bool) -> tuple[float, float, float]:
    """(support, confidence, lift) of antecedent -> outcome."""
    hits = sum(match_labels) if positive else \
        len(match_labels) - sum(match_labels)
    support = hits / n_total
    confidence = hits / len(match_labels)
    base = base_pos if positive else base_neg
    lift = confidence / base if base > 0 else float("inf")
    return support, confidence, lift


def _generality(entry: MinedRule) -> float:
    compare = entry.rule.body.left
    return compare.value if compare.op == "<=" else -compare.value


def mine_temporal(log: EventLog, pairs: Sequence[tuple[str, str]],
                  threshold_grid: Sequence[float], labeling: LabelingSpec,
                  min_confidence: float = 0.8, min_support: float = 0.05,
                  warnings: list[str] | None = None) -> list[MinedRule]:
    """Associate waiting-time thresholds with the outcome.

    For each activity pair, each grid threshold t splits the traces where
    the wait is observed into wait <= t and wait > t; each side is tested
    against each outcome polarity, and the best-confidence passing rule
    per (pair, direction) is emitted.  Pairs that never co-occur are
    skipped with a warning.
    """
    labeled = _labeled_traces(log, labeling)
    results: list[MinedRule] = []
    for a, b in pairs:
        waits: list[tuple[float, int]] = []
        for trace, label in labeled:
            w = wait_time(_full_prefix(trace, label), a, b)
            if w is not ABSENT:
                waits.append((w, label))
        if not waits:
            if warnings is not None:
                warnings.append(f"pair ({a}, {b}) never co-occurs; skipped")
            continue
        n = len(waits)
        base_pos = sum(lb for _, lb in waits) / n
        base_neg = 1.0 - base_pos
        best: dict[str, MinedRule] = {}
        for t in threshold_grid:
            below = [lb for w, lb in waits if w <= t]
            above = [lb for w, lb in waits if w > t]
            sides = (("le", below, "<="), ("gt", above, ">"))
            for direction, side, op in sides:
                if not side:
                    continue
                for positive in (False, True):
                    if positive and base_pos == 0 or \
                            not positive and base_neg == 0:
                        continue
                    support, confidence, lift = _association(
                        side, base_pos, base_neg, n, positive)
                    if confidence < min_confidence or support < min_support:
                        continue
                    suffix = "p" if positive else "notp"
                    rid = f"wait_{_slug(a)}_{_slug(b)}_{direction}_{suffix}"
                    antecedent = Compare(Func("waittime", (a, b)), op,
                                         float(t))
                    # ties prefer the more inclusive threshold: larger t
                    # for <=, smaller t for >
                    generality = float(t) if direction == "le" else -float(t)
                    candidate = MinedRule(
                        "temporal", _outcome_rule(rid, antecedent, positive),
                        support=support, confidence=confidence, lift=lift)
                    key = f"{direction}_{suffix}"
                    prev = best.get(key)
                    if prev is None or (candidate.confidence,
                                        candidate.support, generality) > \
                            (prev.confidence, prev.support,
                             _generality(prev)):
                        best[key] = candidate
        results.extend(best[k] for k in sorted(best))
    return results


@dataclass(frozen=True)
class PayloadMiningConfig:
    lift_min: float = 1.5
    support_min: float = 0.1
    quantiles: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5,
                                    0.6, 0.7, 0.8, 0.9)


def _trace_attr(trace: Trace, name: str):
    prefix = _full_prefix(trace)
    value = case_attr(prefix, name)
    if value is ABSENT:
        value = event_attr(prefix, name)
    return value


def _payload_attributes(traces: Iterable[Trace]) -> dict[str, str]:
    """attribute name -> 'numeric' | 'boolean' | 'other'."""
    kinds: dict[str, str] = {}
    for trace in traces:
        pools = [trace.case_payload] + [e.payload for e in trace.events]
        for pool in pools:
            for name, value in pool.items():
                if isinstance(value, bool):
                    kind = "boolean"
                elif isinstance(value, (int, float)):
                    kind = "numeric"
                else:
                    kind = "other"
                prev = kinds.get(name)
                if prev is None:
                    kinds[name] = kind
                elif prev != kind:
                    kinds[name] = "other"
    return kinds


def mine_payload(log: EventLog, labeling: LabelingSpec,
                 config: PayloadMiningConfig = PayloadMiningConfig(),
                 warnings: list[str] | None = None) -> list[MinedRule]:
    """Associate attribute splits with the outcome.

    Numeric attributes are scanned at the quantiles of their per-trace
    distribution in both directions; boolean attributes at their truth
    value.  The best-lift passing rule per (attribute, polarity) is kept.
    Attributes whose values are neither numeric nor boolean cannot be
    written in the rule DSL and are skipped with a warning.
    """
    labeled = _labeled_traces(log, labeling)
    if not labeled:
        return []
    kinds = _payload_attributes(t for t, _ in labeled)
    results: list[MinedRule] = []
    for name in sorted(kinds):
        kind = kinds[name]
        if kind == "other":
            if warnings is not None:
                warnings.append(
                    f"attribute {name!r} is not numeric or boolean; skipped")
            continue
        observed = []
        for trace, label in labeled:
            value = _trace_attr(trace, name)
            if value is not ABSENT:
                observed.append((value, label))
        if not observed:
            continue
        n = len(observed)
        base_pos = sum(lb for _, lb in observed) / n
        base_neg = 1.0 - base_pos
        candidates: list[tuple] = []
        if kind == "numeric":
            values = np.array([float(v) for v, _ in observed])
            cuts = sorted({round(float(q), 9)
                           for q in np.quantile(values, config.quantiles)})
            for cut in cuts:
                for op, tag, side in (
                        ("<=", f"le_{cut:g}",
                         [lb for v, lb in observed if float(v) <= cut]),
                        (">", f"gt_{cut:g}",
                         [lb for v, lb in observed if float(v) > cut])):
                    if side:
                        antecedent = Compare(Func("attr", (name,)), op, cut)
                        candidates.append((antecedent, tag, side))
        else:
            truthy = [lb for v, lb in observed if v]
            falsy = [lb for v, lb in observed if not v]
            if truthy:
                candidates.append((Atom("hascond", (name,)), "true", truthy))
            if falsy:
                candidates.append((Not(Atom("hascond", (name,))), "false",
                                   falsy))
        best: dict[bool, MinedRule] = {}
        for antecedent, tag, side in candidates:
            for positive in (False, True):
                if positive and base_pos == 0 or \
                        not positive and base_neg == 0:
                    continue
                support, confidence, lift = _association(
                    side, base_pos, base_neg, n, positive)
                if lift < config.lift_min or support < config.support_min:
                    continue
                suffix = "p" if positive else "notp"
                rid = f"attr_{_slug(name)}_{_slug(tag)}_{suffix}"
                candidate = MinedRule(
                    "payload", _outcome_rule(rid, antecedent, positive),
                    support=support, confidence=confidence, lift=lift)
                prev = best.get(positive)
                if prev is None or (candidate.lift, candidate.support) > \
                        (prev.lift, prev.support):
                    best[positive] = candidate
        results.extend(best[k] for k in sorted(best))
    return results


def canonical_form(rule: Rule) -> str:
    """Identity-free rendering used to detect duplicate rules."""
    return pretty_print(dataclasses.replace(rule, id="_"))


def merge_manual(mined: Sequence[MinedRule], manual: str,
                 schema: FeatureSchema | None = None,
                 extra_predicates: Iterable[str] = ()) -> list[MinedRule]:
    """Append hand-written DSL rules, dropping mined duplicates.

    A mined rule whose formula matches a manual one is removed so the
    manual copy (and its provenance) wins.  When a schema is given every
    manual rule is validated against it immediately.
    """
    extras = tuple(extra_predicates)
    manual_rules = parse_rules(manual, extra_predicates=extras)
    if schema is not None:
        for rule in manual_rules:
            validate_rule(rule, schema, set(extras))
    manual_keys = {canonical_form(r) for r in manual_rules}
    merged = [m for m in mined if canonical_form(m.rule) not in manual_keys]
    merged.extend(MinedRule("manual", rule, support=float("nan"))
                  for rule in manual_rules)
    return merged


def write_rules(mined: Sequence[MinedRule],
                header: str | None = None) -> str:
    """Render mined rules as a rule-DSL document with stats comments."""
    lines: list[str] = []
    if header:
        lines.extend(f"# {line}" for line in header.splitlines())
        lines.append("")
    seen: set[str] = set()
    for entry in mined:
        rule = entry.rule
        if rule.id in seen:
            raise ValueError(f"duplicate rule id {rule.id!r} in output")
        seen.add(rule.id)
        if entry.kind != "manual":
            lines.append(entry.stats_comment())
        lines.append(pretty_print(rule))
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"
