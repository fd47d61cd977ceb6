"""Prediction metrics, rule-compliance measurement, and the ablation grid.

Compliance asks a different question than accuracy: for each rule and each
test prefix, does the model's predicted outcome (substituted for the
learned predicate) keep the rule satisfied?  Rules that do not apply to a
prefix (missing attributes, untriggered antecedents) are excluded from
both the numerator and the denominator.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .eventlog import Prefix
from .features import FeatureSchema, encode_batch
from .kb.ast import Mode, Rule
from .kb.base import KnowledgeBase
from .kb.crisp import Tri, eval_crisp, is_satisfied

# -- prediction metrics -------------------------------------------------


def threshold_outputs(outputs: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Binarize model outputs; a value exactly at the threshold maps to 1."""
    outputs = np.asarray(outputs, dtype=np.float64)
    return (outputs >= threshold).astype(np.int64)


def classify(model, prefixes: Sequence[Prefix],
             expansion: np.ndarray | None = None,
             threshold: float = 0.5) -> np.ndarray:
    """Binary outcome predictions for a sequence of prefixes.

    `expansion` optionally carries precomputed feature-expansion slots;
    when omitted they default to zeros of the model's expansion width.
    """
    batch = encode_batch(list(prefixes), model.schema, expansion=expansion)
    return threshold_outputs(model.predict(batch), threshold)


def accuracy(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ValueError("labels and predictions must align and be non-empty")
    return float(np.mean(y_true == y_pred))


def binary_f1(y_true, y_pred) -> float:
    """Positive-class F1.  Degenerate all-negative agreement scores 0."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ValueError("labels and predictions must align and be non-empty")
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 2 * tp / denom


# -- compliance ---------------------------------------------------------


@dataclass(frozen=True)
class RuleCompliance:
    rule_id: str
    applicable: int
    satisfied: int

    @property
    def score(self) -> float | None:
        """satisfied / applicable, or None when the rule never applied."""
        if self.applicable == 0:
            return None
        return self.satisfied / self.applicable


@dataclass(frozen=True)
class ComplianceReport:
    per_rule: tuple[RuleCompliance, ...]
    n_prefixes: int

    @property
    def overall(self) -> float | None:
        """Micro score: pooled satisfied / pooled applicable."""
        applicable = sum(r.applicable for r in self.per_rule)
        if applicable == 0:
            return None
        return sum(r.satisfied for r in self.per_rule) / applicable

    @property
    def macro(self) -> float | None:
        """Mean of per-rule scores over rules that applied at least once."""
        scores = [r.score for r in self.per_rule if r.score is not None]
        if not scores:
            return None
        return float(np.mean(scores))

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "macro": self.macro,
            "n_prefixes": self.n_prefixes,
            "per_rule": [
                {"rule_id": r.rule_id, "applicable": r.applicable,
                 "satisfied": r.satisfied, "score": r.score}
                for r in self.per_rule
            ],
        }

    def render(self) -> str:
        lines = [f"compliance over {self.n_prefixes} prefix(es):"]
        for r in self.per_rule:
            shown = "N/A" if r.score is None else f"{r.score:.4f}"
            lines.append(f"  {r.rule_id}: {r.satisfied}/{r.applicable}"
                         f" = {shown}")
        overall = "N/A" if self.overall is None else f"{self.overall:.4f}"
        macro = "N/A" if self.macro is None else f"{self.macro:.4f}"
        lines.append(f"  overall (micro) = {overall}, macro = {macro}")
        return "\n".join(lines)


def compliance_rules(kb: KnowledgeBase) -> list[Rule]:
    """Rules that participate in compliance scoring.

    Outcome rules are checked with the predicted label substituted;
    class-independent rules on the prefix alone.  Feature-expansion rules
    restate their own slot definition and carry no checkable consequent,
    so they are excluded.
    """
    return [r for r in kb.rules if r.mode in (Mode.B, Mode.C)]


def compliance_score(predictions, prefixes: Sequence[Prefix],
                     kb: KnowledgeBase,
                     extra_predicates: Mapping[str, Callable] | None = None
                     ) -> ComplianceReport:
    """Count, per rule, the prefixes it applies to and those it is
    satisfied on when the predicted outcome stands in for P.

    Quantifier domains are ignored here: every rule is checked against
    every prefix, and applicability comes from the three-valued
    evaluation alone.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    if predictions.shape != (len(prefixes),):
        raise ValueError("predictions must align with prefixes")
    rows = []
    for rule in compliance_rules(kb):
        applicable = 0
        satisfied = 0
        for prefix, pred in zip(prefixes, predictions):
            verdict = eval_crisp(rule, prefix, prediction=int(pred),
                                 extra_predicates=extra_predicates)
            if verdict is Tri.NA:
                continue
            applicable += 1
            if verdict is Tri.TRUE:
                satisfied += 1
        rows.append(RuleCompliance(rule.id, applicable, satisfied))
    return ComplianceReport(per_rule=tuple(rows), n_prefixes=len(prefixes))


def is_compliant(prefix: Prefix, kb: KnowledgeBase,
                 extra_predicates: Mapping[str, Callable] | None = None
                 ) -> bool:
    """True when no scoring rule is violated under the prefix's own label."""
    for rule in compliance_rules(kb):
        verdict = eval_crisp(rule, prefix, prediction=prefix.label,
                             extra_predicates=extra_predicates)
        if not is_satisfied(verdict):
            return False
    return True


def build_compliance_test(test_raw: Sequence[Prefix], kb: KnowledgeBase,
                          mix: float = 0.5, seed: int = 0,
                          extra_predicates: Mapping[str, Callable] | None = None
                          ) -> tuple[list[Prefix], float]:
    """Compose a test set with a target fraction of rule-compliant prefixes.

    The input is partitioned into prefixes whose true label keeps every
    applicable rule satisfied and the remainder; the two pools are sampled
    (seeded) toward `mix`.  Returns the shuffled prefixes and the achieved
    compliant fraction, which falls below `mix` when the compliant pool is
    too small.
    """
    if not 0.0 <= mix <= 1.0:
        raise ValueError("mix must be in [0, 1]")
    test_raw = list(test_raw)
    if not test_raw:
        raise ValueError("empty test pool")
    compliant = [p for p in test_raw
                 if is_compliant(p, kb, extra_predicates)]
    rest = [p for p in test_raw if not is_compliant(p, kb, extra_predicates)]
    if mix > 0 and not compliant:
        raise ValueError(
            "no rule-compliant prefixes available under the true labels; "
            "review the rules or the log before building a compliance "
            "test set")
    n = len(test_raw)
    want_compliant = round(mix * n)
    n_compliant = min(want_compliant, len(compliant))
    n_rest = min(n - n_compliant, len(rest))
    rng = np.random.default_rng(seed)
    chosen = ([compliant[i] for i in
               rng.choice(len(compliant), n_compliant, replace=False)]
              if n_compliant else [])
    chosen += ([rest[i] for i in
                rng.choice(len(rest), n_rest, replace=False)]
               if n_rest else [])
    order = rng.permutation(len(chosen))
    result = [chosen[i] for i in order]
    achieved = n_compliant / len(result) if result else 0.0
    return result, achieved


# -- ablation grid ------------------------------------------------------

ABLATION_GRID = ("data", "A", "B", "AB", "AC", "BC", "ABC")
BASELINES = ("bce", "fe")


@dataclass
class ExperimentResult:
    variant: str
    seeds: tuple[int, ...]
    accuracy_mean: float | None = None
    accuracy_std: float | None = None
    f1_mean: float | None = None
    f1_std: float | None = None
    compliance_mean: float | None = None
    compliance_std: float | None = None
    compliance_macro_mean: float | None = None
    reports: list = field(default_factory=list)
    per_seed: list = field(default_factory=list)
    config_hash: str = ""
    errors: list = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "variant": self.variant,
            "seeds": list(self.seeds),
            "accuracy_mean": self.accuracy_mean,
            "accuracy_std": self.accuracy_std,
            "f1_mean": self.f1_mean,
            "f1_std": self.f1_std,
            "compliance_mean": self.compliance_mean,
            "compliance_std": self.compliance_std,
            "compliance_macro_mean": self.compliance_macro_mean,
            "config_hash": self.config_hash,
            "per_seed": self.per_seed,
            "errors": self.errors,
        }


def _agg(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def experiment_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def variant_modes(variant: str) -> frozenset:
    """Injection-mode set for a grid cell name."""
    if variant in ("data", "bce", "fe"):
        return frozenset()
    letters = set(variant)
    if not letters <= {"A", "B", "C"}:
        raise ValueError(f"unknown ablation variant {variant!r}")
    return frozenset(letters)


def run_variant(variant: str, seed: int, kb: KnowledgeBase,
                splits: tuple, schema: FeatureSchema,
                backbone_config, train_config,
                extra_predicates: Mapping[str, Callable] | None = None,
                history_path=None) -> dict:
    """Train and score one grid cell for one seed.

    Returns a record with accuracy, F1 and the compliance report on the
    test split.
    """
    from . import ltn
    from .neural import PredicateModel

    train_prefixes, val_prefixes, test_prefixes = splits
    objective = "bce" if variant in ("bce", "fe") else "satagg"
    modes = variant_modes(variant)
    config = dataclasses.replace(train_config, modes=modes,
                                 objective=objective, seed=seed)

    if variant == "fe":
        width = len(kb.rules)
        slot_fn = lambda prefixes: ltn.rule_slots(
            list(kb.rules), prefixes, schema, config.slope, extra_predicates)
    else:
        width = len(kb.mode_a)
        enabled = "A" in modes
        slot_fn = lambda prefixes: ltn.inject_mode_a(
            kb, prefixes, schema, enabled=enabled, slope=config.slope)[0]

    model = PredicateModel(backbone_config, schema, expansion_width=width,
                           seed=seed)
    result = ltn.train(model, kb, train_prefixes, val_prefixes, schema,
                       config, history_path=history_path,
                       extra_predicates=extra_predicates,
                       slot_fn=slot_fn)
    predictions = classify(result.model, test_prefixes,
                           expansion=slot_fn(test_prefixes))
    labels = np.asarray([p.label for p in test_prefixes], dtype=np.int64)
    report = compliance_score(predictions, test_prefixes, kb,
                              extra_predicates)
    return {
        "variant": variant,
        "seed": seed,
        "accuracy": accuracy(labels, predictions),
        "f1": binary_f1(labels, predictions),
        "compliance": report.overall,
        "compliance_macro": report.macro,
        "best_epoch": result.best_epoch,
        "report": report,
    }


def run_ablation(kb: KnowledgeBase, splits: tuple, schema: FeatureSchema,
                 backbone_config, train_config, seeds: Sequence[int],
                 variants: Sequence[str] | None = None,
                 out_dir=None,
                 extra_predicates: Mapping[str, Callable] | None = None,
                 jobs: int = 1) -> list[ExperimentResult]:
    """Sweep injection-mode combinations plus the two plain baselines.

    Each (variant, seed) cell trains independently; a failed cell is
    recorded on its variant's result and the sweep continues.  With
    `out_dir` set, per-variant records land in results.jsonl, a text
    summary table in summary.txt, and long-format per-seed compliance
    values for box plots in compliance_boxplot.tsv.
    """
    import concurrent.futures as cf
    from pathlib import Path

    if variants is None:
        variants = ABLATION_GRID + BASELINES
    seeds = tuple(seeds)
    results: list[ExperimentResult] = []

    def cell(variant: str, seed: int) -> dict:
        return run_variant(variant, seed, kb, splits, schema,
                           backbone_config, train_config, extra_predicates)

    for variant in variants:
        res = ExperimentResult(variant=variant, seeds=seeds)
        try:
            modes = sorted(variant_modes(variant))
        except ValueError as exc:
            res.errors = [{"seed": s, "error": str(exc)} for s in seeds]
            results.append(res)
            continue
        train_payload = dataclasses.asdict(train_config)
        train_payload["modes"] = modes
        train_payload["objective"] = ("bce" if variant in ("bce", "fe")
                                      else "satagg")
        payload = {
            "variant": variant,
            "backbone": backbone_config.to_dict(),
            "train": train_payload,
            "seeds": list(seeds),
        }
        res.config_hash = experiment_hash(payload)
        records: list[dict] = []
        if jobs > 1:
            with cf.ThreadPoolExecutor(max_workers=jobs) as pool:
                futures = {pool.submit(cell, variant, s): s for s in seeds}
                for fut in cf.as_completed(futures):
                    seed = futures[fut]
                    try:
                        records.append(fut.result())
                    except Exception as exc:
                        res.errors.append({"seed": seed, "error": str(exc)})
        else:
            for seed in seeds:
                try:
                    records.append(cell(variant, seed))
                except Exception as exc:
                    res.errors.append({"seed": seed, "error": str(exc)})
        records.sort(key=lambda r: r["seed"])
        res.reports = [r.pop("report") for r in records]
        res.per_seed = records
        res.accuracy_mean, res.accuracy_std = _agg(
            [r["accuracy"] for r in records])
        res.f1_mean, res.f1_std = _agg([r["f1"] for r in records])
        res.compliance_mean, res.compliance_std = _agg(
            [r["compliance"] for r in records
             if r["compliance"] is not None])
        macro_vals = [r["compliance_macro"] for r in records
                      if r["compliance_macro"] is not None]
        res.compliance_macro_mean = _agg(macro_vals)[0]
        results.append(res)

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "results.jsonl", "w") as fh:
            for res in results:
                fh.write(json.dumps(res.to_record()) + "\n")
        with open(out_dir / "summary.txt", "w") as fh:
            fh.write(render_summary(results) + "\n")
        with open(out_dir / "compliance_boxplot.tsv", "w") as fh:
            fh.write("variant\tseed\tcompliance\tcompliance_macro\n")
            for res in results:
                for rec in res.per_seed:
                    fh.write(f"{res.variant}\t{rec['seed']}\t"
                             f"{_tsv(rec['compliance'])}\t"
                             f"{_tsv(rec['compliance_macro'])}\n")
    return results


def _tsv(x) -> str:
    return "NA" if x is None else f"{x:.6f}"


def _ms(mean: float | None, std: float | None) -> str:
    if mean is None:
        return "N/A"
    return f"{mean:.3f} +/- {std:.3f}"


def render_summary(results: Sequence[ExperimentResult]) -> str:
    """Fixed-width table of per-variant means and standard deviations."""
    header = (f"{'variant':<10} {'accuracy':>18} {'f1':>18} "
              f"{'compliance':>18}")
    lines = [header, "-" * len(header)]
    for res in results:
        lines.append(
            f"{res.variant:<10} "
            f"{_ms(res.accuracy_mean, res.accuracy_std):>18} "
            f"{_ms(res.f1_mean, res.f1_std):>18} "
            f"{_ms(res.compliance_mean, res.compliance_std):>18}")
        for err in res.errors:
            lines.append(f"  failed seed {err['seed']}: {err['error']}")
    return "\n".join(lines)
