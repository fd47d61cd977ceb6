"""Differentiable rule satisfaction and the training loop built on it.

Formulas from the knowledge base are grounded over mini-batches of encoded
prefixes: the learned outcome predicate comes from the neural model,
structural predicates and attribute comparisons from deterministic
evaluators, connectives from the product-logic operators, and quantifiers
from generalized-mean aggregators.  All active formula truths are pooled
into one satisfaction scalar and the model minimizes loss = 1 - sat_agg.

Three injection styles connect rules to learning:

* feature expansion (A): a rule's deterministic antecedent truth is
  appended to each prefix's static features, and the rule joins the
  aggregation with its consequent grounded as that same slot value;
* output refinement (B): rules mentioning the outcome predicate are
  grounded on the matching label slice of each batch, next to the two
  supervision formulas that encode the labels themselves;
* parallel constraints (C): label-independent rules are aggregated over
  the prefixes that do not crisply violate them, tying process
  conformance into the same satisfaction objective.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .autodiff import (
    Adam,
    NonFiniteError,
    Value,
    concat,
    log,
    mean,
    power,
    reshape,
    slice_,
    sub,
)
from .eventlog import ABSENT, Prefix
from .features import Batch, FeatureSchema, encode_batch
from .kb.ast import (
    And,
    Atom,
    Category,
    Compare,
    Domain,
    Exists,
    ForAll,
    Implies,
    Mode,
    Not,
    Or,
    P_NAME,
    Rule,
    RuleError,
    mentions_p,
)
from .kb.base import KnowledgeBase, func_feature_name
from .kb.crisp import eval_crisp, func_value, is_satisfied, predicate_truth
from .kb.fuzzy import DEFAULT_SLOPE, comparison_truth, t_and, t_implies, t_not, t_or
from .evaluation import accuracy, binary_f1, threshold_outputs

SUPERVISION_POS_ID = "axiom_pos"
SUPERVISION_NEG_ID = "axiom_neg"


class GroundingError(ValueError):
    pass


# -- quantifier aggregators ---------------------------------------------


def pmean(truths, p: float) -> Value:
    """Generalized mean ((1/n) sum u_i^p)^(1/p); the existential pool."""
    truths = _as_value(truths)
    if truths.data.size == 0:
        raise GroundingError("cannot aggregate an empty batch of truths")
    if p < 1:
        raise ValueError("aggregator exponent must be >= 1")
    return power(mean(power(truths, p)), 1.0 / p)


def pmean_error(truths, p: float) -> Value:
    """1 - pmean(1 - u, p); the universal pool.

    Penalizes deviation from full truth and approaches min(u) as p grows.
    """
    truths = _as_value(truths)
    if truths.data.size == 0:
        raise GroundingError("cannot aggregate an empty batch of truths")
    if p < 1:
        raise ValueError("aggregator exponent must be >= 1")
    return sub(1.0, pmean(sub(1.0, truths), p))


def sat_agg(formula_truths: Sequence, p_sat: float,
            weights: Sequence[float] | None = None) -> Value:
    """Pool per-formula truth degrees into one satisfaction scalar.

    Optional positive weights scale each formula's deviation term; the
    default is the unweighted form.
    """
    if not list(formula_truths):
        raise GroundingError("sat_agg needs at least one formula truth")
    vec = concat([reshape(_as_value(t), (1,)) for t in formula_truths])
    if weights is None:
        return pmean_error(vec, p_sat)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(formula_truths),) or np.any(w <= 0):
        raise ValueError("weights must be positive, one per formula")
    dev = power(sub(1.0, vec), p_sat)
    weighted = mean(dev * Value(w * len(w) / w.sum()))
    return sub(1.0, power(weighted, 1.0 / p_sat))


def _as_value(x) -> Value:
    if isinstance(x, Value):
        return x
    return Value(np.asarray(x, dtype=np.float64))


# -- grounding environment ----------------------------------------------


@dataclass
class GroundingEnv:
    """Everything needed to evaluate formulas on one encoded batch.

    `p_out` holds the model's outputs for the whole batch (required only
    when formulas mention the outcome predicate); `derived_slots` maps a
    feature-expansion rule's derived predicate name to its per-prefix
    slot values; `learned_predicates` optionally replaces named
    deterministic atoms with trainable models.
    """

    schema: FeatureSchema
    batch: Batch
    p_out: Value | None = None
    p_universal: float = 2.0
    p_exists: float = 2.0
    slope: float = DEFAULT_SLOPE
    extra_predicates: Mapping[str, Callable] | None = None
    learned_predicates: Mapping[str, object] | None = None
    derived_slots: Mapping[str, np.ndarray] | None = None
    _learned_cache: dict = field(default_factory=dict, repr=False)

    def domain_indices(self, domain: Domain) -> np.ndarray:
        labels = self.batch.labels
        if domain is Domain.POS:
            return np.flatnonzero(labels == 1)
        if domain is Domain.NEG:
            return np.flatnonzero(labels == 0)
        return np.arange(len(labels))

    def _learned_atom(self, name: str) -> Value:
        if name not in self._learned_cache:
            self._learned_cache[name] = \
                self.learned_predicates[name].forward(self.batch)
        return self._learned_cache[name]


def _compare_truths(compare: Compare, prefixes: Sequence[Prefix],
                    schema: FeatureSchema, slope: float) -> np.ndarray:
    """Vectorized fuzzy truth of a threshold comparison.

    Value and threshold are both placed on the train-split normalized
    scale so the sigmoid slope means the same thing for every attribute.
    A missing measurement contributes truth 0: the prefix asserts nothing,
    so as an antecedent the comparison is vacuously satisfied.
    """
    name = func_feature_name(compare.func, schema)
    bounds = schema.numeric_bounds(name)
    if bounds is None:
        raise GroundingError(
            f"no normalization bounds for feature {name!r}; compile the "
            "knowledge base against this schema first")
    lo, hi = bounds
    span = hi - lo
    out = np.zeros(len(prefixes))
    for i, prefix in enumerate(prefixes):
        raw = func_value(prefix, compare.func)
        if raw is ABSENT:
            continue
        try:
            x = float(raw)
        except (TypeError, ValueError):
            continue
        x = (x - lo) / span if span else 0.5
        c = (compare.value - lo) / span if span else 0.5
        x = min(1.0, max(0.0, x))
        c = min(1.0, max(0.0, c))
        out[i] = comparison_truth(x, compare.op, c, slope=slope)
    return out


def _ground_matrix(expr, env: GroundingEnv, idx: np.ndarray):
    """Elementwise truth (ndarray or Value) of a quantifier-free formula
    over the prefixes selected by idx."""
    if isinstance(expr, Atom):
        if expr.name == P_NAME:
            if env.p_out is None:
                raise GroundingError(
                    "formula mentions P but the environment has no model "
                    "outputs")
            return slice_(env.p_out, idx)
        if env.learned_predicates and expr.name in env.learned_predicates:
            return slice_(env._learned_atom(expr.name), idx)
        if env.derived_slots and expr.name in env.derived_slots:
            return np.asarray(env.derived_slots[expr.name],
                              dtype=np.float64)[idx]
        return np.array([
            float(predicate_truth(env.batch.prefixes[i], expr.name,
                                  expr.args, env.extra_predicates))
            for i in idx
        ])
    if isinstance(expr, Compare):
        prefixes = [env.batch.prefixes[i] for i in idx]
        return _compare_truths(expr, prefixes, env.schema, env.slope)
    if isinstance(expr, Not):
        return t_not(_ground_matrix(expr.body, env, idx))
    if isinstance(expr, And):
        return t_and(_ground_matrix(expr.left, env, idx),
                     _ground_matrix(expr.right, env, idx))
    if isinstance(expr, Or):
        return t_or(_ground_matrix(expr.left, env, idx),
                    _ground_matrix(expr.right, env, idx))
    if isinstance(expr, Implies):
        return t_implies(_ground_matrix(expr.left, env, idx),
                         _ground_matrix(expr.right, env, idx))
    raise TypeError(f"not a groundable formula node: {expr!r}")


def ground_formula(formula, env: GroundingEnv,
                   restrict: np.ndarray | None = None) -> Value | None:
    """Scalar truth of one closed formula (or Rule) on the batch.

    The quantifier selects the batch slice by domain tag and the pooling
    operator: universal formulas pool deviations, existential ones peaks.
    Returns None when the domain is empty in this batch (or after
    `restrict`), which callers treat as "skip this step".
    """
    if isinstance(formula, Rule):
        formula = formula.formula
    if not isinstance(formula, (ForAll, Exists)):
        raise GroundingError("only closed (quantified) formulas have a "
                             "batch truth value")
    idx = env.domain_indices(formula.domain)
    if restrict is not None:
        idx = np.intersect1d(idx, restrict)
    if len(idx) == 0:
        return None
    truths = _as_value(_ground_matrix(formula.body, env, idx))
    if isinstance(formula, Exists):
        return pmean(truths, env.p_exists)
    return pmean_error(truths, env.p_universal)


# -- injection modes ----------------------------------------------------


def _slot_fragment(rule: Rule):
    """The deterministic fragment a rule contributes as a feature value.

    Feature-expansion and outcome rules contribute their antecedent;
    class-independent rules their whole body (the conformance signal).
    """
    body = rule.formula.body
    if rule.mode is Mode.C:
        return body
    if isinstance(body, Implies):
        return body.left
    return body


def rule_slots(rules: Sequence[Rule], prefixes: Sequence[Prefix],
               schema: FeatureSchema, slope: float = DEFAULT_SLOPE,
               extra_predicates: Mapping[str, Callable] | None = None
               ) -> np.ndarray:
    """(n, len(rules)) deterministic fuzzy truths of rule fragments.

    Shared by feature expansion and the feature-encoded baseline.  A
    fragment that still mentions the outcome predicate (or would need the
    model) is rejected: slot values must not depend on the prediction.
    """
    env = GroundingEnv(schema=schema,
                       batch=encode_batch(list(prefixes), schema),
                       slope=slope, extra_predicates=extra_predicates)
    idx = np.arange(len(prefixes))
    out = np.zeros((len(prefixes), len(rules)))
    for j, rule in enumerate(rules):
        fragment = _slot_fragment(rule)
        if mentions_p(fragment):
            raise RuleError(
                f"rule {rule.id!r}: fragment used as a feature value must "
                "not mention the outcome predicate")
        values = _ground_matrix(fragment, env, idx)
        if isinstance(values, Value):
            raise RuleError(
                f"rule {rule.id!r}: feature fragment must be deterministic")
        out[:, j] = values
    return out


def inject_mode_a(kb: KnowledgeBase, prefixes: Sequence[Prefix],
                  schema: FeatureSchema, enabled: bool = True,
                  slope: float = DEFAULT_SLOPE,
                  extra_predicates: Mapping[str, Callable] | None = None
                  ) -> tuple[np.ndarray, list[Rule]]:
    """Feature expansion: antecedent truths as static slots + the rules.

    Returns the (n, n_mode_a_rules) slot block and the formulas that also
    enter the satisfaction aggregate.  Disabled, the block keeps its
    width but is all zero and no formulas are returned, so model shapes
    stay identical across ablations.
    """
    rules = list(kb.mode_a)
    if not enabled or not rules:
        return np.zeros((len(prefixes), len(rules))), []
    slots = rule_slots(rules, prefixes, schema, slope, extra_predicates)
    return slots, rules


def inject_mode_b(kb: KnowledgeBase) -> list[Rule]:
    """Output refinement: rules constraining the outcome predicate.

    They are grounded per step on the matching label slice; a rule that
    never mentions the outcome predicate cannot refine it.
    """
    rules = list(kb.mode_b)
    for rule in rules:
        if not mentions_p(rule.formula.body):
            raise RuleError(f"rule {rule.id!r} is marked as an output "
                            "constraint but never mentions P")
    return rules


def inject_mode_c(kb: KnowledgeBase, env: GroundingEnv
                  ) -> list[tuple[Rule, np.ndarray]]:
    """Parallel constraints with their per-batch conforming prefixes.

    Each class-independent rule is evaluated crisply per prefix; prefixes
    that violate it are excluded from its aggregation batch.  A rule that
    every prefix violates is dropped for this step.
    """
    out = []
    for rule in kb.mode_c:
        keep = np.asarray([
            i for i in env.domain_indices(rule.domain)
            if is_satisfied(eval_crisp(rule, env.batch.prefixes[i],
                                       extra_predicates=env.extra_predicates))
        ], dtype=np.int64)
        if len(keep) == 0:
            continue
        out.append((rule, keep))
    return out


def supervision_rules() -> tuple[Rule, Rule]:
    """The two label formulas: P over positives, not-P over negatives."""
    pos = Rule(SUPERVISION_POS_ID, ForAll(Domain.POS, Atom(P_NAME)),
               Category.CLASS_DEP_OUTCOME, Mode.B, source="axiom")
    neg = Rule(SUPERVISION_NEG_ID, ForAll(Domain.NEG, Not(Atom(P_NAME))),
               Category.CLASS_DEP_OUTCOME, Mode.B, source="axiom")
    return pos, neg


def step_truths(kb: KnowledgeBase, env: GroundingEnv, modes: frozenset
                ) -> tuple[list[str], list[Value]]:
    """Ground every active formula on the current batch.

    Always includes the two supervision formulas; injected rules follow
    the enabled modes.  Formulas with an empty aggregation batch this
    step are skipped.
    """
    jobs: list[tuple[Rule, np.ndarray | None]] = [
        (rule, None) for rule in supervision_rules()]
    if "A" in modes:
        jobs += [(rule, None) for rule in kb.mode_a]
    if "B" in modes:
        jobs += [(rule, None) for rule in inject_mode_b(kb)]
    if "C" in modes:
        jobs += inject_mode_c(kb, env)
    names: list[str] = []
    truths: list[Value] = []
    for rule, restrict in jobs:
        truth = ground_formula(rule, env, restrict=restrict)
        if truth is None:
            continue
        names.append(rule.id)
        truths.append(truth)
    return names, truths


# -- training -----------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    p_universal: float = 2.0
    p_exists: float = 2.0
    p_sat: float = 2.0
    batch_size: int = 32
    lr: float = 0.001
    epochs: int = 100
    patience: int = 10
    seed: int = 0
    modes: frozenset = frozenset({"A", "B", "C"})
    objective: str = "satagg"  # "bce" for the plain baselines
    learned_mode_c: bool = False
    slope: float = DEFAULT_SLOPE
    debug: bool = True
    formula_weights: tuple = ()  # ((rule_id, weight), ...), default all 1

    def __post_init__(self):
        if min(self.p_universal, self.p_exists, self.p_sat) < 1:
            raise ValueError("aggregator exponents must be >= 1")
        object.__setattr__(self, "modes", frozenset(self.modes))
        if not self.modes <= {"A", "B", "C"}:
            raise ValueError(f"unknown injection modes "
                             f"{sorted(self.modes - {'A', 'B', 'C'})}")
        if self.objective not in ("satagg", "bce"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if min(self.batch_size, self.epochs, self.patience) < 1:
            raise ValueError("batch_size, epochs and patience must be >= 1")


@dataclass
class TrainResult:
    model: object
    history: list[dict]
    best_epoch: int
    best_val_f1: float
    stopped_epoch: int


def _bce_loss(p_out: Value, labels: np.ndarray) -> Value:
    y = labels.astype(np.float64)
    term = Value(y) * log(p_out) + Value(1.0 - y) * log(sub(1.0, p_out))
    return sub(0.0, mean(term))


def _derived_columns(kb: KnowledgeBase) -> dict[str, int]:
    cols: dict[str, int] = {}
    for j, rule in enumerate(kb.mode_a):
        for name in rule.derived_predicates:
            cols[name] = j
    return cols


def evaluate_split(model, prefixes: Sequence[Prefix],
                   schema: FeatureSchema, expansion: np.ndarray
                   ) -> tuple[float, float]:
    batch = encode_batch(list(prefixes), schema, expansion=expansion)
    predicted = threshold_outputs(model.predict(batch))
    return accuracy(batch.labels, predicted), binary_f1(batch.labels,
                                                        predicted)


def train(model, kb: KnowledgeBase, train_prefixes: Sequence[Prefix],
          val_prefixes: Sequence[Prefix], schema: FeatureSchema,
          config: TrainConfig, history_path=None,
          extra_predicates: Mapping[str, Callable] | None = None,
          learned_predicates: Mapping[str, object] | None = None,
          slot_fn: Callable[[Sequence[Prefix]], np.ndarray] | None = None
          ) -> TrainResult:
    """Mini-batch training with early stopping on validation F1.

    Per epoch the train prefixes are reshuffled (seeded), each batch is
    encoded together with its expansion slots, every active formula is
    grounded, and one optimizer step follows on 1 - sat_agg (or binary
    cross-entropy for the plain objective).  The best-F1 parameter state
    is restored before returning.  A non-finite loss aborts with the
    epoch, batch index, and per-formula truths in the message.

    `slot_fn` overrides how expansion slots are computed from prefixes
    (the feature-encoded baseline passes its own); by default they are
    the feature-expansion antecedent truths, zeroed when mode A is off.
    Slots are deterministic, so they are computed once per split.
    """
    train_prefixes = list(train_prefixes)
    val_prefixes = list(val_prefixes)
    if not train_prefixes or not val_prefixes:
        raise ValueError("training needs non-empty train and val splits")

    if slot_fn is None:
        def slot_fn(prefixes):
            return inject_mode_a(kb, prefixes, schema,
                                 enabled="A" in config.modes,
                                 slope=config.slope,
                                 extra_predicates=extra_predicates)[0]
    slot_block = slot_fn(train_prefixes)
    val_slots = slot_fn(val_prefixes)
    derived_cols = _derived_columns(kb)
    weight_map = dict(config.formula_weights)
    learned = learned_predicates if config.learned_mode_c else None

    opt_params = list(model.parameters())
    if learned:
        for predicate in learned.values():
            opt_params.extend(predicate.parameters())
    optimizer = Adam(opt_params, lr=config.lr)
    rng = np.random.default_rng(config.seed)
    n = len(train_prefixes)

    history: list[dict] = []
    best = {"f1": -1.0, "epoch": 0, "state": model.state_arrays()}
    stale = 0
    stopped_epoch = 0
    history_fh = open(history_path, "w") if history_path else None
    try:
        for epoch in range(1, config.epochs + 1):
            stopped_epoch = epoch
            order = rng.permutation(n)
            epoch_losses: list[float] = []
            truth_log: dict[str, list[float]] = {}
            for start in range(0, n, config.batch_size):
                take = order[start:start + config.batch_size]
                prefixes = [train_prefixes[i] for i in take]
                batch = encode_batch(prefixes, schema,
                                     expansion=slot_block[take])
                model.zero_grad()
                if learned:
                    for predicate in learned.values():
                        predicate.zero_grad()
                p_out = model.forward(batch)
                names: list[str] = []
                truths: list[Value] = []
                if config.objective == "bce":
                    loss = _bce_loss(p_out, batch.labels)
                else:
                    env = GroundingEnv(
                        schema=schema, batch=batch, p_out=p_out,
                        p_universal=config.p_universal,
                        p_exists=config.p_exists, slope=config.slope,
                        extra_predicates=extra_predicates,
                        learned_predicates=learned,
                        derived_slots={
                            name: slot_block[take][:, j]
                            for name, j in derived_cols.items()
                        },
                    )
                    names, truths = step_truths(kb, env, config.modes)
                    if not truths:
                        continue
                    weights = ([weight_map.get(nm, 1.0) for nm in names]
                               if weight_map else None)
                    agg = sat_agg(truths, config.p_sat, weights)
                    loss = sub(1.0, agg)
                    if config.debug:
                        a, l = float(agg.data), float(loss.data)
                        assert -1e-9 <= a <= 1 + 1e-9, \
                            f"satisfaction aggregate out of range: {a}"
                        assert -1e-9 <= l <= 1 + 1e-9, \
                            f"loss out of range: {l}"
                loss_val = float(loss.data)
                if not np.isfinite(loss_val):
                    detail = ", ".join(
                        f"{nm}={float(t.data):.4f}"
                        for nm, t in zip(names, truths)) or "n/a"
                    raise NonFiniteError(
                        f"non-finite loss at epoch {epoch}, batch "
                        f"{start // config.batch_size}: {loss_val} "
                        f"(formula truths: {detail})")
                loss.backward()
                optimizer.step()
                epoch_losses.append(loss_val)
                for nm, t in zip(names, truths):
                    truth_log.setdefault(nm, []).append(float(t.data))

            val_acc, val_f1 = evaluate_split(model, val_prefixes, schema,
                                             val_slots)
            record = {
                "epoch": epoch,
                "loss": (float(np.mean(epoch_losses))
                         if epoch_losses else None),
                "formula_truth": {nm: float(np.mean(v))
                                  for nm, v in sorted(truth_log.items())},
                "val_accuracy": val_acc,
                "val_f1": val_f1,
            }
            history.append(record)
            if history_fh:
                history_fh.write(json.dumps(record) + "\n")
                history_fh.flush()

            if val_f1 > best["f1"]:
                best = {"f1": val_f1, "epoch": epoch,
                        "state": model.state_arrays()}
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    finally:
        if history_fh:
            history_fh.close()

    model.load_state_arrays(best["state"])
    return TrainResult(model=model, history=history,
                       best_epoch=best["epoch"], best_val_f1=best["f1"],
                       stopped_epoch=stopped_epoch)
