"""Synthetic event logs with planted control-flow and outcome structure.

Two scenarios are supported.  "declare-mining" builds a log in which
exactly two control-flow constraints hold in every trace (Exam eventually
follows Rev; PostCU immediately follows Surg) while every other candidate
constraint over the alphabet is violated often enough to stay clearly
below a 0.9 support threshold.  "timed-antibiotic" builds a hospital-style
outcome log: a fast antibiotic after surgery overrides the age-driven
outcome, a post-discharge review chain can be left incomplete, and the
fraction of fully rule-compliant traces is a direct parameter.

Both scenarios ship their planted rules as DSL text so the same source
can be mined, compiled, and used to measure the compliant fraction.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from .eventlog import Event, EventLog, LabelingSpec, Prefix, Trace

SCENARIOS = ("declare-mining", "timed-antibiotic")

_ORIGIN = datetime(2024, 3, 1)

DECLARE_MINING_RULES = """\
# planted control-flow structure; each holds in every generated trace
RULE review_followup FORALL l : hasact(Rev) -> next(Rev, Exam)
RULE postcare_chain FORALL l : hasact(Surg) -> chainnext(Surg, PostCU)
"""

TIMED_ANTIBIOTIC_RULES = """\
# frailty marker used as an expansion feature
RULE frail_monitor FORALL l+ : age > 60 AND hascond(Diabetes) -> specmon
# a fast antibiotic after surgery averts the bad outcome
RULE antibiotic_fast FORALL l- : waittime(Surg, ATB) <= 2 -> NOT P
# without that cover, older patients tend to deteriorate
RULE late_deterioration FORALL l+ : age > 60 AND waittime(Surg, ATB) > 2 -> P
# discharge review protocol
RULE review_followup FORALL l : hasact(Rev) -> next(Rev, Exam)
RULE exam_needs_review FORALL l : hasact(Exam) -> precededby(Exam, Rev)
RULE admission_recorded FORALL l : hasact(Admit)
"""


def scenario_rules(scenario: str) -> str:
    """Planted-rule DSL text for a scenario."""
    if scenario == "declare-mining":
        return DECLARE_MINING_RULES
    if scenario == "timed-antibiotic":
        return TIMED_ANTIBIOTIC_RULES
    raise ValueError(f"unknown scenario {scenario!r}; choose from "
                     f"{', '.join(SCENARIOS)}")


def scenario_labeling(scenario: str) -> LabelingSpec:
    if scenario == "declare-mining":
        return LabelingSpec(kind="activity-presence", activity="Surg")
    if scenario == "timed-antibiotic":
        return LabelingSpec(kind="attribute-predicate", attribute="Outcome",
                            comparator="==", threshold=1)
    raise ValueError(f"unknown scenario {scenario!r}; choose from "
                     f"{', '.join(SCENARIOS)}")


@dataclass(frozen=True)
class SynthConfig:
    scenario: str = "timed-antibiotic"
    n_traces: int = 1000
    seed: int = 0
    # timed-antibiotic knobs; ignored by declare-mining
    compliant_frac: float = 0.5
    outcome_rate: float = 0.05
    label_noise: float = 0.05

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose "
                             f"from {', '.join(SCENARIOS)}")
        if self.n_traces < 20:
            raise ValueError("n_traces must be at least 20")
        if not 0.0 <= self.compliant_frac <= 1.0:
            raise ValueError("compliant_frac must be in [0, 1]")
        if not 0.0 < self.outcome_rate < 0.5:
            raise ValueError("outcome_rate must be in (0, 0.5)")
        if not 0.0 <= self.label_noise < 0.5:
            raise ValueError("label_noise must be in [0, 0.5)")


@dataclass
class SynthResult:
    log: EventLog
    labeling: LabelingSpec
    rules_text: str
    compliant_fraction: float


def generate(config: SynthConfig) -> SynthResult:
    """Build the configured log and measure its compliant fraction."""
    if config.scenario == "declare-mining":
        log = declare_mining_log(config.n_traces, config.seed)
    else:
        log = timed_antibiotic_log(config.n_traces, config.seed,
                                   compliant_frac=config.compliant_frac,
                                   outcome_rate=config.outcome_rate,
                                   label_noise=config.label_noise)
    labeling = scenario_labeling(config.scenario)
    rules_text = scenario_rules(config.scenario)
    fraction = measured_compliant_fraction(log, labeling, rules_text)
    return SynthResult(log, labeling, rules_text, fraction)


def measured_compliant_fraction(log: EventLog, labeling: LabelingSpec,
                                rules_text: str) -> float:
    """Fraction of traces whose full run violates none of the scoring rules."""
    # local imports keep this module usable without the kb/eval stack loaded
    from .evaluation import is_compliant
    from .kb.base import KnowledgeBase
    from .kb.dsl import parse_rules

    kb = KnowledgeBase(rules=tuple(parse_rules(rules_text)))
    if not log.traces:
        return 0.0
    good = 0
    for trace in log.traces:
        label, _ = labeling.label(trace)
        prefix = Prefix(trace, len(trace.events), label)
        good += is_compliant(prefix, kb)
    return good / len(log.traces)


# --------------------------------------------------------------------------
# declare-mining scenario


def _apportion(n: int, fractions: list[float]) -> list[int]:
    """Integer counts per bucket, exactly summing to n."""
    counts = [int(round(f * n)) for f in fractions]
    counts[0] += n - sum(counts)
    if counts[0] < 0:
        raise ValueError(f"cannot apportion {n} traces over {fractions}")
    return counts


def _trace(case_id: str, activities: list[str], start: datetime,
           case_payload: dict | None = None,
           hour_gap: float = 1.0) -> Trace:
    events = tuple(
        Event(act, case_id, start + timedelta(hours=i * hour_gap))
        for i, act in enumerate(activities))
    return Trace(case_id, events, case_payload or {})


def declare_mining_log(n_traces: int = 1000, seed: int = 0) -> EventLog:
    """Log over {Surg, PostCU, Rev, Exam, Lab} with two exact constraints.

    Every trace satisfies response(Rev, Exam) and chain_response(Surg,
    PostCU).  Family counts are deterministic so that the support of every
    other constraint is an exact fraction well below 0.9: lone-PostCU and
    lone-Exam traces break the precedence shadows of the planted pair
    (both land at 0.85, the largest non-planted support), segment order
    alternates to break cross-segment orderings, and a Lab filler between
    Rev and Exam keeps chain_response(Rev, Exam) near 0.6.
    """
    rng = np.random.default_rng(seed)
    # families: full log both segments (split by segment order), review
    # only, lone post-care, lone exam, lab only
    n_a1, n_a2, n_b, n_c, n_d, n_e = _apportion(
        n_traces, [0.20, 0.20, 0.15, 0.15, 0.15, 0.15])

    def rev_segment(with_lab: bool) -> list[str]:
        return ["Rev", "Lab", "Exam"] if with_lab else ["Rev", "Exam"]

    def lab_flags(count: int, frac: float) -> list[bool]:
        flags = [i < round(count * frac) for i in range(count)]
        rng.shuffle(flags)
        return flags

    bodies: list[list[str]] = []
    for lab in lab_flags(n_a1, 0.7):
        bodies.append(["Surg", "PostCU"] + rev_segment(lab))
    for lab in lab_flags(n_a2, 0.7):
        bodies.append(rev_segment(lab) + ["Surg", "PostCU"])
    for lab in lab_flags(n_b, 0.7):
        bodies.append(rev_segment(lab))
    for lab in lab_flags(n_c, 0.5):
        bodies.append(["PostCU", "Lab"] if lab else ["PostCU"])
    for lab in lab_flags(n_d, 0.5):
        bodies.append(["Exam", "Lab"] if lab else ["Exam"])
    bodies.extend(["Lab"] for _ in range(n_e))

    order = rng.permutation(len(bodies))
    traces = []
    for pos, idx in enumerate(order):
        start = _ORIGIN + timedelta(minutes=int(pos))
        traces.append(_trace(f"c{pos:04d}", bodies[idx], start))
    return EventLog(traces)


# --------------------------------------------------------------------------
# timed-antibiotic scenario


def timed_antibiotic_log(n_traces: int = 1000, seed: int = 0,
                         compliant_frac: float = 0.5,
                         outcome_rate: float = 0.05,
                         label_noise: float = 0.05) -> EventLog:
    """Outcome log where a fast antibiotic overrides the age-driven course.

    Each trace runs Admit, Surg, ATB, Rev, (Exam), Disc with an Age and a
    Diabetes case attribute.  In roughly `outcome_rate / (1 - label_noise)`
    of traces the Surg-to-ATB wait is under two hours and the outcome is
    negative regardless of age, so the fast-antibiotic rule holds
    non-vacuously in about `outcome_rate` of traces.  Elsewhere the wait
    is 3..12 hours and the outcome follows age > 60, flipped with
    probability `label_noise`; the wait carries no extra label signal.

    Exactly round(n_traces * compliant_frac) traces are made compliant:
    they violate no outcome rule under their own label and keep the
    Rev-Exam review intact.  All other traces drop the Exam, so the
    measured compliant fraction tracks the target to within rounding
    whenever enough non-violating traces exist.
    """
    rng = np.random.default_rng(seed)
    fast_frac = min(outcome_rate / (1.0 - label_noise), 0.5)
    n = n_traces

    fast = np.zeros(n, dtype=bool)
    fast[rng.choice(n, size=round(n * fast_frac), replace=False)] = True
    age = np.round(rng.uniform(20.0, 90.0, size=n), 1)
    diabetes = rng.random(n) < 0.3
    wait = np.where(fast, rng.uniform(0.5, 1.5, size=n),
                    rng.uniform(3.0, 12.0, size=n))
    flip = rng.random(n) < label_noise
    label = np.where(fast, 0, (age > 60.0).astype(int))
    label = np.where(flip, 1 - label, label)

    # an outcome rule broken under the trace's own label can never be
    # compliant: fast cover with a positive outcome, or an untreated
    # older patient who still recovered
    violates = (fast & (label == 1)) | (~fast & (age > 60.0) & (label == 0))
    eligible = np.flatnonzero(~violates)
    want = round(n * compliant_frac)
    chosen = rng.choice(eligible, size=min(want, len(eligible)),
                        replace=False)
    intact = np.zeros(n, dtype=bool)
    intact[chosen] = True

    traces = []
    for i in range(n):
        start = _ORIGIN + timedelta(minutes=int(i))
        t = 0.0
        stamps = {"Admit": t}
        t += rng.uniform(4.0, 10.0)
        stamps["Surg"] = t
        t += wait[i]
        stamps["ATB"] = t
        t += rng.uniform(4.0, 10.0)
        stamps["Rev"] = t
        if intact[i]:
            t += rng.uniform(0.5, 2.0)
            stamps["Exam"] = t
        t += rng.uniform(6.0, 18.0)
        stamps["Disc"] = t
        case_id = f"p{i:04d}"
        events = tuple(
            Event(act, case_id, start + timedelta(hours=h))
            for act, h in stamps.items())
        payload = {"Age": float(age[i]), "Diabetes": bool(diabetes[i]),
                   "Outcome": int(label[i])}
        traces.append(Trace(case_id, events, payload))
    return EventLog(traces)
