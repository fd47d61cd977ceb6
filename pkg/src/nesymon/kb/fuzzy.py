"""Fuzzy connectives and smooth comparison truths.

Product t-norm family: conjunction u*v, probabilistic sum for disjunction,
Reichenbach implication 1-u+u*v, negation 1-u.  The operators are written
against the arithmetic protocol so they accept plain floats, NumPy arrays,
and autodiff Values interchangeably; restricted to {0,1} inputs they
reproduce Boolean truth tables exactly.

Comparisons over numeric features become sigmoids so thresholds remain
informative under gradient descent; values are expected on the normalized
[0, 1] feature scale, where the default slope of 10 gives a soft but
usable transition band.  Crisp evaluation for compliance checking lives in
the crisp module and never uses these.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

DEFAULT_SLOPE = 10.0


def t_not(u):
    return 1.0 - u


def t_and(u, v):
    return u * v


def t_or(u, v):
    return u + v - u * v


def t_implies(u, v):
    return 1.0 - u + u * v


def comparison_truth(x, op: str, threshold: float,
                     slope: float = DEFAULT_SLOPE):
    """Truth degree of `x <op> threshold` as a sigmoid of the margin.

    `>` and `>=` (and likewise `<`/`<=`) share one smooth shape: at the
    threshold the truth is 0.5 either way.  Equality is a bump of width
    1/slope around the threshold.
    """
    x = np.asarray(x, dtype=np.float64)
    margin = slope * (x - threshold)
    if op in (">", ">="):
        return expit(margin)
    if op in ("<", "<="):
        return expit(-margin)
    if op == "=":
        return np.exp(-margin * margin)
    raise ValueError(f"unknown comparison operator {op!r}")
