"""Independent reference implementations used to validate the package.

Everything in this module is deliberately written in the most direct way
possible (mpmath arbitrary precision, explicit recursion, O(n^2) scans) so
that it shares no code with the implementations under test.
"""

from __future__ import annotations

import numpy as np
from mpmath import mp, mpf


# --------------------------------------------------------------------------
# numerical gradients


def numeric_grad(fn, arrays, h=1e-5):
    """Central finite-difference gradients of a scalar function.

    ``fn(*arrays) -> float`` is re-evaluated with each entry of each array
    perturbed by ``+/- h``.  Arrays are modified in place during probing and
    restored afterwards.  Returns one gradient array per input array.
    """
    grads = []
    for a in arrays:
        g = np.zeros_like(a, dtype=np.float64)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = a[idx]
            a[idx] = orig + h
            fp = fn(*arrays)
            a[idx] = orig - h
            fm = fn(*arrays)
            a[idx] = orig
            g[idx] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def assert_grads_close(analytic, numeric, rtol=1e-4, atol=1e-6):
    """Elementwise |analytic - numeric| <= atol + rtol * |numeric|.

    The atol floor absorbs finite-difference noise (~1e-6 for h = 1e-5)
    on entries whose true gradient is zero.
    """
    for a, n in zip(analytic, numeric):
        np.testing.assert_allclose(a, n, rtol=rtol, atol=atol)


# --------------------------------------------------------------------------
# high-precision quantifier aggregators

mp.dps = 50


def hp_pmean(values, p):
    """pMean at 50 significant digits: ((1/n) sum u_i^p)^(1/p)."""
    vs = [mpf(repr(float(v))) for v in values]
    n = mpf(len(vs))
    acc = sum(v ** mpf(p) for v in vs)
    return float((acc / n) ** (mpf(1) / mpf(p)))


def hp_pmean_error(values, p):
    """pMeanError at 50 significant digits: 1 - ((1/n) sum (1-u_i)^p)^(1/p)."""
    vs = [mpf(repr(float(v))) for v in values]
    n = mpf(len(vs))
    acc = sum((mpf(1) - v) ** mpf(p) for v in vs)
    return float(mpf(1) - (acc / n) ** (mpf(1) / mpf(p)))


# --------------------------------------------------------------------------
# brute-force LTL over finite traces
#
# Formulas are nested tuples:
#   ("atom", "a")        activity at the current position is "a"
#   ("not", f) ("and", f, g) ("or", f, g) ("implies", f, g)
#   ("next", f)          strong next: a next position exists and f holds there
#   ("wnext", f)         weak next: no next position, or f holds there
#   ("eventually", f) ("always", f)
#   ("until", f, g)      strong until
# A trace is a sequence of activity names; satisfaction is judged at
# position 0.


def ltl_holds(formula, trace, i=0):
    op = formula[0]
    if op == "atom":
        return trace[i] == formula[1]
    if op == "not":
        return not ltl_holds(formula[1], trace, i)
    if op == "and":
        return ltl_holds(formula[1], trace, i) and ltl_holds(formula[2], trace, i)
    if op == "or":
        return ltl_holds(formula[1], trace, i) or ltl_holds(formula[2], trace, i)
    if op == "implies":
        return (not ltl_holds(formula[1], trace, i)) or ltl_holds(formula[2], trace, i)
    if op == "next":
        return i + 1 < len(trace) and ltl_holds(formula[1], trace, i + 1)
    if op == "wnext":
        return i + 1 >= len(trace) or ltl_holds(formula[1], trace, i + 1)
    if op == "eventually":
        return any(ltl_holds(formula[1], trace, j) for j in range(i, len(trace)))
    if op == "always":
        return all(ltl_holds(formula[1], trace, j) for j in range(i, len(trace)))
    if op == "until":
        for j in range(i, len(trace)):
            if ltl_holds(formula[2], trace, j):
                return all(ltl_holds(formula[1], trace, k) for k in range(i, j))
        return False
    raise ValueError("unknown operator %r" % (op,))


def declare_ltl(template, a, b=None):
    """The textbook LTL-on-finite-traces reading of each Declare template."""
    if template == "existence":
        return ("eventually", ("atom", a))
    if template == "response":
        return ("always", ("implies", ("atom", a), ("eventually", ("atom", b))))
    if template == "chain_response":
        return ("always", ("implies", ("atom", a), ("next", ("atom", b))))
    if template == "precedence":
        # b may only occur once a has occurred: (not b) weak-until a.
        return (
            "or",
            ("until", ("not", ("atom", b)), ("atom", a)),
            ("always", ("not", ("atom", b))),
        )
    if template == "not_coexistence":
        return (
            "not",
            ("and", ("eventually", ("atom", a)), ("eventually", ("atom", b))),
        )
    raise ValueError("unknown template %r" % (template,))


def all_traces(alphabet, max_len):
    """Every non-empty trace over the alphabet up to the given length."""
    out = []
    frontier = [()]
    for _ in range(max_len):
        frontier = [t + (s,) for t in frontier for s in alphabet]
        out.extend(frontier)
    return out
