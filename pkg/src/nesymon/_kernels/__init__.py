"""Kernel backend selection for the recurrent-scan hot loop.

The compiled Cython kernel is preferred when importable; otherwise the
NumPy implementation takes over with identical semantics.  Set
``NESYMON_KERNEL=python`` (or ``cython``) to force a backend —
``benchmarks/bench_kernels.py`` uses this to compare the two.
"""

from __future__ import annotations

import os

import numpy as np

from . import _gru_py

_requested = os.environ.get("NESYMON_KERNEL", "").strip().lower()

BACKEND = "python"
_impl = _gru_py
if _requested not in ("python", "py", "numpy"):
    try:
        from . import _gru_cy

        BACKEND = "cython"
        _impl = _gru_cy
    except ImportError:
        if _requested in ("cython", "cy", "c"):
            raise ImportError(
                "NESYMON_KERNEL=cython requested but the compiled kernel is "
                "not available; reinstall with a working C toolchain")


def layer_forward(x_tm, lengths, w_ih, w_hh, b_ih, b_hh):
    return _impl.layer_forward(x_tm, lengths, w_ih, w_hh, b_ih, b_hh)


def layer_backward(cache, dh_seq, dh_last):
    return _impl.layer_backward(cache, dh_seq, dh_last)


def stacked_forward(x, lengths, layer_weights):
    """Run a stack of GRU layers over a padded batch.

    x: (n, T, d) batch-major input; lengths: (n,) true sequence lengths;
    layer_weights: [(w_ih, w_hh, b_ih, b_hh), ...] bottom to top.
    Returns (h_last (n, hidden) of the top layer, list of per-layer caches).
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    if np.any(lengths < 1):
        raise ValueError("sequence lengths must be >= 1")
    if np.any(lengths > x.shape[1]):
        raise ValueError("sequence length exceeds padded length")
    x_tm = np.ascontiguousarray(np.transpose(x, (1, 0, 2)))
    caches = []
    for (w_ih, w_hh, b_ih, b_hh) in layer_weights:
        x_tm, cache = layer_forward(x_tm, lengths, w_ih, w_hh, b_ih, b_hh)
        caches.append(cache)
    # state is frozen past each row's length, so the last timestep holds
    # every row's final state
    h_last = x_tm[-1].copy()
    return h_last, caches


def stacked_backward(caches, dh_last):
    """Backward through the stack; returns (dx (n, T, d), per-layer grads)."""
    dh_seq = None
    grads: list[tuple] = []
    for i, cache in enumerate(reversed(caches)):
        top = i == 0
        dx_tm, dw_ih, dw_hh, db_ih, db_hh = layer_backward(
            cache, dh_seq, dh_last if top else None)
        grads.append((dw_ih, dw_hh, db_ih, db_hh))
        dh_seq = dx_tm
    grads.reverse()
    dx = np.transpose(dh_seq, (1, 0, 2))
    return dx, grads
