"""NumPy implementation of the fused recurrent-scan kernel.

Reference semantics for the compiled twin in ``_gru_cy.pyx``; selected at
import time when the extension is unavailable (or forced via
``NESYMON_KERNEL=python``).

Layout conventions: sequences are time-major ``(T, n, d)`` inside the
kernel; gates are concatenated ``[reset | update | candidate]`` along the
last axis.  Rows whose sequence ended (``t >= lengths[i]``) keep their
hidden state frozen, so the state at ``T-1`` equals the state at each
row's true final step.
"""

from __future__ import annotations

import numpy as np


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def layer_forward(x_tm, lengths, w_ih, w_hh, b_ih, b_hh):
    """One GRU layer over a padded batch.

    x_tm: (T, n, d); lengths: (n,) int64; w_ih: (d, 3h); w_hh: (h, 3h).
    Returns (h_seq (T, n, h), cache for the backward pass).
    """
    T, n, _ = x_tm.shape
    h = w_hh.shape[0]
    h_seq = np.empty((T, n, h))
    r_all = np.empty((T, n, h))
    z_all = np.empty((T, n, h))
    n_all = np.empty((T, n, h))
    ghn_all = np.empty((T, n, h))
    h_prev = np.zeros((n, h))
    for t in range(T):
        gx = x_tm[t] @ w_ih + b_ih
        gh = h_prev @ w_hh + b_hh
        r = _sigmoid(gx[:, :h] + gh[:, :h])
        z = _sigmoid(gx[:, h:2 * h] + gh[:, h:2 * h])
        ghn = gh[:, 2 * h:]
        cand = np.tanh(gx[:, 2 * h:] + r * ghn)
        h_new = (1.0 - z) * cand + z * h_prev
        mask = (t < lengths)[:, None]
        h_cur = np.where(mask, h_new, h_prev)
        r_all[t], z_all[t], n_all[t], ghn_all[t] = r, z, cand, ghn
        h_seq[t] = h_cur
        h_prev = h_cur
    cache = (x_tm, h_seq, r_all, z_all, n_all, ghn_all, lengths, w_ih, w_hh)
    return h_seq, cache


def layer_backward(cache, dh_seq, dh_last):
    """Backward through one layer.

    dh_seq: (T, n, h) gradient w.r.t. the output sequence, or None.
    dh_last: (n, h) gradient w.r.t. the final state, or None.
    Returns (dx_tm, dw_ih, dw_hh, db_ih, db_hh).
    """
    x_tm, h_seq, r_all, z_all, n_all, ghn_all, lengths, w_ih, w_hh = cache
    T, n, _ = x_tm.shape
    h = w_hh.shape[0]
    dx_tm = np.zeros_like(x_tm)
    dw_ih = np.zeros_like(w_ih)
    dw_hh = np.zeros_like(w_hh)
    db_ih = np.zeros(3 * h)
    db_hh = np.zeros(3 * h)
    dh = np.zeros((n, h)) if dh_last is None else dh_last.copy()
    for t in range(T - 1, -1, -1):
        if dh_seq is not None:
            dh = dh + dh_seq[t]
        mask = (t < lengths)[:, None]
        h_prev = h_seq[t - 1] if t > 0 else np.zeros((n, h))
        r, z, cand, ghn = r_all[t], z_all[t], n_all[t], ghn_all[t]
        dh_cand = np.where(mask, dh, 0.0)
        dh_prev = np.where(mask, 0.0, dh)
        dz = dh_cand * (h_prev - cand)
        dn = dh_cand * (1.0 - z)
        dh_prev = dh_prev + dh_cand * z
        dan = dn * (1.0 - cand * cand)
        dr = dan * ghn
        dgh_n = dan * r
        daz = dz * z * (1.0 - z)
        dar = dr * r * (1.0 - r)
        dgx = np.concatenate([dar, daz, dan], axis=1)
        dgh = np.concatenate([dar, daz, dgh_n], axis=1)
        dx_tm[t] = dgx @ w_ih.T
        dh_prev = dh_prev + dgh @ w_hh.T
        dw_ih += x_tm[t].T @ dgx
        dw_hh += h_prev.T @ dgh
        db_ih += dgx.sum(axis=0)
        db_hh += dgh.sum(axis=0)
        dh = dh_prev
    return dx_tm, dw_ih, dw_hh, db_ih, db_hh
