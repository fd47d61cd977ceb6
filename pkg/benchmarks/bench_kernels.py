#!/usr/bin/env python3
"""Timing comparison of the recurrent-scan kernel backends.

Runs the compiled Cython kernel and the NumPy reference over identical
padded batches (forward plus backward), checks that both produce the
same numbers, and prints per-shape timings with the speedup.  The
package selects its backend automatically at import; set
``NESYMON_KERNEL=python`` to force the fallback in a real run.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from nesymon._kernels import _gru_py

try:
    from nesymon._kernels import _gru_cy
except ImportError:
    _gru_cy = None

# (batch, padded length, input width, hidden width, layers)
SHAPES = [
    (8, 10, 16, 32, 1),
    (32, 40, 32, 128, 2),
    (64, 40, 64, 128, 2),
    (128, 20, 32, 64, 1),
]


def make_problem(rng, n, T, d, h, layers):
    x_tm = rng.standard_normal((T, n, d))
    lengths = rng.integers(1, T + 1, n).astype(np.int64)
    lengths[0] = T
    weights = []
    width = d
    for _ in range(layers):
        weights.append((
            rng.standard_normal((width, 3 * h)) * 0.1,
            rng.standard_normal((h, 3 * h)) * 0.1,
            rng.standard_normal(3 * h) * 0.1,
            rng.standard_normal(3 * h) * 0.1,
        ))
        width = h
    dh_last = rng.standard_normal((n, h))
    return x_tm, lengths, weights, dh_last


def run_stack(impl, x_tm, lengths, weights, dh_last):
    caches = []
    seq = x_tm
    for w in weights:
        seq, cache = impl.layer_forward(seq, lengths, *w)
        caches.append(cache)
    out = seq[-1]
    dh_seq = None
    for i, cache in enumerate(reversed(caches)):
        dx_tm, *_ = impl.layer_backward(
            cache, dh_seq, dh_last if i == 0 else None)
        dh_seq = dx_tm
    return out, dh_seq


def time_impl(impl, problem, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        run_stack(impl, *problem)
        best = min(best, time.perf_counter() - start)
    return best


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5,
                        help="keep the best of this many runs")
    args = parser.parse_args()

    if _gru_cy is None:
        print("compiled kernel not available; timing the NumPy "
              "reference only")

    rng = np.random.default_rng(0)
    header = (f"{'shape (n,T,d,h,L)':<22} {'python':>12} {'cython':>12} "
              f"{'speedup':>9}")
    print(header)
    print("-" * len(header))
    for shape in SHAPES:
        problem = make_problem(rng, *shape)
        if _gru_cy is not None:
            out_py, dx_py = run_stack(_gru_py, *problem)
            out_cy, dx_cy = run_stack(_gru_cy, *problem)
            assert np.allclose(out_py, out_cy, atol=1e-10), shape
            assert np.allclose(dx_py, dx_cy, atol=1e-10), shape
        t_py = time_impl(_gru_py, problem, args.repeats)
        t_cy = (time_impl(_gru_cy, problem, args.repeats)
                if _gru_cy is not None else float("nan"))
        ratio = t_py / t_cy if _gru_cy is not None else float("nan")
        label = ",".join(str(v) for v in shape)
        print(f"{label:<22} {t_py * 1e3:>10.2f}ms {t_cy * 1e3:>10.2f}ms "
              f"{ratio:>8.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
