#!/usr/bin/env python3
"""Timing comparison of the two kernel backends on the training hot path.

Each shape times the three sequence kernels (forward, softmax/CE gradient,
windowed backward) separately, feeding both backends identical inputs, and
reports best-of-N wall time per call.  A round-off agreement check on the
smallest shape runs first; BLAS threads are pinned to one core so numbers
reflect single-core behavior, matching the training budget.

Usage: python3 benchmarks/bench_kernels.py [--repeats N] [--shapes a,b,...]
"""

import argparse
import os
import sys
import timeit

for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np

from typobench._kernels import _ref
from typobench.nncore import uniform_values
from typobench.rng import SplitMix64

try:
    from typobench._kernels import _fastcore
except ImportError:
    _fastcore = None

ENCODING_DIM = 228  # 3 x 76-character alphabet

# name -> (T sentence length, B batch, H hidden, V vocabulary)
SHAPES = {
    "tiny": (6, 8, 64, 500),
    "desk": (10, 20, 128, 2000),
    "wide": (10, 20, 256, 2000),
    "longseq": (24, 20, 128, 2000),
}


def build_problem(T, B, H, V, seed=0xBE):
    rng = SplitMix64(seed)
    X = uniform_values((T, B, ENCODING_DIM), rng)
    Wx = uniform_values((4 * H, ENCODING_DIM), rng)
    Wh = uniform_values((4 * H, H), rng)
    b = uniform_values(4 * H, rng)
    Wp = uniform_values((V, H), rng)
    targets = np.array(
        [[rng.randbelow(V + 1) - 1 for _ in range(B)] for _ in range(T)],
        dtype=np.int64,
    )
    return X, Wx, Wh, b, Wp, targets


def best_ms(fn, repeats):
    fn()  # warm caches and allocators before timing
    return 1000.0 * min(timeit.repeat(fn, number=1, repeat=repeats))


def check_agreement(window):
    """Both backends must produce identical results up to round-off."""
    X, Wx, Wh, b, Wp, targets = build_problem(*SHAPES["tiny"])
    ref_fwd = _ref.lstm_seq_forward(X, Wx, Wh, b)
    fast_fwd = _fastcore.lstm_seq_forward(X, Wx, Wh, b)
    for r, f in zip(ref_fwd, fast_fwd):
        assert np.allclose(r, f, atol=1e-12), "forward outputs diverge"
    Hs, Cs, G = ref_fwd
    ref_ce = _ref.ce_grad_over_seq(Hs, Wp, targets)
    fast_ce = _fastcore.ce_grad_over_seq(Hs, Wp, targets)
    assert ref_ce[1] == fast_ce[1] and ref_ce[2] == fast_ce[2], "counts diverge"
    assert abs(ref_ce[0] - fast_ce[0]) < 1e-9, "loss diverges"
    for r, f in zip(ref_ce[3:], fast_ce[3:]):
        assert np.allclose(r, f, atol=1e-10), "CE gradients diverge"
    dH = ref_ce[3]
    ref_bwd = _ref.lstm_seq_backward_window(X, Hs, Cs, G, Wh, dH, window)
    fast_bwd = _fastcore.lstm_seq_backward_window(X, Hs, Cs, G, Wh, dH, window)
    for r, f in zip(ref_bwd, fast_bwd):
        assert np.allclose(r, f, atol=1e-10), "backward gradients diverge"


def bench_shape(name, dims, window, repeats, backends):
    T, B, H, V = dims
    X, Wx, Wh, b, Wp, targets = build_problem(T, B, H, V)
    # Shared intermediates so per-kernel timings see identical inputs.
    Hs, Cs, G = _ref.lstm_seq_forward(X, Wx, Wh, b)
    dH = _ref.ce_grad_over_seq(Hs, Wp, targets)[3]

    rows = []
    for label, mod in backends:
        fwd = best_ms(lambda: mod.lstm_seq_forward(X, Wx, Wh, b), repeats)
        ce = best_ms(lambda: mod.ce_grad_over_seq(Hs, Wp, targets), repeats)
        bwd = best_ms(
            lambda: mod.lstm_seq_backward_window(X, Hs, Cs, G, Wh, dH, window),
            repeats,
        )
        rows.append((label, fwd, ce, bwd, fwd + ce + bwd))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=10, help="timing repeats per kernel")
    ap.add_argument("--window", type=int, default=3, help="backward truncation window")
    ap.add_argument(
        "--shapes",
        default=",".join(SHAPES),
        help=f"comma-separated subset of: {', '.join(SHAPES)}",
    )
    args = ap.parse_args(argv)

    names = [s.strip() for s in args.shapes.split(",") if s.strip()]
    unknown = [s for s in names if s not in SHAPES]
    if unknown:
        ap.error(f"unknown shapes: {unknown}")

    backends = [("numpy", _ref)]
    if _fastcore is not None:
        backends.append(("cython", _fastcore))
        check_agreement(args.window)
        print("agreement check: both backends match to round-off on the tiny shape")
    else:
        print("compiled backend not importable; timing the numpy reference only")

    header = (
        f"{'shape':<9} {'T':>3} {'B':>3} {'H':>4} {'V':>5}  {'backend':<7}"
        f" {'fwd ms':>8} {'ce ms':>8} {'bwd ms':>8} {'total ms':>9}"
    )
    print(header)
    print("-" * len(header))
    for name in names:
        dims = SHAPES[name]
        rows = bench_shape(name, dims, args.window, args.repeats, backends)
        for label, fwd, ce, bwd, total in rows:
            T, B, H, V = dims
            print(
                f"{name:<9} {T:>3} {B:>3} {H:>4} {V:>5}  {label:<7}"
                f" {fwd:>8.2f} {ce:>8.2f} {bwd:>8.2f} {total:>9.2f}"
            )
        if len(rows) == 2:
            ratio = rows[0][4] / rows[1][4]
            print(f"{'':<37}numpy/cython total ratio {ratio:.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
