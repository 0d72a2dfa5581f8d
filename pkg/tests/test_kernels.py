"""Kernel backend tests: reference oracle checks, backend agreement, and
backend selection via TYPOBENCH_KERNEL."""

import os
import subprocess
import sys

import numpy as np
import pytest

from typobench import _kernels as kernels
from typobench._kernels import _ref
from typobench.nncore import (
    LstmParams,
    LstmState,
    Param,
    finite_diff_check,
    lstm_step,
    uniform_values,
)
from typobench.rng import SplitMix64


def _random_problem(seed, T=6, B=3, D=4, H=5, V=7, scale=1.0):
    rng = SplitMix64(seed)
    X = uniform_values((T, B, D), rng) * scale
    Wx = uniform_values((4 * H, D), rng) * scale
    Wh = uniform_values((4 * H, H), rng) * scale
    b = uniform_values(4 * H, rng) * scale
    Wp = uniform_values((V, H), rng) * scale
    targets = np.empty((T, B), dtype=np.int64)
    for t in range(T):
        for bi in range(B):
            targets[t, bi] = rng.randbelow(V + 1) - 1  # -1 means skip
    return X, Wx, Wh, b, Wp, targets


# ---------------------------------------------------------------- selection


def test_backend_is_numpy_or_cython():
    assert kernels.BACKEND in ("numpy", "cython")
    for name in ("lstm_seq_forward", "ce_grad_over_seq", "lstm_seq_backward_window"):
        assert callable(getattr(kernels, name))


def _backend_in_subprocess(forced):
    env = dict(os.environ)
    env["TYPOBENCH_KERNEL"] = forced
    return subprocess.run(
        [sys.executable, "-c", "from typobench._kernels import BACKEND; print(BACKEND)"],
        capture_output=True,
        text=True,
        env=env,
    )


def test_env_var_forces_numpy_backend():
    proc = _backend_in_subprocess("numpy")
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip() == "numpy"


def test_env_var_forces_cython_backend():
    pytest.importorskip("typobench._kernels._fastcore")
    proc = _backend_in_subprocess("cython")
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip() == "cython"


def test_env_var_rejects_unknown_backend():
    proc = _backend_in_subprocess("fortran")
    assert proc.returncode != 0
    assert "TYPOBENCH_KERNEL" in proc.stderr


# ---------------------------------------------------------------- forward


def test_forward_initial_state_is_zero_and_shapes():
    X, Wx, Wh, b, _, _ = _random_problem(1)
    Hs, Cs, G = _ref.lstm_seq_forward(X, Wx, Wh, b)
    T, B, D = X.shape
    H = Wh.shape[1]
    assert Hs.shape == (T + 1, B, H)
    assert Cs.shape == (T + 1, B, H)
    assert G.shape == (T, B, 4 * H)
    assert np.all(Hs[0] == 0.0)
    assert np.all(Cs[0] == 0.0)


def test_forward_matches_single_step_cell():
    X, Wx, Wh, b, _, _ = _random_problem(2)
    Hs, Cs, _ = _ref.lstm_seq_forward(X, Wx, Wh, b)
    params = LstmParams.from_arrays(Wx, Wh, b)
    T, B, _ = X.shape
    for bi in range(B):
        state = LstmState.zeros(Wh.shape[1])
        for t in range(T):
            state, _ = lstm_step(X[t, bi], state, params)
            assert np.allclose(state.hidden, Hs[t + 1, bi], atol=1e-12)
            assert np.allclose(state.cell, Cs[t + 1, bi], atol=1e-12)


def test_forward_rejects_mismatched_shapes():
    X = np.zeros((2, 1, 3))
    with pytest.raises(ValueError):
        _ref.lstm_seq_forward(X, np.zeros((8, 4)), np.zeros((8, 2)), np.zeros(8))


# ---------------------------------------------------------------- ce grad


def _manual_ce(Hs, Wp, targets):
    loss = 0.0
    n = 0
    correct = 0
    dH = np.zeros((targets.shape[0], targets.shape[1], Hs.shape[2]))
    dWp = np.zeros_like(Wp)
    for t in range(targets.shape[0]):
        for bi in range(targets.shape[1]):
            tv = targets[t, bi]
            if tv < 0:
                continue
            h = Hs[t + 1, bi]
            logits = Wp @ h
            e = np.exp(logits - logits.max())
            p = e / e.sum()
            loss += -np.log(p[tv])
            n += 1
            if int(np.argmax(logits)) == tv:
                correct += 1
            d = p.copy()
            d[tv] -= 1.0
            dWp += np.outer(d, h)
            dH[t, bi] = Wp.T @ d
    return loss, n, correct, dH, dWp


def test_ce_grad_matches_manual_oracle():
    X, Wx, Wh, b, Wp, targets = _random_problem(3)
    Hs, _, _ = _ref.lstm_seq_forward(X, Wx, Wh, b)
    got = _ref.ce_grad_over_seq(Hs, Wp, targets)
    want = _manual_ce(Hs, Wp, targets)
    assert abs(got[0] - want[0]) < 1e-10
    assert got[1] == want[1]
    assert got[2] == want[2]
    assert np.allclose(got[3], want[3], atol=1e-12)
    assert np.allclose(got[4], want[4], atol=1e-12)


def test_ce_grad_skips_negative_targets():
    X, Wx, Wh, b, Wp, targets = _random_problem(4)
    targets[:] = -1
    targets[2, 1] = 3
    Hs, _, _ = _ref.lstm_seq_forward(X, Wx, Wh, b)
    loss, n, correct, dH, dWp = _ref.ce_grad_over_seq(Hs, Wp, targets)
    assert n == 1
    mask = np.ones(targets.shape, dtype=bool)
    mask[2, 1] = False
    assert np.all(dH[mask] == 0.0)
    assert np.any(dH[2, 1] != 0.0)


def test_ce_grad_all_skipped_is_empty():
    X, Wx, Wh, b, Wp, targets = _random_problem(5)
    targets[:] = -1
    Hs, _, _ = _ref.lstm_seq_forward(X, Wx, Wh, b)
    loss, n, correct, dH, dWp = _ref.ce_grad_over_seq(Hs, Wp, targets)
    assert (loss, n, correct) == (0.0, 0, 0)
    assert np.all(dH == 0.0)
    assert np.all(dWp == 0.0)


def test_ce_grad_tie_resolves_to_lowest_class():
    Hs = np.ones((2, 1, 3))  # T=1 scored step, all-equal logits under Wp=0
    Wp = np.zeros((4, 3))
    hit = _ref.ce_grad_over_seq(Hs, Wp, np.array([[0]], dtype=np.int64))
    miss = _ref.ce_grad_over_seq(Hs, Wp, np.array([[2]], dtype=np.int64))
    assert hit[2] == 1
    assert miss[2] == 0


# ---------------------------------------------------------------- backward


def _naive_window_grads(X, Wx, Wh, b, dH, window):
    """Windowed BPTT recomputed per batch element with the scalar LSTM cell."""
    T, B, _ = X.shape
    H = Wh.shape[1]
    params = LstmParams.from_arrays(Wx, Wh, b)
    for bi in range(B):
        state = LstmState.zeros(H)
        backs = []
        for t in range(T):
            state, back = lstm_step(X[t, bi], state, params)
            backs.append(back)
        for t in range(T):
            dh = dH[t, bi].copy()
            if not dh.any():
                continue
            dc = np.zeros(H)
            for hops, s in enumerate(range(t, -1, -1)):
                if hops >= window:
                    break
                _, dh, dc = backs[s](dh, dc)
    return params.Wx.grad, params.Wh.grad, params.b.grad


@pytest.mark.parametrize("window", [1, 2, 3, 5, 9])
def test_backward_window_matches_naive_recomputation(window):
    X, Wx, Wh, b, _, _ = _random_problem(6)
    rng = SplitMix64(60 + window)
    dH = uniform_values(
        (X.shape[0], X.shape[1], Wh.shape[1]), rng
    )
    Hs, Cs, G = _ref.lstm_seq_forward(X, Wx, Wh, b)
    got = _ref.lstm_seq_backward_window(X, Hs, Cs, G, Wh, dH, window)
    want = _naive_window_grads(X, Wx, Wh, b, dH, window)
    for g, w in zip(got, want):
        assert np.allclose(g, w, rtol=1e-9, atol=1e-11)


def test_backward_window_sparse_injections():
    X, Wx, Wh, b, _, _ = _random_problem(7)
    dH = np.zeros((X.shape[0], X.shape[1], Wh.shape[1]))
    dH[4, 0] = 1.0
    dH[1, 2] = -0.5
    Hs, Cs, G = _ref.lstm_seq_forward(X, Wx, Wh, b)
    got = _ref.lstm_seq_backward_window(X, Hs, Cs, G, Wh, dH, 2)
    want = _naive_window_grads(X, Wx, Wh, b, dH, 2)
    for g, w in zip(got, want):
        assert np.allclose(g, w, rtol=1e-9, atol=1e-11)


def test_backward_window_rejects_nonpositive():
    X, Wx, Wh, b, _, _ = _random_problem(8, T=2)
    Hs, Cs, G = _ref.lstm_seq_forward(X, Wx, Wh, b)
    dH = np.zeros((2, 3, 5))
    with pytest.raises(ValueError):
        _ref.lstm_seq_backward_window(X, Hs, Cs, G, Wh, dH, 0)


def test_full_window_matches_finite_differences():
    T, B, D, H, V = 4, 2, 3, 4, 5
    rng = SplitMix64(90)
    X = uniform_values((T, B, D), rng) * 2.0
    Wx = Param(uniform_values((4 * H, D), rng) * 2.0)
    Wh = Param(uniform_values((4 * H, H), rng) * 2.0)
    b = Param(uniform_values(4 * H, rng) * 2.0)
    Wp = Param(uniform_values((V, H), rng) * 2.0)
    targets = np.array([[1, 4], [0, 2], [-1, 3], [2, 0]], dtype=np.int64)

    def loss_fn():
        Hs, Cs, G = _ref.lstm_seq_forward(X, Wx.values, Wh.values, b.values)
        loss, _, _, dHmat, dWp = _ref.ce_grad_over_seq(Hs, Wp.values, targets)
        dWx, dWh, db = _ref.lstm_seq_backward_window(
            X, Hs, Cs, G, Wh.values, dHmat, T
        )
        Wx.grad += dWx
        Wh.grad += dWh
        b.grad += db
        Wp.grad += dWp
        return loss

    assert finite_diff_check(loss_fn, [Wx, Wh, b, Wp]) < 1e-4


# ---------------------------------------------------------------- agreement


_fast = None
try:
    from typobench._kernels import _fastcore as _fast
except ImportError:
    pass

needs_fast = pytest.mark.skipif(_fast is None, reason="compiled backend not built")

_SHAPES = [(1, 1, 2, 2, 3), (5, 4, 3, 6, 8), (7, 2, 228, 16, 11), (3, 8, 5, 5, 4)]


@needs_fast
@pytest.mark.parametrize("shape", _SHAPES)
def test_backends_agree_on_forward(shape):
    T, B, D, H, V = shape
    X, Wx, Wh, b, _, _ = _random_problem(sum(shape), T=T, B=B, D=D, H=H, V=V)
    ref_out = _ref.lstm_seq_forward(X, Wx, Wh, b)
    fast_out = _fast.lstm_seq_forward(X, Wx, Wh, b)
    for r, f in zip(ref_out, fast_out):
        assert np.allclose(r, f, rtol=1e-12, atol=1e-12)


@needs_fast
@pytest.mark.parametrize("shape", _SHAPES)
def test_backends_agree_on_ce_grad(shape):
    T, B, D, H, V = shape
    X, Wx, Wh, b, Wp, targets = _random_problem(sum(shape) + 1, T=T, B=B, D=D, H=H, V=V)
    Hs, _, _ = _ref.lstm_seq_forward(X, Wx, Wh, b)
    r = _ref.ce_grad_over_seq(Hs, Wp, targets)
    f = _fast.ce_grad_over_seq(Hs, Wp, targets)
    assert abs(r[0] - f[0]) < 1e-9
    assert r[1] == f[1] and r[2] == f[2]
    assert np.allclose(r[3], f[3], rtol=1e-11, atol=1e-12)
    assert np.allclose(r[4], f[4], rtol=1e-11, atol=1e-12)


@needs_fast
@pytest.mark.parametrize("window", [1, 2, 3, 4, 5])
def test_backends_agree_on_backward(window):
    X, Wx, Wh, b, _, _ = _random_problem(70 + window, T=6, B=3, D=5, H=4)
    rng = SplitMix64(window)
    dH = uniform_values((6, 3, 4), rng)
    dH[1, 0] = 0.0  # exercise the skip branch
    Hs, Cs, G = _ref.lstm_seq_forward(X, Wx, Wh, b)
    r = _ref.lstm_seq_backward_window(X, Hs, Cs, G, Wh, dH, window)
    f = _fast.lstm_seq_backward_window(X, Hs, Cs, G, Wh, dH, window)
    for a, c in zip(r, f):
        assert np.allclose(a, c, rtol=1e-10, atol=1e-12)


@needs_fast
def test_public_names_point_at_selected_backend():
    impl = _fast if kernels.BACKEND == "cython" else _ref
    assert kernels.lstm_seq_forward is impl.lstm_seq_forward
    assert kernels.ce_grad_over_seq is impl.ce_grad_over_seq
    assert kernels.lstm_seq_backward_window is impl.lstm_seq_backward_window
