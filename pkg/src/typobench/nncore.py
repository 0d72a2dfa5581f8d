"""Minimal neural numeric core: affine maps, an LSTM cell, softmax and
cross-entropy, clipped SGD, and a finite-difference gradient checker.

Everything is float64 and every backward pass is written by hand.  Forward
functions return `(output, backward)` where `backward` consumes the output
gradient, accumulates into each parameter's `.grad`, and returns the input
gradient.  No graphs, no tape: the call site owns the chain rule.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.special import expit as sigmoid

from .rng import SplitMix64

__all__ = [
    "LstmParams",
    "LstmState",
    "OptimConfig",
    "Param",
    "affine",
    "clip_and_step",
    "cross_entropy",
    "finite_diff_check",
    "global_grad_norm",
    "lstm_step",
    "softmax",
    "uniform_values",
]


class Param:
    """A learned tensor with a same-shaped gradient accumulator."""

    __slots__ = ("values", "grad", "name")

    def __init__(self, values, name: str = ""):
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.grad = np.zeros_like(self.values)
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Param({self.name or 'unnamed'}, shape={self.values.shape})"


def uniform_values(shape, rng: SplitMix64, scale: float = 0.1) -> np.ndarray:
    """Uniform(-scale, scale) draws from the portable stream, row-major."""
    n = int(np.prod(shape))
    return ((rng.doubles(n) * 2.0 - 1.0) * scale).reshape(shape)


@dataclasses.dataclass
class LstmState:
    hidden: np.ndarray
    cell: np.ndarray

    @classmethod
    def zeros(cls, hidden_size: int) -> "LstmState":
        return cls(np.zeros(hidden_size), np.zeros(hidden_size))


class LstmParams:
    """Gate-stacked LSTM parameters: Wx (4H, D), Wh (4H, H), b (4H,).

    Row blocks are ordered [input, forget, output, candidate].  The forget
    block of `b` starts at 1.0 so early training does not flush the cell.
    """

    def __init__(self, input_dim: int, hidden_size: int, rng: SplitMix64):
        h = hidden_size
        self.input_dim = input_dim
        self.hidden_size = h
        self.Wx = Param(uniform_values((4 * h, input_dim), rng), "lstm.Wx")
        self.Wh = Param(uniform_values((4 * h, h), rng), "lstm.Wh")
        b = uniform_values(4 * h, rng)
        b[h : 2 * h] = 1.0
        self.b = Param(b, "lstm.b")

    @classmethod
    def from_arrays(cls, Wx, Wh, b) -> "LstmParams":
        h = Wh.shape[1]
        if Wx.shape[0] != 4 * h or Wh.shape[0] != 4 * h or b.shape != (4 * h,):
            raise ValueError(
                f"inconsistent LSTM array shapes {Wx.shape}/{Wh.shape}/{b.shape}"
            )
        self = cls.__new__(cls)
        self.input_dim = Wx.shape[1]
        self.hidden_size = h
        self.Wx = Param(Wx, "lstm.Wx")
        self.Wh = Param(Wh, "lstm.Wh")
        self.b = Param(b, "lstm.b")
        return self

    def all(self) -> list[Param]:
        return [self.Wx, self.Wh, self.b]


def affine(x: np.ndarray, W: Param, b: Param | None):
    """y = W x (+ b).  Returns (y, backward); backward(dy) -> dx."""
    if W.values.shape[1] != x.shape[0]:
        raise ValueError(f"affine shape mismatch: W {W.values.shape} vs x {x.shape}")
    y = W.values @ x
    if b is not None:
        if b.values.shape != y.shape:
            raise ValueError(f"affine bias shape {b.values.shape} vs {y.shape}")
        y = y + b.values

    def backward(dy: np.ndarray) -> np.ndarray:
        W.grad += np.outer(dy, x)
        if b is not None:
            b.grad += dy
        return W.values.T @ dy

    return y, backward


def lstm_step(x: np.ndarray, state: LstmState, params: LstmParams):
    """One LSTM step.  Returns (new_state, backward).

    backward(dh, dc) -> (dx, dh_prev, dc_prev), accumulating parameter
    gradients.  dc is the gradient arriving directly at the new cell (zero
    unless the caller truncates there).
    """
    h = params.hidden_size
    if x.shape[0] != params.input_dim:
        raise ValueError(f"lstm input size {x.shape[0]} != {params.input_dim}")
    z = params.Wx.values @ x + params.Wh.values @ state.hidden + params.b.values
    i = sigmoid(z[:h])
    f = sigmoid(z[h : 2 * h])
    o = sigmoid(z[2 * h : 3 * h])
    g = np.tanh(z[3 * h :])
    c_new = f * state.cell + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    new_state = LstmState(h_new, c_new)

    def backward(dh: np.ndarray, dc: np.ndarray):
        dc_total = dc + dh * o * (1.0 - tc * tc)
        dz = np.empty(4 * h)
        dz[:h] = dc_total * g * i * (1.0 - i)
        dz[h : 2 * h] = dc_total * state.cell * f * (1.0 - f)
        dz[2 * h : 3 * h] = dh * tc * o * (1.0 - o)
        dz[3 * h :] = dc_total * i * (1.0 - g * g)
        params.Wx.grad += np.outer(dz, x)
        params.Wh.grad += np.outer(dz, state.hidden)
        params.b.grad += dz
        dx = params.Wx.values.T @ dz
        dh_prev = params.Wh.values.T @ dz
        dc_prev = dc_total * f
        return dx, dh_prev, dc_prev

    return new_state, backward


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Overflow-safe softmax (max subtraction before exponentiation)."""
    shifted = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def cross_entropy(p: np.ndarray, target: int) -> tuple[float, np.ndarray]:
    """Negative log likelihood of `target` under distribution `p`.

    Returns (loss, gradient w.r.t. the *logits* that produced p), using the
    softmax/CE identity dL/dz = p - onehot(target).
    """
    if not 0 <= target < p.shape[0]:
        raise ValueError(f"target {target} out of range for {p.shape[0]} classes")
    loss = -np.log(max(p[target], 1e-300))
    dlogits = p.copy()
    dlogits[target] -= 1.0
    return float(loss), dlogits


def global_grad_norm(params) -> float:
    total = 0.0
    for p in params:
        total += float(np.sum(p.grad * p.grad))
    return float(np.sqrt(total))


def clip_and_step(params, cfg: "OptimConfig") -> None:
    """Global-norm gradient clipping followed by an SGD step; zeroes grads."""
    norm = global_grad_norm(params)
    scale = cfg.clip_norm / norm if norm > cfg.clip_norm else 1.0
    for p in params:
        p.values -= cfg.learning_rate * scale * p.grad
        p.zero_grad()


@dataclasses.dataclass(frozen=True)
class OptimConfig:
    learning_rate: float
    clip_norm: float = 1.0
    epochs: int = 5
    batch_size: int = 20

    def __post_init__(self):
        for field in ("learning_rate", "clip_norm", "epochs", "batch_size"):
            if getattr(self, field) <= 0:
                raise ValueError(f"{field} must be positive")


def finite_diff_check(loss_fn, params, eps: float = 1e-5, max_coords: int = 64) -> float:
    """Max relative error between loss_fn's accumulated gradients and central
    finite differences over sampled coordinates.

    `loss_fn()` must be deterministic, return the scalar loss, and populate
    every `.grad` in `params` as a side effect.  Relative error per
    coordinate is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    At most `max_coords` coordinates per parameter are probed, drawn from a
    fixed stream so reruns check identical coordinates.
    """
    for p in params:
        p.zero_grad()
    loss_fn()
    analytic = [p.grad.copy() for p in params]
    for p in params:
        p.zero_grad()

    pick = SplitMix64(0x5EED)
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.values.reshape(-1)
        n = flat.shape[0]
        coords = range(n) if n <= max_coords else sorted(
            {pick.randbelow(n) for _ in range(max_coords)}
        )
        for j in coords:
            orig = flat[j]
            flat[j] = orig + eps
            hi = loss_fn()
            flat[j] = orig - eps
            lo = loss_fn()
            flat[j] = orig
            numeric = (hi - lo) / (2.0 * eps)
            ana = a.reshape(-1)[j]
            err = abs(ana - numeric) / max(abs(ana), abs(numeric), 1e-8)
            worst = max(worst, err)
    for p in params:
        p.zero_grad()
    return worst
