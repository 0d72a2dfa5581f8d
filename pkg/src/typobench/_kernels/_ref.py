"""Pure-numpy kernel backend.  See the package docstring for the API.

This is the readable reference: the compiled backend must agree with it to
float64 round-off on every input.  All heavy lifting is batched GEMMs; the
Python-level loop runs once per time step, not per word.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit as sigmoid


def lstm_seq_forward(X, Wx, Wh, b):
    X = np.ascontiguousarray(X, dtype=np.float64)
    T, B, D = X.shape
    H = Wh.shape[1]
    if Wx.shape != (4 * H, D) or b.shape != (4 * H,):
        raise ValueError(
            f"parameter shapes {Wx.shape}/{Wh.shape}/{b.shape} do not agree with X {X.shape}"
        )
    Hs = np.zeros((T + 1, B, H))
    Cs = np.zeros((T + 1, B, H))
    G = np.empty((T, B, 4 * H))
    # One GEMM covers every step's input contribution.
    XW = (X.reshape(T * B, D) @ Wx.T).reshape(T, B, 4 * H)
    WhT = Wh.T
    for t in range(T):
        z = XW[t] + Hs[t] @ WhT + b
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H : 2 * H])
        o = sigmoid(z[:, 2 * H : 3 * H])
        g = np.tanh(z[:, 3 * H :])
        c = f * Cs[t] + i * g
        Cs[t + 1] = c
        Hs[t + 1] = o * np.tanh(c)
        G[t, :, :H] = i
        G[t, :, H : 2 * H] = f
        G[t, :, 2 * H : 3 * H] = o
        G[t, :, 3 * H :] = g
    return Hs, Cs, G


def ce_grad_over_seq(Hs, Wp, targets):
    T = targets.shape[0]
    B = targets.shape[1]
    H = Hs.shape[2]
    dH = np.zeros((T, B, H))
    idx_t, idx_b = np.nonzero(targets >= 0)
    n = idx_t.shape[0]
    if n == 0:
        return 0.0, 0, 0, dH, np.zeros_like(Wp)
    Hv = Hs[idx_t + 1, idx_b]  # (n, H) hidden states at scored positions
    tv = targets[idx_t, idx_b]
    logits = Hv @ Wp.T
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    Z = e.sum(axis=1, keepdims=True)
    rows = np.arange(n)
    logp_t = (logits[rows, tv] - m[:, 0]) - np.log(Z[:, 0])
    loss = -float(logp_t.sum())
    correct = int((logits.argmax(axis=1) == tv).sum())
    P = e / Z
    P[rows, tv] -= 1.0
    dWp = P.T @ Hv
    dH[idx_t, idx_b] = P @ Wp
    return loss, n, correct, dH, dWp


def lstm_seq_backward_window(X, Hs, Cs, G, Wh, dH, window):
    if window < 1:
        raise ValueError("window must be >= 1")
    T, B, D = X.shape
    H = Hs.shape[2]
    dWx = np.zeros((4 * H, D))
    dWh = np.zeros((4 * H, H))
    db = np.zeros(4 * H)
    # Each step's dH injection opens a gradient stream allowed `window`
    # cell-backwards before it dies.  Streams of different ages must stay
    # separate (they die at different steps); parameter gradients only need
    # the per-step sum of their dz vectors.
    streams: list[list] = []  # [dh (B,H), dc (B,H), hops_left]
    for t in range(T - 1, -1, -1):
        if dH[t].any():
            streams.append([dH[t], np.zeros((B, H)), window])
        if not streams:
            continue
        i = G[t, :, :H]
        f = G[t, :, H : 2 * H]
        o = G[t, :, 2 * H : 3 * H]
        g = G[t, :, 3 * H :]
        tc = np.tanh(Cs[t + 1])
        d_tc = 1.0 - tc * tc
        di_z = g * i * (1.0 - i)
        df_z = Cs[t] * f * (1.0 - f)
        do_z = tc * o * (1.0 - o)
        dg_z = i * (1.0 - g * g)
        dz_sum = np.zeros((B, 4 * H))
        survivors: list[list] = []
        for dh, dc, hops in streams:
            dc_tot = dc + dh * o * d_tc
            dz = np.empty((B, 4 * H))
            dz[:, :H] = dc_tot * di_z
            dz[:, H : 2 * H] = dc_tot * df_z
            dz[:, 2 * H : 3 * H] = dh * do_z
            dz[:, 3 * H :] = dc_tot * dg_z
            dz_sum += dz
            if hops > 1 and t > 0:
                survivors.append([dz @ Wh, dc_tot * f, hops - 1])
        dWx += dz_sum.T @ X[t]
        dWh += dz_sum.T @ Hs[t]
        db += dz_sum.sum(axis=0)
        streams = survivors
    return dWx, dWh, db
