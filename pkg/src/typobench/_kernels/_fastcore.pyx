# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel backend.

Mirrors `_ref.py` operation for operation: identical GEMM decomposition
(BLAS dgemm via the row-major transpose trick), with the element-wise gate
math done in C loops instead of numpy ufuncs.  Results agree with the
reference to float64 round-off; any divergence beyond summation-order ulps
is a bug.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, tanh
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline void _gemm(double[:, ::1] A, bint ta, double[:, ::1] B, bint tb,
                       double[:, ::1] C, double alpha, double beta) noexcept nogil:
    """C (m,n) = alpha * op(A) @ op(B) + beta * C with row-major arrays.

    BLAS wants column-major, so compute C^T = op(B)^T @ op(A)^T: the
    column-major view of a row-major buffer is its transpose."""
    cdef int m = C.shape[0]
    cdef int n = C.shape[1]
    cdef int k = A.shape[0] if ta else A.shape[1]
    cdef char transa = c'T' if tb else c'N'
    cdef char transb = c'T' if ta else c'N'
    cdef int lda = <int> B.shape[1]
    cdef int ldb = <int> A.shape[1]
    cdef int ldc = n
    dgemm(&transa, &transb, &n, &m, &k, &alpha,
          &B[0, 0], &lda, &A[0, 0], &ldb, &beta, &C[0, 0], &ldc)


def lstm_seq_forward(X, Wx, Wh, b):
    X = np.ascontiguousarray(X, dtype=np.float64)
    Wx = np.ascontiguousarray(Wx, dtype=np.float64)
    Wh = np.ascontiguousarray(Wh, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t T = X.shape[0]
    cdef Py_ssize_t B = X.shape[1]
    cdef Py_ssize_t D = X.shape[2]
    cdef Py_ssize_t H = Wh.shape[1]
    if Wx.shape != (4 * H, D) or b.shape != (4 * H,):
        raise ValueError(
            f"parameter shapes {Wx.shape}/{Wh.shape}/{b.shape} do not agree with X {X.shape}"
        )
    Hs = np.zeros((T + 1, B, H))
    Cs = np.zeros((T + 1, B, H))
    G = np.empty((T, B, 4 * H))
    cdef double[:, :, ::1] Hs_v = Hs
    cdef double[:, :, ::1] Cs_v = Cs
    cdef double[:, :, ::1] G_v = G
    cdef double[:, ::1] Wx_v = Wx
    cdef double[:, ::1] Wh_v = Wh
    cdef double[::1] b_v = b
    cdef double[:, ::1] X2 = X.reshape(T * B, D)
    # One GEMM covers every step's input contribution, landing in G.
    cdef double[:, ::1] G2 = G.reshape(T * B, 4 * H)
    _gemm(X2, False, Wx_v, True, G2, 1.0, 0.0)
    cdef Py_ssize_t t, r, j
    cdef double zi, zf, zo, zg, gi, gf, go, gg, c, tc
    with nogil:
        for t in range(T):
            # Accumulate the recurrent term, then finish element-wise.
            _gemm(Hs_v[t], False, Wh_v, True, G_v[t], 1.0, 1.0)
            for r in range(B):
                for j in range(H):
                    zi = G_v[t, r, j] + b_v[j]
                    zf = G_v[t, r, H + j] + b_v[H + j]
                    zo = G_v[t, r, 2 * H + j] + b_v[2 * H + j]
                    zg = G_v[t, r, 3 * H + j] + b_v[3 * H + j]
                    gi = 1.0 / (1.0 + exp(-zi))
                    gf = 1.0 / (1.0 + exp(-zf))
                    go = 1.0 / (1.0 + exp(-zo))
                    gg = tanh(zg)
                    c = gf * Cs_v[t, r, j] + gi * gg
                    tc = tanh(c)
                    Cs_v[t + 1, r, j] = c
                    Hs_v[t + 1, r, j] = go * tc
                    G_v[t, r, j] = gi
                    G_v[t, r, H + j] = gf
                    G_v[t, r, 2 * H + j] = go
                    G_v[t, r, 3 * H + j] = gg
    return Hs, Cs, G


def ce_grad_over_seq(Hs, Wp, targets):
    Hs = np.ascontiguousarray(Hs, dtype=np.float64)
    Wp = np.ascontiguousarray(Wp, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.int64)
    cdef Py_ssize_t T = targets.shape[0]
    cdef Py_ssize_t B = targets.shape[1]
    cdef Py_ssize_t H = Hs.shape[2]
    cdef Py_ssize_t V = Wp.shape[0]
    dH = np.zeros((T, B, H))
    idx_t, idx_b = np.nonzero(targets >= 0)
    cdef Py_ssize_t n = idx_t.shape[0]
    if n == 0:
        return 0.0, 0, 0, dH, np.zeros_like(Wp)
    Hv = np.ascontiguousarray(Hs[idx_t + 1, idx_b])
    tv = np.ascontiguousarray(targets[idx_t, idx_b])
    P = np.empty((n, V))
    cdef double[:, ::1] P_v = P
    cdef double[:, ::1] Hv_v = Hv
    cdef double[:, ::1] Wp_v = Wp
    cdef cnp.int64_t[::1] tv_v = tv
    _gemm(Hv_v, False, Wp_v, True, P_v, 1.0, 0.0)  # logits, softmaxed in place
    cdef double loss = 0.0
    cdef Py_ssize_t correct = 0
    cdef Py_ssize_t r, j, best
    cdef double m, z, lt, e
    with nogil:
        for r in range(n):
            m = P_v[r, 0]
            best = 0
            for j in range(1, V):
                if P_v[r, j] > m:
                    m = P_v[r, j]
                    best = j
            if best == tv_v[r]:
                correct += 1
            lt = P_v[r, tv_v[r]]
            z = 0.0
            for j in range(V):
                e = exp(P_v[r, j] - m)
                P_v[r, j] = e
                z += e
            loss -= (lt - m) - log(z)
            for j in range(V):
                P_v[r, j] /= z
            P_v[r, tv_v[r]] -= 1.0
    dWp = np.empty((V, H))
    dHv = np.empty((n, H))
    cdef double[:, ::1] dWp_v = dWp
    cdef double[:, ::1] dHv_v = dHv
    _gemm(P_v, True, Hv_v, False, dWp_v, 1.0, 0.0)
    _gemm(P_v, False, Wp_v, False, dHv_v, 1.0, 0.0)
    dH[idx_t, idx_b] = dHv
    return float(loss), int(n), int(correct), dH, dWp


cdef bint _any_nonzero(double[:, ::1] M) noexcept nogil:
    cdef Py_ssize_t r, j
    for r in range(M.shape[0]):
        for j in range(M.shape[1]):
            if M[r, j] != 0.0:
                return True
    return False


def lstm_seq_backward_window(X, Hs, Cs, G, Wh, dH, window):
    if window < 1:
        raise ValueError("window must be >= 1")
    X = np.ascontiguousarray(X, dtype=np.float64)
    Hs = np.ascontiguousarray(Hs, dtype=np.float64)
    Cs = np.ascontiguousarray(Cs, dtype=np.float64)
    G = np.ascontiguousarray(G, dtype=np.float64)
    Wh = np.ascontiguousarray(Wh, dtype=np.float64)
    dH = np.ascontiguousarray(dH, dtype=np.float64)
    cdef Py_ssize_t T = X.shape[0]
    cdef Py_ssize_t B = X.shape[1]
    cdef Py_ssize_t D = X.shape[2]
    cdef Py_ssize_t H = Hs.shape[2]
    dWx = np.zeros((4 * H, D))
    dWh = np.zeros((4 * H, H))
    db = np.zeros(4 * H)
    cdef double[:, ::1] dWx_v = dWx
    cdef double[:, ::1] dWh_v = dWh
    cdef double[::1] db_v = db
    cdef double[:, :, ::1] X_v = X
    cdef double[:, :, ::1] Hs_v = Hs
    cdef double[:, :, ::1] Cs_v = Cs
    cdef double[:, :, ::1] G_v = G
    cdef double[:, :, ::1] dH_v = dH
    cdef double[:, ::1] Wh_v = Wh
    # Shared per-step local-derivative factors (same for every stream).
    di_z = np.empty((B, H)); df_z = np.empty((B, H))
    do_z = np.empty((B, H)); dg_z = np.empty((B, H))
    odtc = np.empty((B, H)); fcur = np.empty((B, H))
    dz = np.empty((B, 4 * H)); dz_sum = np.empty((B, 4 * H))
    dc_tot = np.empty((B, H))
    cdef double[:, ::1] di_v = di_z, df_v = df_z, do_v = do_z, dg_v = dg_z
    cdef double[:, ::1] odtc_v = odtc, fcur_v = fcur
    cdef double[:, ::1] dz_v = dz, dzs_v = dz_sum, dct_v = dc_tot
    cdef double[:, ::1] dh_v, dc_v, ndh_v, ndc_v
    cdef Py_ssize_t t, r, j
    cdef int hops
    cdef double gi, gf, go, gg, tc, dtc, tot
    # Streams as in the reference: [dh (B,H), dc (B,H), hops_left], ordered
    # oldest to newest so float accumulation matches.
    streams: list = []
    survivors: list = []
    for t in range(T - 1, -1, -1):
        if _any_nonzero(dH_v[t]):
            streams.append([dH[t], None, window])
        if not streams:
            continue
        with nogil:
            for r in range(B):
                for j in range(H):
                    gi = G_v[t, r, j]
                    gf = G_v[t, r, H + j]
                    go = G_v[t, r, 2 * H + j]
                    gg = G_v[t, r, 3 * H + j]
                    tc = tanh(Cs_v[t + 1, r, j])
                    dtc = 1.0 - tc * tc
                    di_v[r, j] = gg * gi * (1.0 - gi)
                    df_v[r, j] = Cs_v[t, r, j] * gf * (1.0 - gf)
                    do_v[r, j] = tc * go * (1.0 - go)
                    dg_v[r, j] = gi * (1.0 - gg * gg)
                    odtc_v[r, j] = go * dtc
                    fcur_v[r, j] = gf
                    dzs_v[r, j] = 0.0
                    dzs_v[r, H + j] = 0.0
                    dzs_v[r, 2 * H + j] = 0.0
                    dzs_v[r, 3 * H + j] = 0.0
        survivors = []
        for stream in streams:
            dh_v = stream[0]
            hops = stream[2]
            if stream[1] is None:
                with nogil:
                    for r in range(B):
                        for j in range(H):
                            dct_v[r, j] = dh_v[r, j] * odtc_v[r, j]
            else:
                dc_v = stream[1]
                with nogil:
                    for r in range(B):
                        for j in range(H):
                            dct_v[r, j] = dc_v[r, j] + dh_v[r, j] * odtc_v[r, j]
            with nogil:
                for r in range(B):
                    for j in range(H):
                        tot = dct_v[r, j]
                        dz_v[r, j] = tot * di_v[r, j]
                        dz_v[r, H + j] = tot * df_v[r, j]
                        dz_v[r, 2 * H + j] = dh_v[r, j] * do_v[r, j]
                        dz_v[r, 3 * H + j] = tot * dg_v[r, j]
                        dzs_v[r, j] += dz_v[r, j]
                        dzs_v[r, H + j] += dz_v[r, H + j]
                        dzs_v[r, 2 * H + j] += dz_v[r, 2 * H + j]
                        dzs_v[r, 3 * H + j] += dz_v[r, 3 * H + j]
            if hops > 1 and t > 0:
                ndh = np.empty((B, H))
                ndc = np.empty((B, H))
                ndh_v = ndh
                ndc_v = ndc
                with nogil:
                    _gemm(dz_v, False, Wh_v, False, ndh_v, 1.0, 0.0)
                    for r in range(B):
                        for j in range(H):
                            ndc_v[r, j] = dct_v[r, j] * fcur_v[r, j]
                survivors.append([ndh, ndc, hops - 1])
        with nogil:
            _gemm(dzs_v, True, X_v[t], False, dWx_v, 1.0, 1.0)
            _gemm(dzs_v, True, Hs_v[t], False, dWh_v, 1.0, 1.0)
            for r in range(B):
                for j in range(4 * H):
                    db_v[j] += dzs_v[r, j]
        streams = survivors
    return dWx, dWh, db
