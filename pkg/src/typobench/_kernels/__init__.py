"""Hot numeric kernels behind the word-recognition trainer.

Two interchangeable backends compute float64 results that agree to
round-off: `_fastcore` (compiled extension, BLAS-backed) and `_ref`
(plain numpy).
The compiled one is preferred when importable; set TYPOBENCH_KERNEL to
`numpy` or `cython` to force a choice (forcing `cython` raises if the
extension is missing instead of silently falling back).

Shared API (shapes first, gate blocks ordered [input, forget, output,
candidate] along the last axis):

- lstm_seq_forward(X (T,B,D), Wx (4H,D), Wh (4H,H), b (4H,))
    -> Hs (T+1,B,H), Cs (T+1,B,H), G (T,B,4H)
  Hs[0]/Cs[0] are the zero initial state; Hs[t+1] follows step t; G holds
  post-activation gates.

- ce_grad_over_seq(Hs, Wp (V,H), targets (T,B) int64)
    -> (loss_sum, n_words, n_correct, dH (T,B,H), dWp (V,H))
  Softmax cross-entropy of Wp @ h against targets; target -1 skips a
  position entirely.  Argmax ties resolve to the lowest class id.

- lstm_seq_backward_window(X, Hs, Cs, G, Wh, dH (T,B,H), window)
    -> (dWx, dWh, db)
  Backpropagates each step's dH injection through at most `window` LSTM
  steps (the truncated-BPTT rule: the current word plus window-1
  predecessors), accumulating parameter gradients only.
"""

import os

_FUNCS = ("lstm_seq_forward", "ce_grad_over_seq", "lstm_seq_backward_window")

_forced = os.environ.get("TYPOBENCH_KERNEL", "").strip().lower()
if _forced not in ("", "numpy", "cython"):
    raise ImportError(
        f"TYPOBENCH_KERNEL must be 'numpy' or 'cython', got {_forced!r}"
    )

if _forced == "numpy":
    from . import _ref as _impl

    BACKEND = "numpy"
else:
    try:
        from . import _fastcore as _impl

        BACKEND = "cython"
    except ImportError:
        if _forced == "cython":
            raise
        from . import _ref as _impl

        BACKEND = "numpy"

lstm_seq_forward = _impl.lstm_seq_forward
ce_grad_over_seq = _impl.ce_grad_over_seq
lstm_seq_backward_window = _impl.lstm_seq_backward_window

__all__ = ["BACKEND", *_FUNCS]
