"""Seedable, portable random stream used everywhere randomness is needed.

The generator is SplitMix64 (Steele, Lea & Flood's 64-bit mixer): state
advances by the golden-gamma constant 0x9E3779B97F4A7C15 and each output is
the xor-shift-multiply finalizer of the new state.  Ten lines of integer
arithmetic, so an implementation in any language reproduces the exact
stream; that is the point: attack samples and trained parameters must be
replayable bit-for-bit from a single integer seed.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_DOUBLE_SCALE = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    """SplitMix64 output finalizer for one 64-bit value."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Deterministic 64-bit stream; seeds may be any Python int."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK64
        return mix64(self.state)

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased via rejection sampling."""
        if n <= 0:
            raise ValueError(f"randbelow needs n >= 1, got {n}")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """53-bit-resolution double in [lo, hi)."""
        return lo + (hi - lo) * ((self.next_u64() >> 11) * _DOUBLE_SCALE)

    def choice(self, seq):
        return seq[self.randbelow(len(seq))]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates, high index down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def doubles(self, n: int) -> np.ndarray:
        """Vectorized batch of `uniform()` draws; consumes exactly n outputs.

        Produces the same values next_u64 would, so scalar and bulk callers
        share one reproducible stream.
        """
        if n == 0:
            return np.zeros(0)
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * _GAMMA) & _MASK64
        return (z >> np.uint64(11)).astype(np.float64) * _DOUBLE_SCALE

    def spawn(self, tag: int) -> "SplitMix64":
        """Independent child stream for `tag` (e.g. an example index)."""
        return SplitMix64(mix64(self.state ^ _GAMMA ^ tag))
