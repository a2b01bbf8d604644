"""Random sources used by every protocol party.

Two profiles share one duck-typed interface (``integers``, ``random``,
``permutation``, ``spawn``):

* seeded: a counter-based Philox stream from numpy, reproducible bit-for-bit;
* system: an OS-backed CSPRNG for deployment, where masks must be
  unpredictable.
"""

from __future__ import annotations

import os
from typing import Optional, Union

import numpy as np


class SystemRandomSource:
    """Uniform integers drawn from ``os.urandom`` with rejection sampling."""

    def integers(self, low, high=None, size=None, dtype=np.uint64):
        if high is None:
            low, high = 0, low
        low, high = int(low), int(high)
        if high <= low:
            raise ValueError("high must exceed low")
        span = high - low
        count = 1 if size is None else int(np.prod(size))
        out = np.empty(count, dtype=np.uint64)
        if span == 1:
            out[:] = 0
        else:
            bits = (span - 1).bit_length()
            nbytes = (bits + 7) // 8
            mask = (1 << bits) - 1 if bits < 64 else (1 << 64) - 1
            filled = 0
            while filled < count:
                need = count - filled
                # acceptance rate is above 1/2, so 2x oversampling rarely loops
                raw = os.urandom(8 * max(2 * need, 8))
                cand = np.frombuffer(raw, dtype="<u8").copy()
                if nbytes < 8:
                    cand &= np.uint64(mask)
                if span < (1 << 64):
                    cand = cand[cand < np.uint64(span)]
                take = cand[:need]
                out[filled:filled + take.size] = take
                filled += take.size
        if low:
            out = out + np.uint64(low)
        out = out.astype(dtype, copy=False)
        if size is None:
            return out[0]
        return out.reshape(size)

    def random(self, size=None):
        draws = self.integers(0, 1 << 53, size=size)
        return np.asarray(draws, dtype=np.float64) / float(1 << 53)

    def permutation(self, n: int) -> np.ndarray:
        # Fisher-Yates with unbiased draws
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = int(self.integers(0, i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        if replace:
            return self.integers(0, n, size=size).astype(np.int64)
        return self.permutation(n)[:size]

    def spawn(self, n: int) -> list["SystemRandomSource"]:
        return [SystemRandomSource() for _ in range(n)]


RandomSource = Union[np.random.Generator, SystemRandomSource]


def make_rng(seed: Optional[int] = None) -> RandomSource:
    """Seeded Philox generator for tests/experiments, CSPRNG when ``seed`` is None."""
    if seed is None:
        return SystemRandomSource()
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def spawn(rng: RandomSource, n: int) -> list:
    """Independent child streams, derived before any concurrent use."""
    return list(rng.spawn(n))
