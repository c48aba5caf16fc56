"""SplitMix64 stream used for mesh perturbations.

Small and fully specified so generated meshes are reproducible bit for bit
on any platform: state advances by 0x9E3779B97F4A7C15, the output mixer is
the standard SplitMix64 finalizer, and a double in [0, 1) takes the top 53
bits of the output.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class SplitMix64:
    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def random(self, n: int) -> np.ndarray:
        """``n`` doubles uniform on [0, 1)."""
        return np.array([(self.next_u64() >> 11) * 2.0 ** -53 for _ in range(n)])

    def uniform(self, low: float, high: float, n: int) -> np.ndarray:
        return low + (high - low) * self.random(n)
