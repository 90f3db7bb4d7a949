"""Portable seedable random stream (SplitMix64).

All randomness that feeds query streams goes through :class:`SplitMix64`
so that a given 64-bit seed reproduces the same parameter sequence on any
platform and in any implementation of the same scheme.  The generator is
the standard SplitMix64 mix function (Steele, Lea, Flood 2014) applied to
a counter advanced by the golden-gamma constant; uniform doubles take the
53 high bits of each output.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    """Deterministic 64-bit generator; one instance per stream."""

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK

    def next_uint64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform double in [0, 1) using the 53 high bits."""
        return (self.next_uint64() >> 11) * 2.0**-53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def uniform_vector(self, lows, highs) -> list[float]:
        """One draw per component, in component order."""
        return [self.uniform(lo, hi) for lo, hi in zip(lows, highs)]
