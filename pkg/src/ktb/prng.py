"""SplitMix64 generator used everywhere sampling must be replayable.

The sequence sampler and the synthetic environment draw from this generator
instead of numpy's so that draws can be reproduced bit-for-bit by foreign
bindings from nothing but the seed (see docs/sampling.md for the exact
algorithm and test vectors). Bounded draws use plain modulo; the bias is
irrelevant at our range sizes and keeps the contract trivial to re-implement.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        return z ^ (z >> 31)

    def bounded(self, n: int) -> int:
        """Draw an integer in [0, n). Always consumes exactly one draw."""
        if n <= 0:
            raise ValueError("bounded() needs n >= 1")
        return self.next_u64() % n

    def uniform(self) -> float:
        """Float in [0, 1) with 53 bits of the next draw."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def derive(self, salt: int) -> "SplitMix64":
        """Independent stream keyed by (current seed, salt)."""
        child = SplitMix64((self.state ^ (salt * _MIX2)) & _MASK)
        child.next_u64()
        return child
