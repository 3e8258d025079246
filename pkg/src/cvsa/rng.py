"""Deterministic random numbers: SplitMix64-seeded xoshiro256**.

Scalar draws (sampling boxes, probabilities, orderings) come straight from the
generator. Bulk arrays (noise textures, weight init) come from a numpy PCG64
generator seeded by one xoshiro draw, which is also platform independent.
"""
import math

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> tuple[int, int]:
    """Advance a SplitMix64 state; return (new_state, output)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return x, z ^ (z >> 31)


def mix_seed(master: int, *keys: int) -> int:
    """Derive a child seed from ``master`` and integer keys (e.g. image index, step)."""
    state = master & _MASK
    for k in keys:
        state, out = splitmix64(state ^ ((k * 0xD1B54A32D192ED03) & _MASK))
        state = out
    return splitmix64(state)[1]


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


class Rng:
    """xoshiro256** generator.

    >>> Rng(7).next_u64() == Rng(7).next_u64()
    True
    """

    __slots__ = ("seed", "_s")

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK
        sm = self.seed
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self._s = s

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK, 7) * 9) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def integers(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive (rejection sampling, no modulo bias)."""
        if hi < lo:
            raise ValueError(f"empty integer range [{lo}, {hi}]")
        span = hi - lo + 1
        if span == 1:
            return lo
        limit = (1 << 64) - ((1 << 64) % span)
        while True:
            x = self.next_u64()
            if x < limit:
                return lo + x % span

    def bernoulli(self, p: float) -> bool:
        return self.random() < p

    def log_uniform(self, lo: float, hi: float) -> float:
        return math.exp(self.uniform(math.log(lo), math.log(hi)))

    def permutation(self, n: int) -> list[int]:
        items = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.integers(0, i)
            items[i], items[j] = items[j], items[i]
        return items

    def numpy(self) -> np.random.Generator:
        """A numpy generator seeded from the next draw, for bulk arrays."""
        return np.random.Generator(np.random.PCG64(self.next_u64()))

    def state(self) -> list[int]:
        return list(self._s)

    def set_state(self, state: list[int]) -> None:
        if len(state) != 4:
            raise ValueError("xoshiro256** state has four words")
        self._s = [int(v) & _MASK for v in state]
