"""Seeded xoshiro256** generator (state expanded with splitmix64).

Every stochastic choice in the package draws from this generator so that a
run is reproducible from its integer seed alone, independent of numpy's
bit-generator versions.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


class Xoshiro256:
    """xoshiro256** with a few sampling helpers."""

    def __init__(self, seed: int):
        sm = seed & _MASK
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self._s = s
        self._spare_normal: float | None = None

    @classmethod
    def from_state(cls, state) -> "Xoshiro256":
        gen = cls(0)
        gen._s = [int(v) & _MASK for v in state]
        return gen

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

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) (Lemire-free rejection on the top bits)."""
        if n <= 0:
            raise ValueError("n must be positive")
        bits = max(n - 1, 1).bit_length()
        while True:
            r = self.next_u64() >> (64 - bits)
            if r < n:
                return r

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> np.ndarray:
        idx = list(range(n))
        self.shuffle(idx)
        return np.asarray(idx, dtype=np.int64)

    def sample(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from range(n), in draw order (partial Fisher-Yates)."""
        if k > n:
            raise ValueError(f"cannot draw {k} distinct items from {n}")
        idx = list(range(n))
        for i in range(k):
            j = i + self.randbelow(n - i)
            idx[i], idx[j] = idx[j], idx[i]
        return np.asarray(idx[:k], dtype=np.int64)

    def normal(self) -> float:
        """Standard normal via Box-Muller; the second variate is cached."""
        if self._spare_normal is not None:
            z, self._spare_normal = self._spare_normal, None
            return z
        u1 = 1.0 - self.random()  # (0, 1]
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def normals(self, shape) -> np.ndarray:
        size = int(np.prod(shape))
        return np.fromiter((self.normal() for _ in range(size)), dtype=np.float64, count=size).reshape(shape)

    def spawn(self, stream: int) -> "Xoshiro256":
        """Independent child generator for a named sub-stream."""
        _, mixed = splitmix64(self.next_u64() ^ ((stream * 0xD1B54A32D192ED03) & _MASK))
        return Xoshiro256(mixed)


def derive_seed(seed: int, stream: int) -> int:
    """Deterministic 64-bit seed for sub-stream `stream` of a base seed."""
    _, a = splitmix64((seed & _MASK) ^ ((stream * 0x9E3779B97F4A7C15) & _MASK))
    _, b = splitmix64(a)
    return b
