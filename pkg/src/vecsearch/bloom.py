"""Bloom-filter visited set for graph traversal.

Bit positions come from ``h`` seeded 64-bit mixers (the splitmix64
finalizer applied to ``id + seed``), reduced modulo the bit count. The
scalar path and the vectorized numpy path compute the same positions.
"""

from __future__ import annotations

import math

import numpy as np

DEFAULT_BITS = 1 << 18
DEFAULT_HASHES = 3
DEFAULT_SEED = 0x5EED

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def _mix64(z: int) -> int:
    z = (z ^ (z >> 30)) * _M1 & _MASK
    z = (z ^ (z >> 27)) * _M2 & _MASK
    return z ^ (z >> 31)


def _mix64_np(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def derive_seeds(seed: int, h: int) -> tuple[int, ...]:
    """``h`` distinct 64-bit hash seeds from one base seed (splitmix64 stream)."""
    state = seed & _MASK
    out = []
    for _ in range(h):
        state = (state + _GOLDEN) & _MASK
        out.append(_mix64(state))
    return tuple(out)


def bloom_fp_rate(h: int, b: int, m: int) -> float:
    """False-positive probability (1 - exp(-h m / b))^h after ``m`` insertions."""
    if b < 1 or h < 1 or m < 0:
        raise ValueError("need b >= 1, h >= 1 and m >= 0")
    return (-math.expm1(-h * m / b)) ** h


class BloomVisitedSet:
    """Visited-node tracker with no false negatives and tunable false positives."""

    def __init__(self, b: int = DEFAULT_BITS, h: int = DEFAULT_HASHES, seed: int = DEFAULT_SEED):
        if b < 1 or h < 1:
            raise ValueError("need b >= 1 bits and h >= 1 hashes")
        self.b = b
        self.h = h
        self.seeds = derive_seeds(seed, h)
        self._bits = bytearray((b + 7) // 8)
        self.inserted = 0

    def _positions(self, x: int) -> list[int]:
        b = self.b
        return [_mix64((x + s) & _MASK) % b for s in self.seeds]

    def add(self, x: int) -> None:
        bits = self._bits
        for p in self._positions(x):
            bits[p >> 3] |= 1 << (p & 7)
        self.inserted += 1

    def __contains__(self, x: int) -> bool:
        bits = self._bits
        for p in self._positions(x):
            if not bits[p >> 3] & (1 << (p & 7)):
                return False
        return True

    contains = __contains__

    def _positions_np(self, xs) -> np.ndarray:
        x = np.asarray(xs, dtype=np.int64).astype(np.uint64)
        b = np.uint64(self.b)
        return np.stack([_mix64_np(x + np.uint64(s)) % b for s in self.seeds])

    def add_many(self, xs) -> None:
        pos = self._positions_np(xs).ravel()
        view = np.frombuffer(self._bits, dtype=np.uint8)
        np.bitwise_or.at(view, pos >> np.uint64(3), (1 << (pos & np.uint64(7))).astype(np.uint8))
        self.inserted += int(np.asarray(xs).size)

    def contains_many(self, xs) -> np.ndarray:
        pos = self._positions_np(xs)
        view = np.frombuffer(self._bits, dtype=np.uint8)
        hit = (view[pos >> np.uint64(3)] >> (pos & np.uint64(7)).astype(np.uint8)) & 1
        return np.all(hit.astype(bool), axis=0)

    def fp_rate(self) -> float:
        return bloom_fp_rate(self.h, self.b, self.inserted)


class ExactVisitedSet(set):
    """Exact visited set with the Bloom interface; serves as the test oracle."""

    def contains(self, x: int) -> bool:
        return x in self

    @property
    def inserted(self) -> int:
        return len(self)

    def fp_rate(self) -> float:
        return 0.0
