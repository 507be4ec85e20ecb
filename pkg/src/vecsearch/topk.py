"""Software models of the hardware K-selection structures.

``BoundedMinSet`` captures the input/output behaviour of a systolic priority
queue: once full, an input replaces the current maximum only if it is
smaller. ``ahpq_select`` stacks one such set per input stream (level one)
under a K-capacity merge set (level two); shrinking the level-one capacity
below K gives the approximate variant, sized by :func:`ahpq_l1_length`.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dataset import SearchResult, order_by_distance


class BoundedMinSet:
    """Keeps the ``capacity`` smallest (distance, id) items seen so far."""

    __slots__ = ("capacity", "_heap")

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        # max-heap through negated keys
        self._heap: list[tuple[float, int]] = []

    def __len__(self) -> int:
        return len(self._heap)

    def full(self) -> bool:
        return len(self._heap) >= self.capacity

    def insert(self, distance: float, item_id: int) -> bool:
        """Insert an item; returns whether the set changed."""
        key = (-distance, -item_id)
        if len(self._heap) < self.capacity:
            heapq.heappush(self._heap, key)
            return True
        # smaller under (distance, id) means larger negated key
        if key > self._heap[0]:
            heapq.heapreplace(self._heap, key)
            return True
        return False

    def max(self) -> tuple[float, int] | None:
        if not self._heap:
            return None
        d, i = self._heap[0]
        return -d, -i

    def threshold(self) -> float:
        """Largest held distance, or +inf while the set is not yet full."""
        if len(self._heap) < self.capacity:
            return math.inf
        return -self._heap[0][0]

    def items(self) -> list[tuple[float, int]]:
        """Contents ascending by (distance, id)."""
        return sorted((-d, -i) for d, i in self._heap)

    def result(self, k: int | None = None) -> SearchResult:
        items = self.items()[:k]
        ids = np.array([i for _, i in items], dtype=np.int64)
        dists = np.array([d for d, _ in items], dtype=np.float64)
        return SearchResult(ids, dists)


def bounded_min_insert(bset: BoundedMinSet, item: tuple[float, int]) -> BoundedMinSet:
    bset.insert(item[0], item[1])
    return bset


def select_k(ids: np.ndarray, dists: np.ndarray, k: int) -> SearchResult:
    """Exact top-k by (distance, id); returns fewer than k when short of candidates."""
    ids = np.asarray(ids, dtype=np.int64)
    dists = np.asarray(dists, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be at least 1")
    if ids.shape[0] > k:
        kth = np.partition(dists, k - 1)[k - 1]
        keep = np.flatnonzero(dists <= kth)
        ids, dists = ids[keep], dists[keep]
    order = order_by_distance(ids, dists)[:k]
    return SearchResult(ids[order], dists[order])


def _log_binom_pmf(K: int, n: int, j: int) -> float:
    if n == 1:
        return 0.0 if j == K else -math.inf
    p = 1.0 / n
    log_comb = math.lgamma(K + 1) - math.lgamma(j + 1) - math.lgamma(K - j + 1)
    return log_comb + j * math.log(p) + (K - j) * math.log1p(-p)


def hpq_hold_probability(K: int, num_queues: int, j: int) -> float:
    """Probability that one of ``num_queues`` queues receives exactly ``j`` of the K results.

    Each result lands in any queue with probability 1/num_queues, giving the
    binomial mass C(K, j) (1/n)^j (1 - 1/n)^(K - j).
    """
    if K < 0 or num_queues < 1 or not 0 <= j <= K:
        raise ValueError(f"need K >= 0, num_queues >= 1 and 0 <= j <= K; got K={K}, n={num_queues}, j={j}")
    return math.exp(_log_binom_pmf(K, num_queues, j))


def hpq_overflow_probability(K: int, num_queues: int, length: int) -> float:
    """Probability that a single queue receives more than ``length`` of the K results."""
    return math.fsum(hpq_hold_probability(K, num_queues, j) for j in range(length + 1, K + 1))


def ahpq_l1_length(K: int, num_queues: int, target: float = 0.99) -> int:
    """Smallest level-one length L with num_queues * P(one queue holds > L) <= 1 - target.

    The union bound over queues turns the per-queue tail into a per-query
    guarantee: with probability at least ``target`` no queue overflows, so
    the truncated structure returns the exact top-K.
    """
    if K < 1 or num_queues < 1:
        raise ValueError("K and num_queues must be positive")
    if not 0.0 < target < 1.0:
        raise ValueError("target must lie strictly between 0 and 1")
    budget = 1.0 - target
    for length in range(1, K):
        if num_queues * hpq_overflow_probability(K, num_queues, length) <= budget:
            return length
    return K


@dataclass(frozen=True)
class AhpqConfig:
    num_queues: int
    K: int
    l1_len: int
    target: float = 0.99

    def __post_init__(self) -> None:
        if self.num_queues < 1 or self.K < 1:
            raise ValueError("num_queues and K must be positive")
        if not 1 <= self.l1_len <= self.K:
            raise ValueError(f"l1_len must lie in 1..K={self.K}, got {self.l1_len}")
        if not 0.0 < self.target < 1.0:
            raise ValueError("target must lie strictly between 0 and 1")

    @classmethod
    def sized(cls, num_queues: int, K: int, target: float = 0.99) -> "AhpqConfig":
        return cls(num_queues, K, ahpq_l1_length(K, num_queues, target), target)


def ahpq_select(streams: Sequence[Iterable[tuple[float, int]]], config: AhpqConfig) -> SearchResult:
    """Two-level selection over per-stream (distance, id) sequences."""
    if len(streams) != config.num_queues:
        raise ValueError(f"expected {config.num_queues} streams, got {len(streams)}")
    l2 = BoundedMinSet(config.K)
    for stream in streams:
        l1 = BoundedMinSet(config.l1_len)
        for dist, item_id in stream:
            l1.insert(dist, item_id)
        for dist, item_id in l1.items():
            l2.insert(dist, item_id)
    return l2.result()
