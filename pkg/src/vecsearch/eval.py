"""Recall sweeps, minimum-nprobe search and DST parameter tuning."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, astuple, fields
from typing import Iterable, Sequence

import numpy as np

from .dataset import ArrayLike, GroundTruth, as_matrix, recall_at_k
from .graph import ProximityGraph, TraversalParams, batch_search
from .ivf import IvfIndex, IvfSearchParams, ivf_search


@dataclass(frozen=True)
class RecallCurve:
    nprobes: tuple
    recalls: tuple

    def __post_init__(self) -> None:
        if any(b <= a for a, b in zip(self.nprobes, self.nprobes[1:])):
            raise ValueError("nprobe values must be strictly increasing")

    def points(self) -> list[tuple[int, float]]:
        return list(zip(self.nprobes, self.recalls))

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["nprobe", "recall"])
            for p, r in self.points():
                w.writerow([p, f"{r:.6f}"])


def per_query_recall(index: IvfIndex, queries: ArrayLike, truth: GroundTruth, k: int, nprobe: int,
                     mode: str = "intersection") -> np.ndarray:
    qs = as_matrix(queries)
    if len(truth) != qs.shape[0]:
        raise ValueError(f"{qs.shape[0]} queries but {len(truth)} ground-truth rows")
    params = IvfSearchParams(nprobe, k)
    return np.array([
        recall_at_k(ivf_search(index, q, params)[0].ids, truth[i], k, mode)
        for i, q in enumerate(qs)
    ])


def mean_recall(index, queries, truth, k: int, nprobe: int, mode: str = "intersection") -> float:
    return float(per_query_recall(index, queries, truth, k, nprobe, mode).mean())


def recall_sweep(index: IvfIndex, queries: ArrayLike, truth: GroundTruth, k: int,
                 nprobes: Iterable[int], mode: str = "intersection") -> RecallCurve:
    """Mean recall@k over all queries for each nprobe."""
    nps = tuple(int(p) for p in nprobes)
    return RecallCurve(nps, tuple(mean_recall(index, queries, truth, k, p, mode) for p in nps))


def min_nprobe_for_recall(index: IvfIndex, queries: ArrayLike, truth: GroundTruth, k: int,
                          goal: float, mode: str = "intersection") -> int | None:
    """Smallest nprobe reaching mean recall ``goal``, or None if nprobe=nlist falls short.

    Doubles nprobe until the goal is met, then bisects the last interval.
    Mean recall is monotone in nprobe because the scanned candidate sets nest.
    """
    if goal > 1:
        raise ValueError("recall goal must not exceed 1")
    if goal <= 0:
        return 1
    cache: dict[int, float] = {}

    def recall(p: int) -> float:
        if p not in cache:
            cache[p] = mean_recall(index, queries, truth, k, p, mode)
        return cache[p]

    nlist = index.nlist
    lo, hi = 0, 1
    while recall(hi) < goal:
        if hi == nlist:
            return None
        lo, hi = hi, min(2 * hi, nlist)
    # invariant: recall(lo) < goal (or lo == 0), recall(hi) >= goal
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if recall(mid) >= goal:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class TuneRow:
    mg: int
    mc: int
    recall: float
    distance_computations: float
    hops: float
    nodes_visited: float


def default_grid(max_mg: int = 8, mcs: Sequence[int] = (1, 2, 4)) -> list[tuple[int, int]]:
    return [(mg, mc) for mg in range(1, max_mg + 1) for mc in mcs]


def dst_tune(graph: ProximityGraph, data: ArrayLike, queries: ArrayLike, truth: GroundTruth,
             k: int, l: int, grid: Sequence[tuple[int, int]], workers: int = 1,
             **search_kwargs) -> list[TuneRow]:
    """Evaluate every (mg, mc) pair on the sample queries.

    Rows are ranked by mean recall (descending), then mean distance
    computations, then (mg, mc).
    """
    if not grid:
        raise ValueError("tuning grid must not be empty")
    qs = as_matrix(queries)
    rows = []
    for mg, mc in grid:
        params = TraversalParams(l, k, mg, mc)
        out = batch_search(graph, data, qs, params, workers, "dst", **search_kwargs)
        rec = [recall_at_k(res.ids, truth[i], k) for i, (res, _) in enumerate(out)]
        rows.append(TuneRow(
            mg, mc,
            float(np.mean(rec)),
            float(np.mean([s.distance_computations for _, s in out])),
            float(np.mean([s.hops for _, s in out])),
            float(np.mean([s.nodes_visited for _, s in out])),
        ))
    return sorted(rows, key=lambda r: (-r.recall, r.distance_computations, r.mg, r.mc))


def write_tuning_csv(rows: Sequence[TuneRow], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([fl.name for fl in fields(TuneRow)])
        for row in rows:
            w.writerow([v if isinstance(v, int) else f"{v:.6f}" for v in astuple(row)])
