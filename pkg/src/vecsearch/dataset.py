"""Vector and ground-truth file ingestion, the exact kNN oracle and recall.

File layouts (little-endian throughout):

* ``.fvecs``: per record an int32 dimension ``d`` then ``d`` float32 values.
* ``.bvecs``: per record an int32 dimension ``d`` then ``d`` uint8 values.
* ``.ivecs``: per record an int32 count ``n`` then ``n`` int32 values.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "Dataset",
    "GroundTruth",
    "SearchResult",
    "FormatError",
    "load_vectors",
    "load_groundtruth",
    "write_fvecs",
    "write_bvecs",
    "write_ivecs",
    "sq_l2",
    "brute_force_knn",
    "compute_groundtruth",
    "recall_at_k",
]


class FormatError(ValueError):
    """Raised when a vector, ground-truth or index file is malformed."""


@dataclass(frozen=True)
class Dataset:
    """Dense float32 vectors; ids are the row indices ``0..N-1``."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"dataset must be a non-empty N x D matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("dataset contains non-finite components")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])

    @property
    def count(self) -> int:
        return int(self.data.shape[0])

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, idx):
        return self.data[idx]


ArrayLike = Union[Dataset, np.ndarray, Sequence[Sequence[float]]]


def as_matrix(data: ArrayLike) -> np.ndarray:
    """Return ``data`` as a contiguous float32 N x D array."""
    if isinstance(data, Dataset):
        return data.data
    arr = np.ascontiguousarray(data, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D array of vectors, got shape {arr.shape}")
    return arr


def as_vector(query, dim: int) -> np.ndarray:
    q = np.ascontiguousarray(query, dtype=np.float32).reshape(-1)
    if q.shape[0] != dim:
        raise ValueError(f"dimension mismatch: query has {q.shape[0]} components, expected {dim}")
    return q


@dataclass(frozen=True)
class GroundTruth:
    """Per-query ordered neighbor id lists."""

    rows: tuple = field(default_factory=tuple)

    def __post_init__(self) -> None:
        rows = tuple(np.asarray(r, dtype=np.int64).reshape(-1) for r in self.rows)
        object.__setattr__(self, "rows", rows)

    def __len__(self) -> int:
        return len(self.rows)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.rows[i]

    def __iter__(self):
        return iter(self.rows)

    def validate(self, dataset: ArrayLike) -> None:
        n = as_matrix(dataset).shape[0]
        for qi, row in enumerate(self.rows):
            if row.size and (row.min() < 0 or row.max() >= n):
                raise ValueError(f"ground-truth row {qi} references ids outside 0..{n - 1}")
            if np.unique(row).size != row.size:
                raise ValueError(f"ground-truth row {qi} contains duplicate ids")


@dataclass(frozen=True)
class SearchResult:
    """Top-k neighbors, ascending by (distance, id)."""

    ids: np.ndarray
    distances: np.ndarray

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    def pairs(self) -> list[tuple[int, float]]:
        return [(int(i), float(d)) for i, d in zip(self.ids, self.distances)]


def _read_records(path: str | os.PathLike, item_dtype: np.dtype, what: str) -> list[np.ndarray]:
    raw = open(path, "rb").read()
    itemsize = np.dtype(item_dtype).itemsize
    records = []
    pos = 0
    while pos < len(raw):
        if pos + 4 > len(raw):
            raise FormatError(f"truncated {what} file {path}: partial header at record {len(records)}")
        (d,) = struct.unpack_from("<i", raw, pos)
        pos += 4
        if d < 0:
            raise FormatError(f"negative length {d} at record {len(records)}")
        end = pos + d * itemsize
        if end > len(raw):
            raise FormatError(f"truncated {what} file {path}: record {len(records)} needs {d} values")
        records.append(np.frombuffer(raw, dtype=item_dtype, count=d, offset=pos))
        pos = end
    return records


def load_vectors(path: str | os.PathLike, format: str | None = None) -> Dataset:
    """Load an ``fvecs`` or ``bvecs`` file.

    ``format`` defaults to the file extension. bvecs components are widened
    to float32.
    """
    if format is None:
        format = os.path.splitext(str(path))[1].lstrip(".").lower()
    if format == "fvecs":
        item = np.dtype("<f4")
    elif format == "bvecs":
        item = np.dtype("u1")
    else:
        raise ValueError(f"unknown vector format {format!r}; expected fvecs or bvecs")
    records = _read_records(path, item, format)
    if not records:
        raise FormatError(f"no records in {path}")
    dim = records[0].shape[0]
    if dim <= 0:
        raise FormatError("record 0 has non-positive dimension")
    for i, rec in enumerate(records):
        if rec.shape[0] != dim:
            raise FormatError(f"dimension mismatch at record {i}: {rec.shape[0]} != {dim}")
    return Dataset(np.stack(records).astype(np.float32))


def load_groundtruth(path: str | os.PathLike) -> GroundTruth:
    records = _read_records(path, np.dtype("<i4"), "ivecs")
    for i, rec in enumerate(records):
        if rec.size and rec.min() < 0:
            raise FormatError(f"negative id in ground-truth record {i}")
    return GroundTruth(tuple(records))


def _write_records(path, rows: Iterable[np.ndarray], dtype: str) -> None:
    with open(path, "wb") as f:
        for row in rows:
            row = np.ascontiguousarray(row, dtype=dtype).reshape(-1)
            f.write(struct.pack("<i", row.shape[0]))
            f.write(row.tobytes())


def write_fvecs(path, data: ArrayLike) -> None:
    _write_records(path, as_matrix(data), "<f4")


def write_bvecs(path, data) -> None:
    arr = np.asarray(data)
    if arr.min(initial=0) < 0 or arr.max(initial=0) > 255:
        raise ValueError("bvecs components must lie in 0..255")
    _write_records(path, arr, "u1")


def write_ivecs(path, rows: Iterable) -> None:
    _write_records(path, rows, "<i4")


def sq_l2(vectors: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Squared L2 distance from each row of ``vectors`` to ``query`` (float64).

    Every pair is computed independently of the batch it appears in, so the
    same (vector, query) pair always yields the same bits. All search paths
    rely on this to compare against the brute-force oracle exactly.
    """
    if vectors.shape[0] == 0:
        return np.empty(0, dtype=np.float64)
    return cdist(vectors, query.reshape(1, -1), "sqeuclidean")[:, 0]


def order_by_distance(ids: np.ndarray, dists: np.ndarray) -> np.ndarray:
    """Permutation sorting candidates by (distance, id)."""
    return np.lexsort((ids, dists))


def brute_force_knn(data: ArrayLike, query, k: int) -> SearchResult:
    """Exact k nearest neighbors under squared L2, ties to the smaller id."""
    x = as_matrix(data)
    q = as_vector(query, x.shape[1])
    if k < 1 or k > x.shape[0]:
        raise ValueError(f"k must lie in 1..{x.shape[0]}, got {k}")
    dists = sq_l2(x, q)
    ids = np.arange(x.shape[0], dtype=np.int64)
    if k < x.shape[0]:
        # the (k)-th smallest distance bounds the candidates; keep all ties
        kth = np.partition(dists, k - 1)[k - 1]
        keep = np.flatnonzero(dists <= kth)
        ids, dists = ids[keep], dists[keep]
    order = order_by_distance(ids, dists)[:k]
    return SearchResult(ids[order], dists[order])


def compute_groundtruth(data: ArrayLike, queries: ArrayLike, k: int) -> GroundTruth:
    qs = as_matrix(queries)
    return GroundTruth(tuple(brute_force_knn(data, q, k).ids for q in qs))


def recall_at_k(result_ids, truth_row, k: int, mode: str = "intersection") -> float:
    """Recall of one result list against one ground-truth row.

    ``intersection`` is |ANN_k & NN_k| / k. ``first-hit`` is 1.0 when the true
    nearest neighbor is among the first ``k`` results.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    res = [int(i) for i in np.asarray(result_ids).reshape(-1)[:k]]
    truth = [int(i) for i in np.asarray(truth_row).reshape(-1)]
    if mode == "intersection":
        if len(truth) < k:
            raise ValueError(f"ground truth has {len(truth)} entries, need {k}")
        return len(set(res) & set(truth[:k])) / k
    if mode == "first-hit":
        if not truth:
            raise ValueError("first-hit recall needs a nonempty ground-truth row")
        return 1.0 if truth[0] in res else 0.0
    raise ValueError(f"unknown recall mode {mode!r}")
