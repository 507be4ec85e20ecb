"""IVF index build and the six-stage query pipeline.

Query stages: OPQ rotation (when a matrix is present), coarse distances to
all cell centroids, cell selection, lookup-table construction, distance
evaluation over the selected inverted lists, and top-k selection.

Three storage modes:

* ``pq-residual``: PQ codes of (vector - cell centroid); one lookup table
  per scanned cell, built from (query - cell centroid).
* ``pq-raw``: PQ codes of the vectors themselves; one lookup table per query.
* ``flat``: the vectors themselves, scanned with exact distances.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .clustering import DEFAULT_ITERS, kmeans_fit
from .dataset import ArrayLike, FormatError, SearchResult, as_matrix, as_vector, order_by_distance, sq_l2
from .pq import KSUB, PQCodebook, adc_distance, apply_opq, build_lut, check_orthonormal, pq_encode, pq_train
from .topk import select_k

MODES = ("flat", "pq-raw", "pq-residual")
_MODE_CODES = {"flat": 0, "pq-raw": 1, "pq-residual": 2}

INDEX_MAGIC = b"VXIV"
INDEX_VERSION = 1


@dataclass(frozen=True)
class IvfSearchParams:
    nprobe: int
    k: int

    def __post_init__(self) -> None:
        if self.nprobe < 1 or self.k < 1:
            raise ValueError("nprobe and k must be positive")


@dataclass
class IvfStats:
    cells_probed: int = 0
    distance_computations: int = 0  # codes or vectors scanned
    lut_builds: int = 0
    underfilled: bool = False  # fewer than k candidates were scanned


@dataclass
class IvfIndex:
    mode: str
    coarse: np.ndarray  # nlist x D float32
    list_ids: list  # per cell: int64 ids
    list_payload: list  # per cell: n x m uint8 codes, or n x D float32 vectors (flat)
    codebook: PQCodebook | None = None
    opq: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown IVF mode {self.mode!r}; expected one of {MODES}")
        if (self.codebook is None) != (self.mode == "flat"):
            raise ValueError("PQ modes need a codebook and flat mode must not have one")
        if len(self.list_ids) != self.coarse.shape[0] or len(self.list_payload) != self.coarse.shape[0]:
            raise ValueError("one inverted list per coarse centroid required")

    @property
    def dim(self) -> int:
        return int(self.coarse.shape[1])

    @property
    def nlist(self) -> int:
        return int(self.coarse.shape[0])

    @property
    def m(self) -> int:
        return 0 if self.codebook is None else self.codebook.m

    @property
    def ntotal(self) -> int:
        return int(sum(ids.shape[0] for ids in self.list_ids))

    def list_lengths(self) -> np.ndarray:
        return np.array([ids.shape[0] for ids in self.list_ids], dtype=np.int64)

    def rotate(self, vectors) -> np.ndarray:
        return np.asarray(vectors, dtype=np.float32) if self.opq is None else apply_opq(self.opq, vectors)


def default_nlist(n: int) -> int:
    """Roughly the square root of the dataset size."""
    return max(1, int(round(n ** 0.5)))


def ivf_build(
    data: ArrayLike,
    nlist: int | None = None,
    m: int = 8,
    mode: str = "pq-residual",
    opq=None,
    seed: int = 0,
    iters: int = DEFAULT_ITERS,
) -> IvfIndex:
    """Cluster the data into ``nlist`` cells and store each vector in its nearest cell."""
    x = as_matrix(data)
    n, d = x.shape
    if mode not in MODES:
        raise ValueError(f"unknown IVF mode {mode!r}; expected one of {MODES}")
    nlist = default_nlist(n) if nlist is None else nlist
    if not 1 <= nlist <= n:
        raise ValueError(f"nlist must lie in 1..N={n}, got {nlist}")
    if mode != "flat":
        if m < 1 or d % m:
            raise ValueError(f"D={d} not divisible by m={m}")
        if n < KSUB:
            raise ValueError(f"PQ modes need at least {KSUB} vectors, got {n}")
    if opq is not None:
        opq = check_orthonormal(opq)
        if opq.shape[0] != d:
            raise ValueError(f"OPQ matrix is {opq.shape[0]}x{opq.shape[0]}, data has D={d}")
        x = apply_opq(opq, x)

    coarse_seed, pq_seed = (int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(2))
    km = kmeans_fit(x, nlist, iters, coarse_seed)
    coarse, labels = km.centroids, km.assignment

    codebook = None
    if mode == "flat":
        payload = x
    elif mode == "pq-raw":
        codebook = pq_train(x, m, pq_seed, iters)
        payload = pq_encode(codebook, x)
    else:
        residuals = x - coarse[labels]
        codebook = pq_train(residuals, m, pq_seed, iters)
        payload = pq_encode(codebook, residuals)

    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(nlist + 1))
    list_ids, list_payload = [], []
    for c in range(nlist):
        members = order[bounds[c]:bounds[c + 1]]
        list_ids.append(members.astype(np.int64))
        list_payload.append(np.ascontiguousarray(payload[members]))
    return IvfIndex(mode, coarse, list_ids, list_payload, codebook, opq)


def _check_nprobe(index: IvfIndex, nprobe: int) -> None:
    if not 1 <= nprobe <= index.nlist:
        raise ValueError(f"nprobe must lie in 1..nlist={index.nlist}, got {nprobe}")


def _select(index: IvfIndex, q: np.ndarray, nprobe: int) -> np.ndarray:
    dists = sq_l2(index.coarse, q)
    return order_by_distance(np.arange(index.nlist), dists)[:nprobe]


def select_cells(index: IvfIndex, query, nprobe: int) -> np.ndarray:
    """The ``nprobe`` cells whose centroids are nearest the (rotated) query, nearest first."""
    _check_nprobe(index, nprobe)
    q = index.rotate(as_vector(query, index.dim))
    return _select(index, q, nprobe)


def ivf_search(index: IvfIndex, query, params: IvfSearchParams) -> tuple[SearchResult, IvfStats]:
    _check_nprobe(index, params.nprobe)
    q = index.rotate(as_vector(query, index.dim))
    cells = _select(index, q, params.nprobe)
    stats = IvfStats(cells_probed=len(cells))

    lut = None
    if index.mode == "pq-raw":
        lut = build_lut(index.codebook, q)
        stats.lut_builds = 1
    ids_parts, dist_parts = [], []
    for c in cells:
        ids = index.list_ids[c]
        if ids.shape[0] == 0:
            continue
        payload = index.list_payload[c]
        if index.mode == "flat":
            dists = sq_l2(payload, q)
        else:
            if index.mode == "pq-residual":
                lut = build_lut(index.codebook, q - index.coarse[c])
                stats.lut_builds += 1
            dists = adc_distance(lut, payload)
        ids_parts.append(ids)
        dist_parts.append(dists)
        stats.distance_computations += ids.shape[0]

    if ids_parts:
        result = select_k(np.concatenate(ids_parts), np.concatenate(dist_parts), params.k)
    else:
        result = SearchResult(np.empty(0, np.int64), np.empty(0, np.float64))
    stats.underfilled = len(result) < params.k
    return result, stats


# -- persistence --------------------------------------------------------------


def index_to_bytes(index: IvfIndex) -> bytes:
    """Serialize to the VXIV layout (all little-endian).

    magic ``VXIV``; uint32 version, mode, D, m, nlist, has_opq; coarse
    centroids (nlist x D float32); codebook (m x 256 x D/m float32, absent
    when m = 0); OPQ matrix (D x D float32, when has_opq); then per list a
    uint32 length, the int32 ids, and either m-byte codes or, in flat mode,
    D float32 components per entry.
    """
    out = [
        INDEX_MAGIC,
        struct.pack("<6I", INDEX_VERSION, _MODE_CODES[index.mode], index.dim, index.m,
                    index.nlist, int(index.opq is not None)),
        index.coarse.astype("<f4").tobytes(),
    ]
    if index.codebook is not None:
        out.append(index.codebook.centroids.astype("<f4").tobytes())
    if index.opq is not None:
        out.append(np.asarray(index.opq).astype("<f4").tobytes())
    for ids, payload in zip(index.list_ids, index.list_payload):
        out.append(struct.pack("<I", ids.shape[0]))
        out.append(ids.astype("<i4").tobytes())
        out.append(payload.astype("<f4" if index.mode == "flat" else "u1").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, dtype: str, count: int) -> np.ndarray:
        dt = np.dtype(dtype)
        end = self.pos + dt.itemsize * count
        if end > len(self.raw):
            raise FormatError("truncated VXIV file")
        arr = np.frombuffer(self.raw, dtype=dt, count=count, offset=self.pos)
        self.pos = end
        return arr


def index_from_bytes(raw: bytes) -> IvfIndex:
    if raw[:4] != INDEX_MAGIC:
        raise FormatError("not a VXIV index file")
    r = _Reader(raw)
    r.pos = 4
    version, mode_code, d, m, nlist, has_opq = (int(v) for v in r.take("<u4", 6))
    if version != INDEX_VERSION:
        raise FormatError(f"unsupported VXIV version {version}")
    modes = {v: k for k, v in _MODE_CODES.items()}
    if mode_code not in modes:
        raise FormatError(f"unknown mode code {mode_code}")
    mode = modes[mode_code]
    coarse = r.take("<f4", nlist * d).reshape(nlist, d).astype(np.float32)
    codebook = None
    if mode != "flat":
        if m < 1 or d % m:
            raise FormatError(f"invalid m={m} for D={d}")
        codebook = PQCodebook(r.take("<f4", m * KSUB * (d // m)).reshape(m, KSUB, d // m))
    opq = r.take("<f4", d * d).reshape(d, d).astype(np.float32) if has_opq else None
    list_ids, list_payload = [], []
    for _ in range(nlist):
        (length,) = r.take("<u4", 1)
        list_ids.append(r.take("<i4", int(length)).astype(np.int64))
        if mode == "flat":
            list_payload.append(r.take("<f4", int(length) * d).reshape(-1, d).astype(np.float32))
        else:
            list_payload.append(r.take("u1", int(length) * m).reshape(-1, m).copy())
    if r.pos != len(raw):
        raise FormatError(f"{len(raw) - r.pos} trailing bytes after VXIV payload")
    return IvfIndex(mode, coarse, list_ids, list_payload, codebook, opq)


def save_index(index: IvfIndex, path: str | os.PathLike) -> None:
    with open(path, "wb") as f:
        f.write(index_to_bytes(index))


def load_index(path: str | os.PathLike) -> IvfIndex:
    return index_from_bytes(open(path, "rb").read())
