"""Product quantization: training, encoding, lookup tables, ADC and OPQ rotation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .clustering import DEFAULT_ITERS, kmeans_train
from .dataset import ArrayLike, as_matrix, as_vector

KSUB = 256  # centroids per sub-space; one byte per sub-code

ORTHO_TOL = 1e-4


@dataclass(frozen=True)
class PQCodebook:
    """``m`` sub-quantizers of 256 centroids each, shape (m, 256, dsub)."""

    centroids: np.ndarray

    def __post_init__(self) -> None:
        c = np.ascontiguousarray(self.centroids, dtype=np.float32)
        if c.ndim != 3 or c.shape[1] != KSUB or c.shape[0] < 1:
            raise ValueError(f"codebook must have shape (m, {KSUB}, dsub), got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "centroids", c)

    @property
    def m(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def dsub(self) -> int:
        return int(self.centroids.shape[2])

    @property
    def dim(self) -> int:
        return self.m * self.dsub


def _sub_seeds(seed: int, m: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(m)
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


def pq_train(data: ArrayLike, m: int, seed: int = 0, iters: int = DEFAULT_ITERS) -> PQCodebook:
    """Train one 256-centroid k-means per contiguous sub-vector slice."""
    x = as_matrix(data)
    n, d = x.shape
    if m < 1 or d % m:
        raise ValueError(f"D={d} not divisible by m={m}")
    if n < KSUB:
        raise ValueError(f"PQ training needs at least {KSUB} vectors, got {n}")
    dsub = d // m
    books = [
        kmeans_train(x[:, i * dsub:(i + 1) * dsub], KSUB, iters, s)
        for i, s in enumerate(_sub_seeds(seed, m))
    ]
    return PQCodebook(np.stack(books))


def pq_encode(codebook: PQCodebook, vectors) -> np.ndarray:
    """Encode one vector (-> m bytes) or a batch (-> n x m bytes).

    Each sub-vector maps to its nearest sub-centroid, ties to the smaller index.
    """
    arr = np.asarray(vectors, dtype=np.float32)
    single = arr.ndim == 1
    x = np.ascontiguousarray(arr.reshape(1, -1) if single else arr)
    if x.shape[1] != codebook.dim:
        raise ValueError(f"dimension mismatch: got {x.shape[1]}, codebook expects {codebook.dim}")
    codes = np.empty((x.shape[0], codebook.m), dtype=np.uint8)
    ds = codebook.dsub
    for i in range(codebook.m):
        sub = x[:, i * ds:(i + 1) * ds]
        for start in range(0, x.shape[0], 4096):
            dist = cdist(sub[start:start + 4096], codebook.centroids[i], "sqeuclidean")
            codes[start:start + 4096, i] = np.argmin(dist, axis=1)
    return codes[0] if single else codes


def pq_reconstruct(codebook: PQCodebook, codes) -> np.ndarray:
    """Concatenate the indexed sub-centroids (accepts one code or a batch)."""
    c = np.asarray(codes, dtype=np.int64)
    single = c.ndim == 1
    c = c.reshape(1, -1) if single else c
    if c.shape[1] != codebook.m:
        raise ValueError(f"code has {c.shape[1]} bytes, codebook has m={codebook.m}")
    parts = codebook.centroids[np.arange(codebook.m), c]  # n x m x dsub
    out = parts.reshape(c.shape[0], codebook.dim)
    return out[0] if single else out


def build_lut(codebook: PQCodebook, query) -> np.ndarray:
    """m x 256 table of squared distances from each query sub-vector to each sub-centroid."""
    q = as_vector(query, codebook.dim).reshape(codebook.m, codebook.dsub)
    lut = np.empty((codebook.m, KSUB), dtype=np.float64)
    for i in range(codebook.m):
        lut[i] = cdist(q[i:i + 1], codebook.centroids[i], "sqeuclidean")[0]
    return lut


def adc_distance(lut: np.ndarray, codes) -> np.ndarray | float:
    """Asymmetric distance: the sum of ``lut[i, code[i]]`` over sub-spaces."""
    c = np.asarray(codes, dtype=np.intp)
    if c.shape[-1] != lut.shape[0]:
        raise ValueError(f"code has {c.shape[-1]} bytes, table has m={lut.shape[0]}")
    vals = lut[np.arange(lut.shape[0]), c]
    if c.ndim == 1:
        return float(vals.sum())
    return vals.sum(axis=1)


def check_orthonormal(matrix, tol: float = ORTHO_TOL) -> np.ndarray:
    r = np.asarray(matrix, dtype=np.float64)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError(f"OPQ matrix must be square, got shape {r.shape}")
    err = np.abs(r @ r.T - np.eye(r.shape[0])).max()
    if err > tol:
        raise ValueError(f"OPQ matrix is not orthonormal (max |R R^T - I| = {err:.3g})")
    return r.astype(np.float32)


def apply_opq(matrix, vectors) -> np.ndarray:
    """Rotate a vector (``R @ q``) or each row of a batch (``X @ R.T``)."""
    r = check_orthonormal(matrix)
    x = np.asarray(vectors, dtype=np.float32)
    if x.shape[-1] != r.shape[1]:
        raise ValueError(f"dimension mismatch: got {x.shape[-1]}, matrix is {r.shape[0]}x{r.shape[1]}")
    # float64 product so batch and single-vector rotations round alike
    return np.ascontiguousarray(x.astype(np.float64) @ r.astype(np.float64).T, dtype=np.float32)
