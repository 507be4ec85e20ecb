"""Seeded synthetic vector sets for tests and demos."""

from __future__ import annotations

import numpy as np


def _mixture(rng: np.random.Generator, centers: np.ndarray, n: int, spread: float) -> np.ndarray:
    labels = rng.integers(centers.shape[0], size=n)
    return (centers[labels] + rng.normal(0.0, spread, size=(n, centers.shape[1]))).astype(np.float32)


def clustered(n: int, dim: int, clusters: int = 256, spread: float = 1.0, seed: int = 0) -> np.ndarray:
    """Gaussian mixture: centers ~ N(0, 4 I), points ~ N(center, spread^2 I).

    Many overlapping clusters keep exact kNN graphs navigable; a few
    well-separated ones split them into islands.
    """
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 2.0, size=(clusters, dim))
    return _mixture(rng, centers, n, spread)


def base_and_queries(n: int, nq: int, dim: int, clusters: int = 256, seed: int = 0,
                     spread: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Base and query sets from one mixture; the base does not depend on ``nq``."""
    c_seq, b_seq, q_seq = np.random.SeedSequence(seed).spawn(3)
    centers = np.random.default_rng(c_seq).normal(0.0, 2.0, size=(clusters, dim))
    base = _mixture(np.random.default_rng(b_seq), centers, n, spread)
    queries = _mixture(np.random.default_rng(q_seq), centers, nq, spread)
    return base, queries
