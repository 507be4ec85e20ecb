"""IVF-PQ and proximity-graph vector search with exact oracles and recall tooling."""

from .bloom import BloomVisitedSet, bloom_fp_rate
from .clustering import kmeans_assign, kmeans_fit, kmeans_train
from .dataset import (
    Dataset,
    FormatError,
    GroundTruth,
    SearchResult,
    brute_force_knn,
    compute_groundtruth,
    load_groundtruth,
    load_vectors,
    recall_at_k,
)
from .graph import (
    ProximityGraph,
    SearchStats,
    TraversalParams,
    batch_search,
    bfs_search,
    dst_search,
    knn_graph_build,
    load_graph,
    mcs_search,
    save_graph,
)
from .ivf import IvfIndex, IvfSearchParams, ivf_build, ivf_search, load_index, save_index, select_cells
from .pq import PQCodebook, adc_distance, apply_opq, build_lut, pq_encode, pq_reconstruct, pq_train
from .topk import AhpqConfig, BoundedMinSet, ahpq_l1_length, ahpq_select, hpq_hold_probability

__version__ = "0.1.0"

__all__ = [
    "BloomVisitedSet",
    "bloom_fp_rate",
    "kmeans_assign",
    "kmeans_fit",
    "kmeans_train",
    "Dataset",
    "FormatError",
    "GroundTruth",
    "SearchResult",
    "brute_force_knn",
    "compute_groundtruth",
    "load_groundtruth",
    "load_vectors",
    "recall_at_k",
    "ProximityGraph",
    "SearchStats",
    "TraversalParams",
    "batch_search",
    "bfs_search",
    "dst_search",
    "knn_graph_build",
    "load_graph",
    "mcs_search",
    "save_graph",
    "IvfIndex",
    "IvfSearchParams",
    "ivf_build",
    "ivf_search",
    "load_index",
    "save_index",
    "select_cells",
    "PQCodebook",
    "adc_distance",
    "apply_opq",
    "build_lut",
    "pq_encode",
    "pq_reconstruct",
    "pq_train",
    "AhpqConfig",
    "BoundedMinSet",
    "ahpq_l1_length",
    "ahpq_select",
    "hpq_hold_probability",
]
