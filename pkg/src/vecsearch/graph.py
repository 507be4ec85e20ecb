"""Proximity graphs and the BFS / MCS / DST traversals over them.

All traversals share one software model: a candidate queue ``C`` (exact
min-ordered, optionally capped), a result queue ``R`` holding the ``l``
closest nodes, and a visited set (Bloom filter by default). DST keeps up to
``mg`` groups of up to ``mc`` candidates in flight; the oldest group is
evaluated first, after which the pipeline is refilled with candidates no
farther than the current worst result. ``mg = mc = 1`` reduces to BFS and
``mg = 1`` alone to multi-candidate search (MCS).
"""

from __future__ import annotations

import heapq
import os
import struct
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components
from scipy.spatial.distance import cdist

from .bloom import DEFAULT_BITS, DEFAULT_HASHES, DEFAULT_SEED, BloomVisitedSet, ExactVisitedSet
from .dataset import ArrayLike, FormatError, SearchResult, as_matrix, as_vector, sq_l2
from .topk import BoundedMinSet

GRAPH_MAGIC = b"VXGR"
GRAPH_VERSION = 1
_PAD = 0xFFFFFFFF


@dataclass
class ProximityGraph:
    """Adjacency lists over node ids ``0..N-1`` with a fixed entry node."""

    neighbors: list
    entry: int
    max_degree: int = 0
    repair_edges: int = 0

    def __post_init__(self) -> None:
        self.neighbors = [np.asarray(row, dtype=np.int64).reshape(-1) for row in self.neighbors]
        n = len(self.neighbors)
        if n < 1:
            raise ValueError("graph needs at least one node")
        if not 0 <= self.entry < n:
            raise ValueError(f"entry node {self.entry} outside 0..{n - 1}")
        widest = max(row.shape[0] for row in self.neighbors)
        self.max_degree = max(self.max_degree, widest)
        for i, row in enumerate(self.neighbors):
            if row.size and (row.min() < 0 or row.max() >= n):
                raise ValueError(f"node {i} has an out-of-range neighbor")
            if np.unique(row).size != row.size:
                raise ValueError(f"node {i} has duplicate neighbors")
        # python lists iterate much faster in the traversal inner loops
        self._rows = [row.tolist() for row in self.neighbors]

    @property
    def num_nodes(self) -> int:
        return len(self.neighbors)

    def neighbors_of(self, node: int) -> list[int]:
        return self._rows[node]

    def reachable(self) -> np.ndarray:
        """Boolean mask of the nodes reachable from the entry node."""
        order = breadth_first_order(self._csr(), self.entry, directed=True, return_predecessors=False)
        mask = np.zeros(self.num_nodes, dtype=bool)
        mask[order] = True
        return mask

    def _csr(self) -> csr_matrix:
        n = self.num_nodes
        indptr = np.zeros(n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([row.shape[0] for row in self.neighbors])
        indices = np.concatenate(self.neighbors) if indptr[-1] else np.empty(0, dtype=np.int64)
        return csr_matrix((np.ones(indices.shape[0], dtype=np.int8), indices, indptr), shape=(n, n))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProximityGraph):
            return NotImplemented
        return (
            self.entry == other.entry
            and self.num_nodes == other.num_nodes
            and all(np.array_equal(a, b) for a, b in zip(self.neighbors, other.neighbors))
        )


@dataclass
class SearchStats:
    hops: int = 0  # candidate groups evaluated
    nodes_visited: int = 0
    distance_computations: int = 0
    bloom_false_positive_upper: float = 0.0


@dataclass(frozen=True)
class TraversalParams:
    l: int
    k: int
    mg: int = 1
    mc: int = 1
    candidate_cap: int | None = None

    def __post_init__(self) -> None:
        if self.k < 1 or self.l < 1:
            raise ValueError("k and l must be positive")
        if self.k > self.l:
            raise ValueError(f"k={self.k} exceeds the result queue size l={self.l}")
        if self.mg < 1 or self.mc < 1:
            raise ValueError("mg and mc must be at least 1")
        if self.candidate_cap is not None and self.candidate_cap < 1:
            raise ValueError("candidate_cap must be positive")


# -- construction -------------------------------------------------------------

_BLOCK = 1024


def medoid(data: ArrayLike, members: np.ndarray | None = None) -> int:
    """Member minimizing total squared distance to the other members (ties to smaller id)."""
    x = as_matrix(data)
    idx = np.arange(x.shape[0]) if members is None else np.asarray(members, dtype=np.int64)
    sub = x[idx]
    totals = np.empty(idx.shape[0], dtype=np.float64)
    for start in range(0, idx.shape[0], _BLOCK):
        totals[start:start + _BLOCK] = cdist(sub[start:start + _BLOCK], sub, "sqeuclidean").sum(axis=1)
    return int(idx[np.argmin(totals)])


def _knn_rows(x: np.ndarray, R: int) -> tuple[list[np.ndarray], np.ndarray]:
    n = x.shape[0]
    rows = []
    totals = np.empty(n, dtype=np.float64)
    for start in range(0, n, _BLOCK):
        d = cdist(x[start:start + _BLOCK], x, "sqeuclidean")
        totals[start:start + _BLOCK] = d.sum(axis=1)
        for r, node in enumerate(range(start, min(start + _BLOCK, n))):
            drow = d[r]
            drow[node] = np.inf
            # widen past R so equal distances at the boundary resolve by id
            cut = np.partition(drow, R - 1)[R - 1]
            cand = np.flatnonzero(drow <= cut)
            order = np.lexsort((cand, drow[cand]))[:R]
            rows.append(cand[order])
    return rows, totals


def knn_graph_build(data: ArrayLike, R: int, seed: int = 0) -> ProximityGraph:
    """Exact R-nearest-neighbor graph rooted at the medoid.

    Nodes the entry cannot reach get linked in: for each unreached weakly
    connected piece, its medoid gains an in-edge from the nearest reached
    node. Such repair edges may push the source row past ``R``.
    ``seed`` is accepted for interface symmetry; construction is deterministic.
    """
    x = as_matrix(data)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two vectors to build a graph")
    if not 1 <= R < n:
        raise ValueError(f"degree R must lie in 1..N-1={n - 1}, got {R}")
    rows, totals = _knn_rows(x, R)
    entry = int(np.argmin(totals))
    graph = ProximityGraph(rows, entry, max_degree=R)
    _repair_reachability(graph, x)
    return graph


def _repair_reachability(graph: ProximityGraph, x: np.ndarray) -> None:
    reached = graph.reachable()
    while not reached.all():
        unreached = np.flatnonzero(~reached)
        sub = graph._csr()[unreached][:, unreached]
        _, labels = connected_components(sub, directed=True, connection="weak")
        piece = unreached[labels == labels[0]]
        target = medoid(x, piece)
        sources = np.flatnonzero(reached)
        source = int(sources[np.argmin(sq_l2(x[sources], x[target]))])
        graph.neighbors[source] = np.append(graph.neighbors[source], target)
        graph._rows[source].append(target)
        graph.max_degree = max(graph.max_degree, graph.neighbors[source].shape[0])
        graph.repair_edges += 1
        reached = graph.reachable()


# -- traversal ----------------------------------------------------------------


def _make_visited(visited: str, bloom_bits: int, bloom_hashes: int, bloom_seed: int):
    if visited == "bloom":
        return BloomVisitedSet(bloom_bits, bloom_hashes, bloom_seed)
    if visited == "exact":
        return ExactVisitedSet()
    raise ValueError(f"unknown visited-set kind {visited!r}")


class _Traversal:
    """Per-query state shared by BFS and DST."""

    def __init__(self, graph, x, q, l, candidate_cap, visited_set):
        self.graph = graph
        self.x = x
        self.q = q
        self.cap = candidate_cap
        self.candidates: list[tuple[float, int]] = []
        self.results = BoundedMinSet(l)
        self.visited = visited_set
        self.stats = SearchStats()

        p = graph.entry
        d = float(sq_l2(x[p:p + 1], q)[0])
        self.stats.distance_computations = 1
        self.visited.add(p)
        self.stats.nodes_visited = 1
        self.results.insert(d, p)
        self.entry_item = (d, p)

    def evaluate(self, group: list[int]) -> None:
        """Visit the unvisited neighbors of every candidate in ``group``."""
        visited = self.visited
        fresh = []
        for c in group:
            for nb in self.graph.neighbors_of(c):
                if nb not in visited:
                    visited.add(nb)
                    fresh.append(nb)
        self.stats.hops += 1
        if not fresh:
            return
        dists = sq_l2(self.x[fresh], self.q).tolist()
        self.stats.distance_computations += len(fresh)
        self.stats.nodes_visited += len(fresh)
        cand = self.candidates
        for nb, d in zip(fresh, dists):
            heapq.heappush(cand, (d, nb))
            self.results.insert(d, nb)
        if self.cap is not None and len(cand) > self.cap:
            self.candidates = heapq.nsmallest(self.cap, cand)

    def extract(self, count: int) -> list[int]:
        """Pop up to ``count`` candidates no farther than the current worst result."""
        threshold = self.results.threshold()
        cand = self.candidates
        group = []
        while cand and len(group) < count and cand[0][0] <= threshold:
            group.append(heapq.heappop(cand)[1])
        return group

    def finish(self, k: int) -> tuple[SearchResult, SearchStats]:
        self.stats.bloom_false_positive_upper = self.visited.fp_rate()
        return self.results.result(k), self.stats


def _prepare(graph: ProximityGraph, data: ArrayLike, query):
    x = as_matrix(data)
    if x.shape[0] != graph.num_nodes:
        raise ValueError(f"graph has {graph.num_nodes} nodes but data has {x.shape[0]} vectors")
    return x, as_vector(query, x.shape[1])


def bfs_search(
    graph: ProximityGraph,
    data: ArrayLike,
    query,
    l: int,
    k: int,
    *,
    candidate_cap: int | None = None,
    visited: str = "bloom",
    bloom_bits: int = DEFAULT_BITS,
    bloom_hashes: int = DEFAULT_HASHES,
    bloom_seed: int = DEFAULT_SEED,
) -> tuple[SearchResult, SearchStats]:
    """Best-first search: repeatedly evaluate the single closest qualified candidate."""
    params = TraversalParams(l, k, candidate_cap=candidate_cap)
    x, q = _prepare(graph, data, query)
    t = _Traversal(graph, x, q, params.l, candidate_cap,
                   _make_visited(visited, bloom_bits, bloom_hashes, bloom_seed))
    heapq.heappush(t.candidates, t.entry_item)
    while True:
        group = t.extract(1)
        if not group:
            break
        t.evaluate(group)
    return t.finish(params.k)


def dst_search(
    graph: ProximityGraph,
    data: ArrayLike,
    query,
    params: TraversalParams,
    *,
    visited: str = "bloom",
    bloom_bits: int = DEFAULT_BITS,
    bloom_hashes: int = DEFAULT_HASHES,
    bloom_seed: int = DEFAULT_SEED,
) -> tuple[SearchResult, SearchStats]:
    """Delayed-synchronization traversal.

    The entry node forms the first in-flight group. Each step completes the
    oldest group, then launches new groups of up to ``mc`` qualified
    candidates while fewer than ``mg`` are in flight. The threshold (worst
    distance in R, +inf while R holds fewer than ``l`` nodes) is re-read
    before each group is extracted. Stops when nothing is in flight and no
    candidate qualifies.
    """
    x, q = _prepare(graph, data, query)
    t = _Traversal(graph, x, q, params.l, params.candidate_cap,
                   _make_visited(visited, bloom_bits, bloom_hashes, bloom_seed))
    in_flight = deque([[graph.entry]])
    while in_flight:
        t.evaluate(in_flight.popleft())
        while len(in_flight) < params.mg:
            group = t.extract(params.mc)
            if not group:
                break
            in_flight.append(group)
    return t.finish(params.k)


def mcs_search(graph, data, query, l: int, k: int, mc: int, **kwargs):
    """Multi-candidate search: DST with a single group in flight."""
    return dst_search(graph, data, query, TraversalParams(l, k, mg=1, mc=mc), **kwargs)


def graph_search(graph, data, query, params: TraversalParams, alg: str = "dst", **kwargs):
    if alg == "bfs":
        return bfs_search(graph, data, query, params.l, params.k,
                          candidate_cap=params.candidate_cap, **kwargs)
    if alg == "dst":
        return dst_search(graph, data, query, params, **kwargs)
    if alg == "mcs":
        return dst_search(graph, data, query,
                          TraversalParams(params.l, params.k, 1, params.mc, params.candidate_cap), **kwargs)
    raise ValueError(f"unknown traversal {alg!r}; expected bfs, mcs or dst")


def batch_search(
    graph: ProximityGraph,
    data: ArrayLike,
    queries: ArrayLike,
    params: TraversalParams,
    workers: int = 1,
    alg: str = "dst",
    **kwargs,
) -> list[tuple[SearchResult, SearchStats]]:
    """Search every query; output order and content do not depend on ``workers``."""
    if workers < 1:
        raise ValueError("workers must be at least 1")
    x = as_matrix(data)
    qs = np.asarray(queries, dtype=np.float32).reshape(-1, x.shape[1]) if len(queries) else []
    run = lambda q: graph_search(graph, x, q, params, alg, **kwargs)  # noqa: E731
    if workers == 1 or len(qs) <= 1:
        return [run(q) for q in qs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, qs))


# -- persistence --------------------------------------------------------------


def save_graph(graph: ProximityGraph, path: str | os.PathLike) -> None:
    """Write the fixed-width VXGR layout.

    Header: magic ``VXGR``, then uint32 version, N, R and entry. Body: N rows
    of exactly R uint32 ids, short rows padded with 0xFFFFFFFF. R is the
    widest row, which can exceed the build degree after reachability repair.
    """
    n, width = graph.num_nodes, graph.max_degree
    table = np.full((n, width), _PAD, dtype="<u4")
    for i, row in enumerate(graph.neighbors):
        table[i, :row.shape[0]] = row
    with open(path, "wb") as f:
        f.write(GRAPH_MAGIC)
        f.write(struct.pack("<IIII", GRAPH_VERSION, n, width, graph.entry))
        f.write(table.tobytes())


def load_graph(path: str | os.PathLike) -> ProximityGraph:
    raw = open(path, "rb").read()
    if len(raw) < 20 or raw[:4] != GRAPH_MAGIC:
        raise FormatError(f"{path} is not a VXGR graph file")
    version, n, width, entry = struct.unpack_from("<IIII", raw, 4)
    if version != GRAPH_VERSION:
        raise FormatError(f"unsupported VXGR version {version}")
    expected = 20 + 4 * n * width
    if len(raw) != expected:
        raise FormatError(f"VXGR body is {len(raw) - 20} bytes, expected {expected - 20}")
    table = np.frombuffer(raw, dtype="<u4", offset=20).reshape(n, width)
    rows = [r[r != _PAD].astype(np.int64) for r in table]
    return ProximityGraph(rows, entry, max_degree=width)


def parse_adjacency_text(text: str, entry: int = 0) -> ProximityGraph:
    """Parse ``id: n1 n2 ...`` lines (one per node; blank lines and ``#`` comments skipped)."""
    rows: dict[int, list[int]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        head, sep, tail = line.partition(":")
        if not sep:
            raise FormatError(f"line {lineno}: expected 'id: neighbors'")
        try:
            node = int(head)
            nbrs = [int(t) for t in tail.split()]
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
        if node in rows:
            raise FormatError(f"line {lineno}: node {node} listed twice")
        rows[node] = nbrs
    if sorted(rows) != list(range(len(rows))):
        raise FormatError("adjacency text must list every node id 0..N-1 exactly once")
    return ProximityGraph([rows[i] for i in range(len(rows))], entry)


def format_adjacency_text(graph: ProximityGraph) -> str:
    return "".join(f"{i}: {' '.join(map(str, row))}\n" for i, row in enumerate(graph._rows))
