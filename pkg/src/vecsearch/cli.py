"""Command-line entry point.

Reports go to stdout as JSON, data artifacts to the named files, logs to
stderr. Exit codes: 0 success, 2 usage or validation error, 1 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import eval as ev
from .bloom import DEFAULT_BITS, DEFAULT_HASHES
from .dataset import (
    Dataset,
    compute_groundtruth,
    load_groundtruth,
    load_vectors,
    recall_at_k,
    write_fvecs,
    write_ivecs,
)
from .graph import (
    TraversalParams,
    batch_search,
    knn_graph_build,
    load_graph,
    parse_adjacency_text,
    save_graph,
)
from .ivf import MODES, IvfSearchParams, ivf_build, ivf_search, load_index, save_index
from .synthetic import base_and_queries
from .topk import ahpq_l1_length, hpq_overflow_probability

log = logging.getLogger("vecsearch")


class UsageError(Exception):
    pass


def _emit(report: dict) -> None:
    json.dump(report, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _goal(text: str) -> tuple[int, float]:
    k, sep, value = text.partition("=")
    try:
        if not sep:
            raise ValueError
        return int(k), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"goal must look like K=RECALL (e.g. 10=0.8), got {text!r}") from None


def _map(fn, items, workers: int) -> list:
    if workers < 1:
        raise UsageError("--workers must be at least 1")
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _load_truth(path, queries: Dataset, k: int):
    truth = load_groundtruth(path)
    if len(truth) != queries.count:
        raise UsageError(f"{path}: {len(truth)} ground-truth rows for {queries.count} queries")
    if any(row.shape[0] < k for row in truth):
        raise UsageError(f"{path}: ground-truth rows shorter than k={k}")
    return truth


def _write_metrics(path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# -- commands -----------------------------------------------------------------


def cmd_generate(args) -> dict:
    base, queries = base_and_queries(args.n, args.nq, args.dim, args.clusters, args.seed)
    write_fvecs(args.base, base)
    write_fvecs(args.queries, queries)
    return {"base": args.base, "queries": args.queries, "n": args.n, "nq": args.nq, "dim": args.dim}


def cmd_groundtruth(args) -> dict:
    base = load_vectors(args.base)
    queries = load_vectors(args.queries)
    truth = compute_groundtruth(base, queries, args.k)
    write_ivecs(args.out, truth)
    return {"out": args.out, "queries": len(truth), "k": args.k}


def cmd_build_ivfpq(args) -> dict:
    data = load_vectors(args.input)
    opq = load_vectors(args.opq).data if args.opq else None
    t0 = time.perf_counter()
    index = ivf_build(data, args.nlist, args.m, args.mode, opq, args.seed, args.iters)
    elapsed = time.perf_counter() - t0
    save_index(index, args.out)
    lengths = index.list_lengths()
    hist, edges = np.histogram(lengths, bins=min(10, max(1, index.nlist)))
    return {
        "out": args.out,
        "mode": index.mode,
        "n": data.count,
        "dim": data.dim,
        "nlist": index.nlist,
        "m": index.m,
        "opq": opq is not None,
        "list_length": {"min": int(lengths.min()), "max": int(lengths.max()), "mean": float(lengths.mean())},
        "list_length_histogram": {"counts": hist.tolist(), "edges": edges.tolist()},
        "build_seconds": round(elapsed, 4),
    }


def cmd_build_graph(args) -> dict:
    data = load_vectors(args.input)
    t0 = time.perf_counter()
    graph = knn_graph_build(data, args.R, args.seed)
    elapsed = time.perf_counter() - t0
    save_graph(graph, args.out)
    degrees = np.array([row.shape[0] for row in graph.neighbors])
    return {
        "out": args.out,
        "n": graph.num_nodes,
        "R": args.R,
        "stored_width": graph.max_degree,
        "entry": graph.entry,
        "repair_edges": graph.repair_edges,
        "degree": {"min": int(degrees.min()), "max": int(degrees.max()), "mean": float(degrees.mean())},
        "build_seconds": round(elapsed, 4),
    }


def cmd_convert_graph(args) -> dict:
    with open(args.text) as f:
        graph = parse_adjacency_text(f.read(), args.entry)
    save_graph(graph, args.out)
    return {"out": args.out, "n": graph.num_nodes, "width": graph.max_degree, "entry": graph.entry}


def cmd_search_ivf(args) -> dict:
    index = load_index(args.index)
    queries = load_vectors(args.queries)
    params = IvfSearchParams(args.nprobe, args.k)
    truth = _load_truth(args.gt, queries, args.k) if args.gt else None
    t0 = time.perf_counter()
    out = _map(lambda q: ivf_search(index, q, params), list(queries.data), args.workers)
    elapsed = time.perf_counter() - t0
    write_ivecs(args.out, [res.ids for res, _ in out])
    rows, recalls = [], []
    for i, (res, st) in enumerate(out):
        rec = recall_at_k(res.ids, truth[i], args.k) if truth is not None else None
        recalls.append(rec)
        rows.append([i, "" if rec is None else f"{rec:.6f}", st.cells_probed, st.distance_computations, int(st.underfilled)])
    if args.metrics:
        _write_metrics(args.metrics, ["query", "recall", "cells_probed", "distance_computations", "underfilled"], rows)
    report = {"out": args.out, "queries": queries.count, "k": args.k, "nprobe": args.nprobe,
              "seconds": round(elapsed, 4)}
    if truth is not None:
        report["mean_recall"] = float(np.mean(recalls))
    return report


def _search_kwargs(args) -> dict:
    return {"visited": args.visited, "bloom_bits": args.bloom_bits,
            "bloom_hashes": args.bloom_hashes, "bloom_seed": args.seed}


def cmd_search_graph(args) -> dict:
    graph = load_graph(args.graph)
    base = load_vectors(args.base)
    queries = load_vectors(args.queries)
    params = TraversalParams(args.l, args.k, args.mg, args.mc, args.candidate_cap)
    truth = _load_truth(args.gt, queries, args.k) if args.gt else None
    t0 = time.perf_counter()
    out = batch_search(graph, base, queries, params, args.workers, args.alg, **_search_kwargs(args))
    elapsed = time.perf_counter() - t0
    write_ivecs(args.out, [res.ids for res, _ in out])
    rows, recalls = [], []
    for i, (res, st) in enumerate(out):
        rec = recall_at_k(res.ids, truth[i], args.k) if truth is not None else None
        recalls.append(rec)
        rows.append([i, "" if rec is None else f"{rec:.6f}", st.hops, st.nodes_visited,
                     st.distance_computations, f"{st.bloom_false_positive_upper:.6g}"])
    if args.metrics:
        _write_metrics(args.metrics, ["query", "recall", "hops", "nodes_visited", "distance_computations",
                                      "bloom_fp_upper"], rows)
    report = {"out": args.out, "alg": args.alg, "queries": queries.count, "l": args.l, "k": args.k,
              "mg": args.mg, "mc": args.mc, "seconds": round(elapsed, 4),
              "mean_hops": float(np.mean([st.hops for _, st in out])) if out else 0.0}
    if truth is not None:
        report["mean_recall"] = float(np.mean(recalls))
    return report


def cmd_recall_sweep(args) -> dict:
    index = load_index(args.index)
    queries = load_vectors(args.queries)
    truth = _load_truth(args.gt, queries, args.k)
    nprobes = sorted(set(args.nprobe)) if args.nprobe else list(range(1, index.nlist + 1))
    curve = ev.recall_sweep(index, queries, truth, args.k, nprobes, args.mode)
    curve.to_csv(args.out)
    return {"out": args.out, "points": [[p, r] for p, r in curve.points()]}


def cmd_min_nprobe(args) -> dict:
    index = load_index(args.index)
    queries = load_vectors(args.queries)
    rows = []
    for k, goal in args.goal:
        truth = _load_truth(args.gt, queries, k)
        best = ev.min_nprobe_for_recall(index, queries, truth, k, goal, args.mode)
        rows.append({"k": k, "goal": goal, "nprobe": best})
    needed = [r["nprobe"] for r in rows]
    overall = None if any(n is None for n in needed) else max(needed)
    if args.out:
        _write_metrics(args.out, ["k", "goal", "nprobe"],
                       [[r["k"], r["goal"], "unreachable" if r["nprobe"] is None else r["nprobe"]] for r in rows])
    return {"goals": rows, "nprobe": overall if overall is not None else "unreachable"}


def cmd_tune_dst(args) -> dict:
    graph = load_graph(args.graph)
    base = load_vectors(args.base)
    queries = load_vectors(args.queries)
    truth = _load_truth(args.gt, queries, args.k)
    grid = [(mg, mc) for mg in args.mg for mc in args.mc]
    rows = ev.dst_tune(graph, base, queries, truth, args.k, args.l, grid, args.workers, **_search_kwargs(args))
    ev.write_tuning_csv(rows, args.out)
    best = rows[0]
    return {"out": args.out, "configurations": len(rows),
            "best": {"mg": best.mg, "mc": best.mc, "recall": best.recall,
                     "distance_computations": best.distance_computations}}


def cmd_size_ahpq(args) -> dict:
    length = ahpq_l1_length(args.K, args.queues, args.target)
    tail = hpq_overflow_probability(args.K, args.queues, length)
    return {"K": args.K, "queues": args.queues, "target": args.target, "l1_len": length,
            "per_queue_overflow": tail, "union_bound": min(1.0, args.queues * tail)}


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vecsearch", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(func=fn)
        return sp

    g = add("generate", cmd_generate, "write a seeded synthetic base/query set as fvecs")
    g.add_argument("--n", type=int, default=10000)
    g.add_argument("--nq", type=int, default=100)
    g.add_argument("--dim", type=int, default=16)
    g.add_argument("--clusters", type=int, default=256)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--base", required=True)
    g.add_argument("--queries", required=True)

    g = add("groundtruth", cmd_groundtruth, "exact kNN ground truth as ivecs")
    g.add_argument("--base", required=True)
    g.add_argument("--queries", required=True)
    g.add_argument("--k", type=int, default=100)
    g.add_argument("--out", required=True)

    g = add("build-ivfpq", cmd_build_ivfpq, "train and persist an IVF index (VXIV)")
    g.add_argument("--input", required=True)
    g.add_argument("--nlist", type=int, default=None, help="default: round(sqrt(N))")
    g.add_argument("--m", type=int, default=8)
    g.add_argument("--mode", choices=MODES, default="pq-residual")
    g.add_argument("--opq", default=None, help="fvecs file holding a D x D orthonormal matrix")
    g.add_argument("--iters", type=int, default=25)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)

    g = add("build-graph", cmd_build_graph, "build and persist an exact kNN graph (VXGR)")
    g.add_argument("--input", required=True)
    g.add_argument("--R", type=int, default=16)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)

    g = add("convert-graph", cmd_convert_graph, "convert 'id: n1 n2 ...' adjacency text to VXGR")
    g.add_argument("--text", required=True)
    g.add_argument("--entry", type=int, default=0)
    g.add_argument("--out", required=True)

    g = add("search-ivf", cmd_search_ivf, "search an IVF index")
    g.add_argument("--index", required=True)
    g.add_argument("--queries", required=True)
    g.add_argument("--k", type=int, default=10)
    g.add_argument("--nprobe", type=int, default=1)
    g.add_argument("--gt", default=None)
    g.add_argument("--out", required=True, help="result ids (ivecs)")
    g.add_argument("--metrics", default=None, help="per-query metrics CSV")
    g.add_argument("--workers", type=int, default=1)

    def traversal_flags(g):
        g.add_argument("--graph", required=True)
        g.add_argument("--base", required=True)
        g.add_argument("--queries", required=True)
        g.add_argument("--l", type=int, default=64)
        g.add_argument("--k", type=int, default=10)
        g.add_argument("--visited", choices=("bloom", "exact"), default="bloom")
        g.add_argument("--bloom-bits", type=int, default=DEFAULT_BITS)
        g.add_argument("--bloom-hashes", type=int, default=DEFAULT_HASHES)
        g.add_argument("--seed", type=int, required=True, help="Bloom hash seed")
        g.add_argument("--workers", type=int, default=1)

    g = add("search-graph", cmd_search_graph, "traverse a VXGR graph with BFS, MCS or DST")
    traversal_flags(g)
    g.add_argument("--alg", choices=("bfs", "mcs", "dst"), default="dst")
    g.add_argument("--mg", type=int, default=1)
    g.add_argument("--mc", type=int, default=1)
    g.add_argument("--candidate-cap", type=int, default=None)
    g.add_argument("--gt", default=None)
    g.add_argument("--out", required=True)
    g.add_argument("--metrics", default=None)

    g = add("tune-dst", cmd_tune_dst, "grid-search DST (mg, mc) on sample queries")
    traversal_flags(g)
    g.add_argument("--gt", required=True)
    g.add_argument("--mg", type=_int_list, default=list(range(1, 9)))
    g.add_argument("--mc", type=_int_list, default=[1, 2, 4])
    g.add_argument("--out", required=True)

    for name, fn, help in (("recall-sweep", cmd_recall_sweep, "recall versus nprobe curve (CSV)"),
                           ("min-nprobe", cmd_min_nprobe, "smallest nprobe meeting recall goals")):
        g = add(name, fn, help)
        g.add_argument("--index", required=True)
        g.add_argument("--queries", required=True)
        g.add_argument("--gt", required=True)
        g.add_argument("--mode", choices=("intersection", "first-hit"), default="intersection")
    sweep, minp = sub.choices["recall-sweep"], sub.choices["min-nprobe"]
    sweep.add_argument("--k", type=int, default=10)
    sweep.add_argument("--nprobe", type=_int_list, default=None, help="comma list; default 1..nlist")
    sweep.add_argument("--out", required=True)
    minp.add_argument("--goal", type=_goal, action="append", required=True,
                      help="K=RECALL, repeatable (e.g. --goal 1=0.3 --goal 10=0.8)")
    minp.add_argument("--out", default=None)

    g = add("size-ahpq", cmd_size_ahpq, "level-one queue length for the approximate hierarchical queue")
    g.add_argument("--K", type=int, default=100)
    g.add_argument("--queues", type=int, default=16)
    g.add_argument("--target", type=float, default=0.99)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        report = args.func(args)
    except FileNotFoundError as exc:
        print(f"vecsearch: no such file: {exc.filename}", file=sys.stderr)
        return 2
    except (UsageError, ValueError) as exc:
        print(f"vecsearch: {exc}", file=sys.stderr)
        return 2
    except Exception:
        log.exception("internal error")
        return 1
    _emit(report)
    return 0


if __name__ == "__main__":
    sys.exit(main())
