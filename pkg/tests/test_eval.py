import csv

import numpy as np
import pytest

from vecsearch.clustering import kmeans_assign
from vecsearch.dataset import GroundTruth, brute_force_knn, compute_groundtruth, recall_at_k
from vecsearch.eval import (
    RecallCurve,
    default_grid,
    dst_tune,
    mean_recall,
    min_nprobe_for_recall,
    recall_sweep,
    write_tuning_csv,
)
from vecsearch.graph import bfs_search
from vecsearch.ivf import ivf_build, select_cells
from vecsearch.synthetic import base_and_queries


@pytest.fixture(scope="module")
def mid():
    base, queries = base_and_queries(2000, 40, 16, clusters=64, seed=5)
    truth = compute_groundtruth(base, queries, 10)
    return base, queries, truth, ivf_build(base, 45, mode="flat", seed=5)


class TestRecallSweep:
    def test_full_probe_is_exact(self, mid):
        base, queries, truth, idx = mid
        curve = recall_sweep(idx, queries, truth, 10, [idx.nlist])
        assert curve.recalls == (1.0,)

    def test_two_points(self, mid):
        _, queries, truth, idx = mid
        curve = recall_sweep(idx, queries, truth, 10, [1, idx.nlist])
        assert len(curve.points()) == 2
        assert curve.recalls[1] >= curve.recalls[0]

    def test_matches_bruteforce_recomputation(self, mid):
        base, queries, truth, idx = mid
        nprobes = [1, 2, 4, 8, 16, 45]
        curve = recall_sweep(idx, queries, truth, 10, nprobes)
        cell_of = kmeans_assign(base, idx.coarse)
        for p, got in curve.points():
            recs = []
            for i, q in enumerate(queries):
                cand = np.flatnonzero(np.isin(cell_of, select_cells(idx, q, p)))
                k = min(10, cand.size)
                local = brute_force_knn(base[cand], q, k).ids
                recs.append(recall_at_k(cand[local], truth[i], 10))
            assert got == pytest.approx(np.mean(recs), abs=1e-12)
        assert all(b >= a for a, b in zip(curve.recalls, curve.recalls[1:]))

    def test_curve_requires_increasing(self):
        with pytest.raises(ValueError):
            RecallCurve((2, 1), (0.5, 0.4))

    def test_csv(self, mid, tmp_path):
        _, queries, truth, idx = mid
        recall_sweep(idx, queries, truth, 10, [1, 45]).to_csv(tmp_path / "c.csv")
        rows = list(csv.reader(open(tmp_path / "c.csv")))
        assert rows[0] == ["nprobe", "recall"] and rows[-1] == ["45", "1.000000"]


class TestMinNprobe:
    def test_goal_zero(self, mid):
        _, queries, truth, idx = mid
        assert min_nprobe_for_recall(idx, queries, truth, 10, 0.0) == 1

    @pytest.mark.parametrize("goal", [0.5, 0.9, 0.97, 1.0])
    def test_minimal_by_direct_evaluation(self, mid, goal):
        _, queries, truth, idx = mid
        r = min_nprobe_for_recall(idx, queries, truth, 10, goal)
        assert r is not None and 1 <= r <= idx.nlist
        assert mean_recall(idx, queries, truth, 10, r) >= goal
        assert r == 1 or mean_recall(idx, queries, truth, 10, r - 1) < goal
        # exhaustive check of minimality on the monotone flat curve
        assert all(mean_recall(idx, queries, truth, 10, p) < goal for p in range(1, r))

    def test_unreachable_under_heavy_quantization(self):
        # 300 distinct points on a line, one 1-D sub-space of 256 centroids:
        # some neighbors share a code, their ADC ties and the larger id loses
        x = np.arange(300, dtype=np.float32).reshape(-1, 1)
        idx = ivf_build(x, 1, m=1, mode="pq-raw", seed=0, iters=5)
        truth = GroundTruth(tuple([i] for i in range(300)))
        assert min_nprobe_for_recall(idx, x, truth, 1, 1.0) is None

    def test_goal_above_one(self, mid):
        _, queries, truth, idx = mid
        with pytest.raises(ValueError):
            min_nprobe_for_recall(idx, queries, truth, 10, 1.5)


class TestDstTune:
    def test_single_config_is_bfs(self, small_instance, small_graph):
        base, queries, truth = small_instance
        qs = queries[:30]
        (row,) = dst_tune(small_graph, base, qs, truth, 10, 64, [(1, 1)])
        out = [bfs_search(small_graph, base, q, 64, 10) for q in qs]
        assert row.recall == pytest.approx(np.mean([recall_at_k(r.ids, truth[i], 10) for i, (r, _) in enumerate(out)]))
        assert row.distance_computations == pytest.approx(np.mean([s.distance_computations for _, s in out]))
        assert row.hops == pytest.approx(np.mean([s.hops for _, s in out]))

    def test_duplicates_identical(self, small_instance, small_graph):
        base, queries, truth = small_instance
        rows = dst_tune(small_graph, base, queries[:10], truth, 10, 32, [(2, 2), (2, 2)])
        assert rows[0] == rows[1]

    def test_ranking_stable(self, small_instance, small_graph, tmp_path):
        base, queries, truth = small_instance
        grid = [(mg, mc) for mg in range(1, 5) for mc in range(1, 5)]
        a = dst_tune(small_graph, base, queries[:20], truth, 10, 32, grid)
        b = dst_tune(small_graph, base, queries[:20], truth, 10, 32, grid)
        assert a == b
        keys = [(-r.recall, r.distance_computations) for r in a]
        assert keys == sorted(keys)
        write_tuning_csv(a, tmp_path / "a.csv")
        write_tuning_csv(b, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_empty_grid(self, small_instance, small_graph):
        base, queries, truth = small_instance
        with pytest.raises(ValueError):
            dst_tune(small_graph, base, queries, truth, 10, 64, [])

    def test_default_grid(self):
        assert len(default_grid()) == 24 and (8, 4) in default_grid()
