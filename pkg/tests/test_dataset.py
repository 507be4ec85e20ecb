import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vecsearch.dataset import (
    Dataset,
    FormatError,
    brute_force_knn,
    load_groundtruth,
    load_vectors,
    recall_at_k,
    write_bvecs,
    write_fvecs,
    write_ivecs,
)


def _scan_knn(data, q, k):
    """Independent O(N*D) scan in plain Python floats."""
    scored = []
    for i, row in enumerate(data.tolist()):
        d = 0.0
        for a, b in zip(row, q.tolist()):
            d += (a - b) * (a - b)
        scored.append((d, i))
    scored.sort()
    return scored[:k]


class TestLoadVectors:
    def test_single_fvecs_record(self, tmp_path):
        p = tmp_path / "one.fvecs"
        p.write_bytes(struct.pack("<iff", 2, 1.0, 2.0))
        ds = load_vectors(p, "fvecs")
        assert (ds.dim, ds.count) == (2, 1)
        np.testing.assert_array_equal(ds.data, [[1.0, 2.0]])

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.fvecs"
        p.write_bytes(b"")
        with pytest.raises(FormatError, match="no records"):
            load_vectors(p)

    def test_dimension_mismatch(self, tmp_path):
        p = tmp_path / "bad.fvecs"
        p.write_bytes(struct.pack("<i4f", 4, 1, 2, 3, 4) + struct.pack("<i3f", 3, 1, 2, 3))
        with pytest.raises(FormatError, match="dimension mismatch at record 1"):
            load_vectors(p)

    def test_truncated(self, tmp_path):
        p = tmp_path / "trunc.fvecs"
        p.write_bytes(struct.pack("<iff", 3, 1.0, 2.0))
        with pytest.raises(FormatError, match="truncated"):
            load_vectors(p)

    def test_zero_dimension(self, tmp_path):
        p = tmp_path / "zero.fvecs"
        p.write_bytes(struct.pack("<i", 0))
        with pytest.raises(FormatError):
            load_vectors(p)

    def test_bvecs_widened(self, tmp_path):
        p = tmp_path / "x.bvecs"
        write_bvecs(p, [[0, 128, 255], [1, 2, 3]])
        ds = load_vectors(p)
        assert ds.data.dtype == np.float32
        np.testing.assert_array_equal(ds.data, [[0, 128, 255], [1, 2, 3]])

    def test_fvecs_roundtrip(self, tmp_path, rng):
        x = rng.normal(size=(50, 7)).astype(np.float32)
        write_fvecs(tmp_path / "x.fvecs", x)
        np.testing.assert_array_equal(load_vectors(tmp_path / "x.fvecs").data, x)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            Dataset(np.array([[1.0, np.nan]]))


class TestLoadGroundtruth:
    def test_single_record(self, tmp_path):
        p = tmp_path / "gt.ivecs"
        p.write_bytes(struct.pack("<4i", 3, 5, 1, 9))
        gt = load_groundtruth(p)
        assert len(gt) == 1
        assert gt[0].tolist() == [5, 1, 9]

    def test_zero_length_record(self, tmp_path):
        p = tmp_path / "gt.ivecs"
        p.write_bytes(struct.pack("<i", 0))
        assert load_groundtruth(p)[0].tolist() == []

    def test_generated_100_by_100(self, tmp_path, rng):
        rows = [rng.permutation(1000)[:100] for _ in range(100)]
        write_ivecs(tmp_path / "gt.ivecs", rows)
        gt = load_groundtruth(tmp_path / "gt.ivecs")
        assert len(gt) == 100
        assert all(len(r) == 100 for r in gt)
        for a, b in zip(gt, rows):
            np.testing.assert_array_equal(a, b)

    def test_negative_id(self, tmp_path):
        p = tmp_path / "gt.ivecs"
        p.write_bytes(struct.pack("<3i", 2, 4, -1))
        with pytest.raises(FormatError, match="negative"):
            load_groundtruth(p)

    def test_truncated(self, tmp_path):
        p = tmp_path / "gt.ivecs"
        p.write_bytes(struct.pack("<3i", 5, 4, 1))
        with pytest.raises(FormatError, match="truncated"):
            load_groundtruth(p)


class TestBruteForce:
    data = np.array([[0, 0], [3, 4]], dtype=np.float32)

    def test_query_on_vector(self):
        assert brute_force_knn(self.data, [0, 0], 1).pairs() == [(0, 0.0)]

    def test_three_four_five(self):
        assert brute_force_knn(self.data, [0, 0], 2).pairs() == [(0, 0.0), (1, 25.0)]

    def test_matches_independent_scan(self, rng):
        x = rng.normal(size=(100, 8)).astype(np.float32)
        q = rng.normal(size=8).astype(np.float32)
        res = brute_force_knn(x, q, 10)
        expected = _scan_knn(x.astype(np.float64), q.astype(np.float64), 10)
        assert res.ids.tolist() == [i for _, i in expected]
        np.testing.assert_allclose(res.distances, [d for d, _ in expected], rtol=1e-12)

    def test_ties_to_smaller_id(self):
        x = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]], dtype=np.float32)
        assert brute_force_knn(x, [0, 0], 4).ids.tolist() == [0, 1, 2, 3]
        assert brute_force_knn(x, [0, 0], 2).ids.tolist() == [0, 1]

    def test_errors(self):
        with pytest.raises(ValueError):
            brute_force_knn(self.data, [0, 0], 3)
        with pytest.raises(ValueError, match="dimension"):
            brute_force_knn(self.data, [0, 0, 0], 1)

    @given(st.integers(0, 2**32 - 1))
    def test_sorted_and_exact_recall(self, seed):
        r = np.random.default_rng(seed)
        x = r.integers(0, 4, size=(30, 3)).astype(np.float32)  # many ties
        q = r.integers(0, 4, size=3)
        res = brute_force_knn(x, q, 10)
        keys = list(zip(res.distances.tolist(), res.ids.tolist()))
        assert keys == sorted(keys)
        assert len(set(res.ids.tolist())) == 10
        assert recall_at_k(res.ids, brute_force_knn(x, q, 10).ids, 10) == 1.0


class TestRecall:
    def test_identical(self):
        assert recall_at_k([1, 2, 3], [1, 2, 3], 3) == 1.0

    def test_partial(self):
        assert recall_at_k([1, 2, 3], [1, 2, 4], 3) == pytest.approx(2 / 3)

    def test_first_hit(self):
        assert recall_at_k([9, 1], [1, 5], 2, mode="first-hit") == 1.0
        assert recall_at_k([9, 2], [1, 5], 2, mode="first-hit") == 0.0

    def test_zero_k(self):
        with pytest.raises(ValueError):
            recall_at_k([1], [1], 0)

    @given(st.permutations(list(range(10))), st.permutations(list(range(5, 15))))
    def test_permutation_invariant(self, a, b):
        base = recall_at_k(list(range(10)), list(range(5, 15)), 10)
        assert recall_at_k(a, b, 10) == base == 0.5
