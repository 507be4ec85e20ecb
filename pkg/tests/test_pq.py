import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vecsearch.pq import (
    PQCodebook,
    adc_distance,
    apply_opq,
    build_lut,
    pq_encode,
    pq_reconstruct,
    pq_train,
)


def _random_codebook(rng, m, dsub):
    return PQCodebook(rng.normal(size=(m, 256, dsub)).astype(np.float32))


def _direct_sq(a, b):
    d = np.asarray(a, np.float64) - np.asarray(b, np.float64)
    return float(d @ d)


class TestTrain:
    def test_shape(self, rng):
        cb = pq_train(rng.normal(size=(300, 2)).astype(np.float32), 2, seed=0, iters=3)
        assert cb.centroids.shape == (2, 256, 1)
        assert (cb.m, cb.dsub, cb.dim) == (2, 1, 2)

    def test_k_equals_n_zero_error(self, rng):
        x = rng.normal(size=(256, 4)).astype(np.float32)
        cb = pq_train(x, 1, seed=0, iters=2)
        assert sorted(map(tuple, cb.centroids[0].tolist())) == sorted(map(tuple, x.tolist()))
        np.testing.assert_array_equal(pq_reconstruct(cb, pq_encode(cb, x)), x)

    def test_not_divisible(self, rng):
        with pytest.raises(ValueError, match="not divisible"):
            pq_train(rng.normal(size=(300, 6)).astype(np.float32), 4)

    def test_too_few_vectors(self, rng):
        with pytest.raises(ValueError, match="256"):
            pq_train(rng.normal(size=(100, 4)).astype(np.float32), 2)

    def test_deterministic(self, rng):
        x = rng.normal(size=(400, 4)).astype(np.float32)
        assert pq_train(x, 2, seed=5, iters=3).centroids.tobytes() == pq_train(x, 2, seed=5, iters=3).centroids.tobytes()


class TestEncode:
    def test_all_sevens(self, rng):
        cb = _random_codebook(rng, 4, 3)
        v = np.concatenate([cb.centroids[i, 7] for i in range(4)])
        assert pq_encode(cb, v).tolist() == [7, 7, 7, 7]

    def test_fixed_point(self, rng):
        cb = _random_codebook(rng, 3, 4)
        for _ in range(50):
            code = rng.integers(0, 256, size=3).astype(np.uint8)
            np.testing.assert_array_equal(pq_encode(cb, pq_reconstruct(cb, code)), code)

    def test_matches_exhaustive_scan(self, rng):
        cb = _random_codebook(rng, 4, 2)
        v = rng.normal(size=8).astype(np.float32)
        expected = []
        for i in range(4):
            d = [_direct_sq(v[2 * i:2 * i + 2], cb.centroids[i, j]) for j in range(256)]
            expected.append(d.index(min(d)))
        assert pq_encode(cb, v).tolist() == expected

    def test_tie_to_smaller_index(self):
        c = np.zeros((1, 256, 1), dtype=np.float32)
        c[0, :, 0] = np.arange(256) + 10
        c[0, 3, 0] = -1.0
        c[0, 9, 0] = 1.0
        assert pq_encode(PQCodebook(c), [0.0]).tolist() == [3]

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError, match="dimension"):
            pq_encode(_random_codebook(rng, 2, 2), np.zeros(5))

    def test_encoding_optimal_over_all_codes(self, rng):
        # m=2 keeps the full code space (65536) enumerable
        cb = _random_codebook(rng, 2, 2)
        v = rng.normal(size=4).astype(np.float32)
        all_codes = np.array(list(itertools.product(range(256), repeat=2)))
        recon = pq_reconstruct(cb, all_codes).astype(np.float64)
        errs = ((recon - v.astype(np.float64)) ** 2).sum(axis=1)
        got = _direct_sq(v, pq_reconstruct(cb, pq_encode(cb, v)))
        assert got <= errs.min() + 1e-12


class TestReconstruct:
    def test_zero_code(self, rng):
        cb = _random_codebook(rng, 3, 2)
        np.testing.assert_array_equal(pq_reconstruct(cb, [0, 0, 0]), cb.centroids[:, 0].reshape(-1))

    def test_manual_concatenation(self, rng):
        cb = _random_codebook(rng, 5, 3)
        code = rng.integers(0, 256, size=5)
        manual = np.concatenate([cb.centroids[i, code[i]] for i in range(5)])
        np.testing.assert_array_equal(pq_reconstruct(cb, code), manual)

    def test_centroid_tuple_identity(self, rng):
        cb = _random_codebook(rng, 2, 3)
        v = np.concatenate([cb.centroids[0, 11], cb.centroids[1, 200]])
        np.testing.assert_array_equal(pq_reconstruct(cb, pq_encode(cb, v)), v)


class TestLutAndAdc:
    def test_zero_on_centroid(self, rng):
        cb = _random_codebook(rng, 2, 2)
        q = np.concatenate([cb.centroids[0, 4], cb.centroids[1, 9]])
        lut = build_lut(cb, q)
        assert lut[0, 4] == 0.0 and lut[1, 9] == 0.0

    def test_hand_value(self):
        c = np.zeros((1, 256, 2), dtype=np.float32)
        c[0, 0] = (1, 2)
        assert build_lut(PQCodebook(c), [2, 2])[0, 0] == 1.0

    def test_every_entry_matches_recomputation(self, rng):
        cb = _random_codebook(rng, 4, 3)
        q = rng.normal(size=12)
        lut = build_lut(cb, q)
        assert lut.shape == (4, 256)
        for i in range(4):
            for j in range(256):
                assert lut[i, j] == pytest.approx(_direct_sq(q[3 * i:3 * i + 3], cb.centroids[i, j]), rel=1e-6)
        assert (lut >= 0).all() and np.isfinite(lut).all()

    def test_sum_of_lookups(self):
        lut = np.zeros((2, 256))
        lut[0, 3] = 1.0
        lut[1, 200] = 4.0
        assert adc_distance(lut, np.array([3, 200], dtype=np.uint8)) == 5.0

    def test_zero_on_reconstruction(self, rng):
        cb = _random_codebook(rng, 4, 2)
        code = rng.integers(0, 256, size=4)
        assert adc_distance(build_lut(cb, pq_reconstruct(cb, code)), code) == pytest.approx(0.0, abs=1e-9)

    def test_batch_equals_single(self, rng):
        cb = _random_codebook(rng, 4, 2)
        lut = build_lut(cb, rng.normal(size=8))
        codes = rng.integers(0, 256, size=(20, 4))
        np.testing.assert_array_equal(adc_distance(lut, codes), [adc_distance(lut, c) for c in codes])

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_adc_equals_distance_to_reconstruction(self, seed):
        r = np.random.default_rng(seed)
        cb = _random_codebook(r, 4, 4)
        q = r.normal(size=16).astype(np.float32)
        code = r.integers(0, 256, size=4)
        direct = _direct_sq(q, pq_reconstruct(cb, code))
        assert adc_distance(build_lut(cb, q), code) == pytest.approx(direct, rel=1e-4)


class TestOpq:
    def test_identity(self, rng):
        q = rng.normal(size=5).astype(np.float32)
        np.testing.assert_array_equal(apply_opq(np.eye(5), q), q)

    def test_quarter_turn(self):
        np.testing.assert_allclose(apply_opq([[0, -1], [1, 0]], [1, 0]), [0, 1])

    def test_norm_preserved(self, rng):
        rot, _ = np.linalg.qr(rng.normal(size=(16, 16)))
        for _ in range(20):
            q = rng.normal(size=16).astype(np.float32)
            assert np.linalg.norm(apply_opq(rot, q)) == pytest.approx(np.linalg.norm(q), rel=1e-4)

    def test_batch_matches_single(self, rng):
        rot, _ = np.linalg.qr(rng.normal(size=(4, 4)))
        x = rng.normal(size=(6, 4)).astype(np.float32)
        np.testing.assert_allclose(apply_opq(rot, x), np.stack([apply_opq(rot, v) for v in x]), rtol=1e-6, atol=1e-6)

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError, match="orthonormal"):
            apply_opq([[2, 0], [0, 1]], [1, 1])
