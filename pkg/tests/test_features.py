import numpy as np
import pytest

from partreg.errors import DimensionMismatch, EmptyResult
from partreg.features import (
    CorrespondenceSet,
    KernelConfig,
    RotaryEncoder,
    dual_softmax,
    extract_matches,
    kernel_descriptor,
    oracle_correspondences,
    rotary_encode,
    score_matrix,
    subsample,
)
from partreg.geom import PointCloud, rotation_about_axis
from conftest import random_cloud


class TestSubsample:
    def test_half_of_hundred(self, rng):
        cloud = random_cloud(rng, 100)
        out, kept = subsample(cloud, 0.5, seed=3)
        assert len(out) == 50 and kept.size == 50

    def test_full_retention_is_identity(self, rng):
        cloud = random_cloud(rng, 33)
        out, kept = subsample(cloud, 1.0, seed=1)
        np.testing.assert_array_equal(kept, np.arange(33))
        np.testing.assert_array_equal(out.positions, cloud.positions)

    def test_same_seed_same_selection(self, rng):
        cloud = random_cloud(rng, 200)
        _, a = subsample(cloud, 0.3, seed=42)
        _, b = subsample(cloud, 0.3, seed=42)
        np.testing.assert_array_equal(a, b)

    def test_part_ids_carried(self, rng):
        ids = rng.integers(0, 4, 80)
        cloud = PointCloud(rng.standard_normal((80, 3)), part_ids=ids)
        out, kept = subsample(cloud, 0.5, seed=0)
        np.testing.assert_array_equal(out.part_ids, ids[kept])

    def test_zero_kept_raises(self, rng):
        with pytest.raises(EmptyResult):
            subsample(random_cloud(rng, 10), 0.01, seed=0)


class TestKernelDescriptor:
    def test_isolated_point_gets_zero_vector(self, rng):
        pts = np.vstack([rng.uniform(0, 1, (30, 3)), [[100.0, 0.0, 0.0]]])
        cfg = KernelConfig.default(radius=1.0, dimension=12)
        feats = kernel_descriptor(PointCloud(pts), cfg)
        assert np.linalg.norm(feats[-1]) == 0.0
        assert np.linalg.norm(feats[0]) > 0

    def test_correlation_limits(self):
        # h(y, k) = max(0, 1 - |y-k|/sigma): 1 at the kernel point, 0 beyond sigma
        cfg = KernelConfig.default(radius=1.0, dimension=12, seed=5)
        k0 = cfg.kernel_points[1]
        h_at_kernel = max(0.0, 1.0 - np.linalg.norm(k0 - k0) / cfg.sigma)
        assert h_at_kernel == 1.0
        far = k0 + np.array([cfg.sigma, 0.0, 0.0])
        h_far = max(0.0, 1.0 - np.linalg.norm(far - k0) / cfg.sigma)
        assert h_far == 0.0

    def test_translation_invariance(self, rng):
        cloud = random_cloud(rng, 80, scale=2.0)
        cfg = KernelConfig.default(radius=1.0, dimension=24)
        base = kernel_descriptor(cloud, cfg)
        shifted = kernel_descriptor(
            cloud.with_positions(cloud.positions + np.array([13.0, -4.0, 2.5])), cfg
        )
        np.testing.assert_allclose(base, shifted, atol=1e-9)

    def test_not_rotation_invariant(self, rng):
        # generic asymmetric cloud: descriptors change under a 90 degree turn
        cloud = PointCloud(rng.uniform(0, 1, (60, 3)) * np.array([1.0, 2.0, 3.0]))
        cfg = KernelConfig.default(radius=1.0, dimension=24)
        base = kernel_descriptor(cloud, cfg)
        rot = rotation_about_axis([0, 0, 1], np.pi / 2)
        turned = kernel_descriptor(cloud.with_positions(rot.apply(cloud.positions)), cfg)
        assert np.abs(base - turned).max() > 1e-3

    def test_descriptors_unit_length(self, rng):
        cloud = random_cloud(rng, 50, scale=1.0)
        cfg = KernelConfig.default(radius=1.5, dimension=24)
        feats = kernel_descriptor(cloud, cfg)
        norms = np.linalg.norm(feats, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-12)


class TestRotaryEncoder:
    def test_zero_position_is_identity(self, rng):
        enc = RotaryEncoder(dimension=24)
        x = rng.standard_normal(24)
        np.testing.assert_allclose(rotary_encode(enc, [0, 0, 0], x), x, atol=1e-12)

    def test_norm_preserved(self, rng):
        enc = RotaryEncoder(dimension=48)
        for _ in range(100):
            p = rng.uniform(-50, 50, 3)
            x = rng.standard_normal(48)
            out = rotary_encode(enc, p, x)
            assert abs(np.linalg.norm(out) - np.linalg.norm(x)) < 1e-9

    def test_relative_identity_matrices(self, rng):
        enc = RotaryEncoder(dimension=12)
        for _ in range(20):
            p, q = rng.uniform(-5, 5, 3), rng.uniform(-5, 5, 3)
            lhs = enc.matrix(p).T @ enc.matrix(q)
            rhs = enc.matrix(q - p)
            np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_relative_identity_inner_products(self, rng):
        enc = RotaryEncoder(dimension=24)
        for _ in range(200):
            p, q = rng.uniform(-10, 10, 3), rng.uniform(-10, 10, 3)
            x, y = rng.standard_normal(24), rng.standard_normal(24)
            lhs = rotary_encode(enc, p, x) @ rotary_encode(enc, q, y)
            rhs = x @ rotary_encode(enc, q - p, y)
            assert abs(lhs - rhs) < 1e-9

    def test_matrix_is_orthogonal(self, rng):
        enc = RotaryEncoder(dimension=18)
        m = enc.matrix(rng.uniform(-3, 3, 3))
        np.testing.assert_allclose(m.T @ m, np.eye(18), atol=1e-9)

    def test_dimension_must_be_multiple_of_six(self):
        with pytest.raises(DimensionMismatch):
            RotaryEncoder(dimension=16)

    def test_feature_dimension_checked(self, rng):
        enc = RotaryEncoder(dimension=12)
        with pytest.raises(DimensionMismatch):
            rotary_encode(enc, [0, 0, 0], rng.standard_normal(10))


class TestScoreMatrix:
    def test_self_match_diagonal_is_maximal(self, rng):
        enc = RotaryEncoder(dimension=12)
        pos = rng.uniform(-2, 2, (6, 3))
        feats = rng.standard_normal((6, 12))
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        s = score_matrix(enc, pos, feats, pos, feats)
        d = enc.dimension
        for i in range(6):
            assert s[i, i] == pytest.approx(1.0 / np.sqrt(d), abs=1e-12)
            assert s[i, i] >= s[i].max() - 1e-12

    def test_orthogonal_features_same_position_score_zero(self):
        enc = RotaryEncoder(dimension=12)
        x = np.zeros(12); x[0] = 1.0
        y = np.zeros(12); y[1] = 1.0
        pos = np.zeros((1, 3))
        s = score_matrix(enc, pos, x.reshape(1, -1), pos, y.reshape(1, -1))
        assert abs(s[0, 0]) < 1e-12

    def test_matches_direct_formula(self, rng):
        enc = RotaryEncoder(dimension=12)
        sp = rng.uniform(-3, 3, (5, 3))
        tp = rng.uniform(-3, 3, (7, 3))
        sf = rng.standard_normal((5, 12))
        tf = rng.standard_normal((7, 12))
        s = score_matrix(enc, sp, sf, tp, tf)
        for i in range(5):
            for j in range(7):
                expect = (enc.matrix(sp[i]) @ sf[i]) @ (enc.matrix(tp[j]) @ tf[j])
                expect /= np.sqrt(enc.dimension)
                assert s[i, j] == pytest.approx(expect, abs=1e-9)


class TestDualSoftmax:
    def test_single_element(self):
        assert dual_softmax(np.array([[3.7]]))[0, 0] == pytest.approx(1.0)

    def test_all_zero_two_by_two(self):
        c = dual_softmax(np.zeros((2, 2)))
        np.testing.assert_allclose(c, 0.25)

    def test_matches_brute_force(self, rng):
        s = rng.standard_normal((5, 7))
        c = dual_softmax(s)
        row = np.exp(s) / np.exp(s).sum(axis=1, keepdims=True)
        col = np.exp(s) / np.exp(s).sum(axis=0, keepdims=True)
        np.testing.assert_allclose(c, row * col, atol=1e-12)

    def test_row_softmax_sums_to_one_and_bounds(self, rng):
        s = rng.standard_normal((6, 9)) * 4
        c = dual_softmax(s)
        row = np.exp(s - s.max(axis=1, keepdims=True))
        row /= row.sum(axis=1, keepdims=True)
        col = np.exp(s - s.max(axis=0, keepdims=True))
        col /= col.sum(axis=0)
        np.testing.assert_allclose(row.sum(axis=1), 1.0, atol=1e-12)
        assert (c <= np.minimum(row, col) + 1e-15).all()
        assert (c > 0).all() and (c < 1).all()

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            dual_softmax(np.array([[np.inf, 0.0]]))


class TestExtractMatches:
    def test_threshold_above_max_gives_empty(self, rng):
        c = dual_softmax(rng.standard_normal((4, 4)))
        out = extract_matches(c, theta_c=float(c.max()) + 1e-6)
        assert len(out) == 0

    def test_uniform_two_by_two(self):
        c = dual_softmax(np.zeros((2, 2)))
        out = extract_matches(c, theta_c=0.2)
        assert len(out) == 4
        np.testing.assert_allclose(out.confidences, 0.25)

    def test_matches_scan_oracle(self, rng):
        c = dual_softmax(rng.standard_normal((8, 6)))
        theta = 0.05
        out = extract_matches(c, theta)
        expect = {(i, j) for i in range(8) for j in range(6) if c[i, j] >= theta}
        got = set(zip(out.source_indices.tolist(), out.target_indices.tolist()))
        assert got == expect

    def test_monotone_in_threshold(self, rng):
        c = dual_softmax(rng.standard_normal((10, 10)))
        lo = extract_matches(c, 0.02)
        hi = extract_matches(c, 0.08)
        lo_set = set(zip(lo.source_indices.tolist(), lo.target_indices.tolist()))
        hi_set = set(zip(hi.source_indices.tolist(), hi.target_indices.tolist()))
        assert hi_set <= lo_set


class TestOracleCorrespondences:
    def _pairs(self, rng, n=200, m=300):
        tgt_positions = rng.uniform(-50, 50, (m, 3))
        src = np.arange(n, dtype=np.int64)
        tgt = rng.choice(m, size=n, replace=False).astype(np.int64)
        return src, tgt, tgt_positions

    def test_zero_outliers_all_true(self, rng):
        src, tgt, pos = self._pairs(rng)
        out = oracle_correspondences(src, tgt, pos, 0.0, 0.0, seed=1)
        np.testing.assert_array_equal(out.target_indices, tgt)
        np.testing.assert_array_equal(out.confidences, 1.0)

    def test_half_outliers_exact_count(self, rng):
        src, tgt, pos = self._pairs(rng)
        out = oracle_correspondences(src, tgt, pos, 0.5, 0.0, seed=2)
        wrong = int((out.target_indices != tgt).sum())
        assert wrong == 100
        assert (out.confidences[out.target_indices != tgt] < 1.0).all()

    def test_fixed_seed_reproducible(self, rng):
        src, tgt, pos = self._pairs(rng)
        a = oracle_correspondences(src, tgt, pos, 0.3, 0.1, seed=7)
        b = oracle_correspondences(src, tgt, pos, 0.3, 0.1, seed=7)
        np.testing.assert_array_equal(a.target_indices, b.target_indices)
        np.testing.assert_array_equal(a.confidences, b.confidences)

    def test_min_wrong_distance_respected(self, rng):
        src, tgt, pos = self._pairs(rng)
        out = oracle_correspondences(
            src, tgt, pos, 0.25, 0.0, seed=3, min_wrong_distance=5.0
        )
        wrong = out.target_indices != tgt
        d = np.linalg.norm(pos[out.target_indices[wrong]] - pos[tgt[wrong]], axis=1)
        assert (d > 5.0).all()


class TestCorrespondenceSet:
    def test_validates_lengths_and_range(self):
        with pytest.raises(ValueError):
            CorrespondenceSet(np.array([0, 1]), np.array([0]), np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            CorrespondenceSet(np.array([0]), np.array([0]), np.array([1.5]))
