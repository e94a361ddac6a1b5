import numpy as np
import pytest

from partreg.errors import EmptyCloud, EmptyGroundTruth
from partreg.features import CorrespondenceSet
from partreg.geom import RigidTransform
from partreg.metrics import c2c_stats, inlier_ratio, nfmr


def pairs(src, tgt, conf=None):
    src = np.asarray(src, dtype=np.int64)
    conf = np.ones(src.size) if conf is None else conf
    return CorrespondenceSet(src, np.asarray(tgt, dtype=np.int64), conf)


class TestInlierRatio:
    def _setup(self, rng, n=100):
        src = rng.uniform(-10, 10, (n, 3))
        xf = RigidTransform(np.eye(3), [1.0, -2.0, 0.5])
        tgt = xf.apply(src)
        return src, tgt, xf

    def test_all_true_pairs_is_one(self, rng):
        src, tgt, xf = self._setup(rng)
        out = inlier_ratio(pairs(range(100), range(100)), src, None, tgt,
                           {}, tolerance=1e-9, default_transform=xf)
        assert out.ratio == 1.0 and not out.empty

    def test_forty_percent_wrong_beyond_tolerance(self, rng):
        src, tgt, xf = self._setup(rng)
        idx = np.arange(100)
        wrong = rng.choice(100, 40, replace=False)
        tgt2 = np.vstack([tgt, tgt[wrong] + 100.0])  # far decoys
        mapped = idx.copy()
        mapped[wrong] = 100 + np.arange(40)
        out = inlier_ratio(pairs(idx, mapped), src, None, tgt2,
                           {}, tolerance=0.5, default_transform=xf)
        assert out.ratio == pytest.approx(0.6)
        # brute-force check
        warped = xf.apply(src)
        d = np.linalg.norm(warped - tgt2[mapped], axis=1)
        assert out.correct == int((d <= 0.5).sum())

    def test_empty_prediction_flagged(self, rng):
        src, tgt, xf = self._setup(rng)
        out = inlier_ratio(CorrespondenceSet.empty(), src, None, tgt, {}, 1.0)
        assert out.ratio == 0.0 and out.empty

    def test_per_part_warp(self, rng):
        src = rng.uniform(-5, 5, (60, 3))
        ids = np.concatenate([np.zeros(30, np.int64), np.ones(30, np.int64)])
        xf0 = RigidTransform(np.eye(3), [2.0, 0.0, 0.0])
        xf1 = RigidTransform(np.eye(3), [0.0, 3.0, 0.0])
        tgt = np.vstack([xf0.apply(src[:30]), xf1.apply(src[30:])])
        out = inlier_ratio(pairs(range(60), range(60)), src, ids, tgt,
                           {0: xf0, 1: xf1}, tolerance=1e-9)
        assert out.ratio == 1.0

    def test_monotone_adding_correct_pair(self, rng):
        src, tgt, xf = self._setup(rng, n=20)
        base = inlier_ratio(pairs(range(10), range(10)), src, None, tgt, {},
                            1e-6, default_transform=xf)
        more = inlier_ratio(pairs(range(11), range(11)), src, None, tgt, {},
                            1e-6, default_transform=xf)
        assert more.ratio >= base.ratio


class TestNfmr:
    def _ground_truth(self, rng, n=50):
        tgt = rng.uniform(-10, 10, (n + 20, 3))
        gs = np.arange(n, dtype=np.int64)
        gt = rng.choice(n + 20, n, replace=False).astype(np.int64)
        return gs, gt, tgt

    def test_exact_prediction_is_one(self, rng):
        gs, gt, tgt = self._ground_truth(rng)
        out = nfmr(pairs(gs, gt), gs, gt, tgt, tolerance=1e-9)
        assert out.ratio == 1.0

    def test_empty_prediction_is_zero(self, rng):
        gs, gt, tgt = self._ground_truth(rng)
        out = nfmr(CorrespondenceSet.empty(), gs, gt, tgt, tolerance=1.0)
        assert out.ratio == 0.0

    def test_half_recovered(self, rng):
        gs, gt, tgt = self._ground_truth(rng)
        out = nfmr(pairs(gs[:25], gt[:25]), gs, gt, tgt, tolerance=1e-9)
        assert out.ratio == pytest.approx(0.5)
        assert out.recovered == 25 and out.total == 50

    def test_recovery_by_nearby_target(self, rng):
        # a predicted pair to a *different* target point within tolerance counts
        tgt = np.array([[0.0, 0, 0], [0.05, 0, 0], [10.0, 0, 0]])
        gs = np.array([0]); gt = np.array([0])
        out = nfmr(pairs([0], [1]), gs, gt, tgt, tolerance=0.1)
        assert out.ratio == 1.0
        out2 = nfmr(pairs([0], [2]), gs, gt, tgt, tolerance=0.1)
        assert out2.ratio == 0.0

    def test_wrong_pair_never_increases(self, rng):
        gs, gt, tgt = self._ground_truth(rng)
        base = nfmr(pairs(gs[:25], gt[:25]), gs, gt, tgt, 1e-9)
        # add a pair from a new source to a far target: recovery cannot rise
        far = nfmr(pairs(np.r_[gs[:25], gs[30]], np.r_[gt[:25], gt[0]]),
                   gs, gt, tgt, 1e-9)
        assert far.recovered <= base.recovered + 1
        assert far.ratio <= base.ratio + 1.0 / 50

    def test_empty_ground_truth_raises(self, rng):
        with pytest.raises(EmptyGroundTruth):
            nfmr(CorrespondenceSet.empty(), np.empty(0, np.int64),
                 np.empty(0, np.int64), rng.standard_normal((5, 3)), 1.0)


class TestC2cStats:
    def test_identical_clouds_zero(self, rng):
        pts = rng.uniform(-5, 5, (200, 3))
        out = c2c_stats(pts, pts, bin_width=0.1)
        assert out.mean == 0.0 and out.median == 0.0 and out.max == 0.0
        assert sum(out.histogram) == 200

    def test_uniform_shift_with_known_spacing(self):
        g = np.arange(0.0, 5.0, 1.0)
        xx, yy, zz = np.meshgrid(g, g, g, indexing="ij")
        pts = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)
        d = 0.3  # below half the min NN spacing (1.0)
        out = c2c_stats(pts + np.array([d, 0, 0]), pts, bin_width=0.05)
        assert out.mean == pytest.approx(d)
        assert out.median == pytest.approx(d)
        assert out.max == pytest.approx(d)

    def test_matches_linear_scan(self, rng):
        src = rng.uniform(-20, 20, (1000, 3))
        tgt = rng.uniform(-20, 20, (800, 3))
        out = c2c_stats(src, tgt, bin_width=0.5)
        d = np.linalg.norm(src[:, None] - tgt[None, :], axis=2).min(axis=1)
        assert out.mean == pytest.approx(d.mean())
        assert out.median == pytest.approx(np.median(d))
        assert out.max == pytest.approx(d.max())
        assert sum(out.histogram) == 1000

    def test_median_le_max_and_mean_nonnegative(self, rng):
        src = rng.uniform(-5, 5, (100, 3))
        tgt = rng.uniform(-5, 5, (100, 3))
        out = c2c_stats(src, tgt, bin_width=0.25)
        assert out.mean >= 0.0
        assert out.median <= out.max

    def test_per_part_breakdown(self, rng):
        src = rng.uniform(-5, 5, (40, 3))
        ids = np.concatenate([np.zeros(20, np.int64), np.ones(20, np.int64)])
        out = c2c_stats(src, src, bin_width=0.1, part_ids=ids)
        assert set(out.per_part) == {0, 1}
        assert out.per_part[0]["count"] == 20
        assert out.per_part[1]["max"] == 0.0

    def test_empty_source_rejected(self, rng):
        with pytest.raises(EmptyCloud):
            c2c_stats(np.zeros((0, 3)), rng.standard_normal((5, 3)), 0.1)
