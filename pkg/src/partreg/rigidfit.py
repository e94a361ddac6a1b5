"""Pose estimation core: soft-Procrustes, RANSAC with anchors, point ICP."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import (
    DegenerateGeometry,
    NoConsensus,
    NoPairsWithinDistance,
    TooFewCorrespondences,
)
from .features import CorrespondenceSet
from .geom import NnIndex, RigidTransform


@dataclass(frozen=True)
class ProcrustesInput:
    """Correspondences plus the positions they index into.

    top_n limits the fit to the highest-confidence pairs (ties broken by
    pair order, so results are deterministic).
    """

    correspondences: CorrespondenceSet
    source_positions: NDArray[np.float64]
    target_positions: NDArray[np.float64]
    top_n: int = 256

    def __post_init__(self):
        if self.top_n < 3:
            raise ValueError("top_n must be >= 3")
        if len(self.correspondences) and self.correspondences.confidences.min() < 0.0:
            raise ValueError("confidences must be non-negative")


@dataclass(frozen=True)
class AnchorPairs:
    """Fixed correspondences (junction points) with a consensus/refit weight."""

    source: NDArray[np.float64]
    target: NDArray[np.float64]
    weight: float = 3.0

    def __post_init__(self):
        s = np.asarray(self.source, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.target, dtype=np.float64).reshape(-1, 3)
        if s.shape != t.shape:
            raise ValueError("anchor source/target shapes differ")
        object.__setattr__(self, "source", s)
        object.__setattr__(self, "target", t)

    def __len__(self) -> int:
        return int(self.source.shape[0])

    @staticmethod
    def empty() -> "AnchorPairs":
        return AnchorPairs(np.zeros((0, 3)), np.zeros((0, 3)))


@dataclass(frozen=True)
class RansacConfig:
    max_iterations: int = 256
    sample_size: int = 3
    inlier_distance: float = 1.0
    min_correspondences: int = 5
    seed: int = 0
    anchors: AnchorPairs = field(default_factory=AnchorPairs.empty)

    def __post_init__(self):
        if self.sample_size < 3:
            raise ValueError("sample_size must be >= 3")
        if not self.inlier_distance > 0.0:
            raise ValueError("inlier_distance must be > 0")
        if self.min_correspondences < self.sample_size:
            raise ValueError("min_correspondences must be >= sample_size")


@dataclass(frozen=True)
class IcpConfig:
    max_correspondence_distance: float
    max_iterations: int = 50
    convergence_epsilon: float = 1e-7
    initial: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        if not self.max_correspondence_distance > 0.0:
            raise ValueError("max_correspondence_distance must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class FitResult:
    """Transform plus the diagnostics the accept/retry loop judges."""

    transform: RigidTransform
    inlier_count: int
    fitness: float
    rmse: float
    rmse_history: tuple[float, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.fitness <= 1.0:
            raise ValueError("fitness must be in [0, 1]")
        if self.rmse < 0.0:
            raise ValueError("rmse must be >= 0")


def _weighted_rigid_fit(
    src: NDArray[np.float64],
    tgt: NDArray[np.float64],
    weights: NDArray[np.float64],
) -> RigidTransform:
    """Closed-form weighted least-squares rigid fit src -> tgt.

    H = sum w_i (s_i - s_bar)(t_i - t_bar)^T with normalized weights;
    R = V diag(1, 1, det(VU^T)) U^T from H = U S V^T; t = t_bar - R s_bar.
    The det correction keeps R in SO(3) even for mirrored inputs.
    """
    w = weights / weights.sum()
    s_bar = w @ src
    t_bar = w @ tgt
    s_c = src - s_bar
    t_c = tgt - t_bar
    h = (s_c * w[:, None]).T @ t_c
    u, sing, vt = np.linalg.svd(h)
    if sing[0] <= 0.0 or sing[1] < 1e-12 * sing[0]:
        raise DegenerateGeometry(
            f"correspondence geometry is rank-deficient (singular values {sing})"
        )
    v = vt.T
    d = np.sign(np.linalg.det(v @ u.T))
    r = v @ np.diag([1.0, 1.0, d]) @ u.T
    t = t_bar - r @ s_bar
    return RigidTransform.from_noisy(r, t)


def soft_procrustes(inp: ProcrustesInput) -> RigidTransform:
    """Confidence-weighted rigid fit over the top_n highest-confidence pairs."""
    corr = inp.correspondences
    if len(corr) < 3:
        raise TooFewCorrespondences(
            f"soft_procrustes needs >= 3 correspondences, got {len(corr)}"
        )
    if len(corr) > inp.top_n:
        # Stable selection: sort by (-confidence, pair order), keep top_n.
        order = np.lexsort((np.arange(len(corr)), -corr.confidences))
        corr = corr.subset(np.sort(order[: inp.top_n]))
    src = np.asarray(inp.source_positions, dtype=np.float64)[corr.source_indices]
    tgt = np.asarray(inp.target_positions, dtype=np.float64)[corr.target_indices]
    weights = corr.confidences.astype(np.float64)
    if weights.sum() <= 0.0:
        weights = np.ones(len(corr))
    return _weighted_rigid_fit(src, tgt, weights)


def fit_pairs(src: NDArray[np.float64], tgt: NDArray[np.float64],
              weights: NDArray[np.float64] | None = None) -> RigidTransform:
    """Rigid fit on explicit point pairs (uniform weights by default)."""
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    tgt = np.asarray(tgt, dtype=np.float64).reshape(-1, 3)
    if src.shape[0] < 3:
        raise TooFewCorrespondences("fit_pairs needs >= 3 pairs")
    w = np.ones(src.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    return _weighted_rigid_fit(src, tgt, w)


def _pair_rmse(xf: RigidTransform, src, tgt) -> float:
    d = np.linalg.norm(xf.apply(src) - tgt, axis=1)
    return float(np.sqrt(np.mean(d * d))) if d.size else 0.0


def ransac_fit(
    src_positions: NDArray[np.float64],
    tgt_positions: NDArray[np.float64],
    correspondences: CorrespondenceSet,
    cfg: RansacConfig,
) -> FitResult:
    """Hypothesize-and-verify rigid fit over putative correspondences.

    Each iteration fits a minimal sample and scores consensus as the inlier
    count plus `anchor weight` per anchor that stays within inlier_distance;
    anchors also join the final refit at that weight. Ties keep the earlier
    iteration, so a fixed seed reproduces the result exactly.
    """
    anchors = cfg.anchors
    n = len(correspondences)
    if n + len(anchors) < cfg.min_correspondences:
        raise TooFewCorrespondences(
            f"{n} correspondences + {len(anchors)} anchors < minimum {cfg.min_correspondences}"
        )
    if n < cfg.sample_size:
        raise TooFewCorrespondences(
            f"{n} correspondences < sample size {cfg.sample_size}"
        )

    src_all = np.asarray(src_positions, dtype=np.float64)[correspondences.source_indices]
    tgt_all = np.asarray(tgt_positions, dtype=np.float64)[correspondences.target_indices]
    conf = correspondences.confidences

    rng = np.random.default_rng(cfg.seed)
    best_score = -1.0
    best_mask: NDArray[np.bool_] | None = None

    for _ in range(cfg.max_iterations):
        pick = rng.choice(n, size=cfg.sample_size, replace=False)
        try:
            cand = _weighted_rigid_fit(src_all[pick], tgt_all[pick], conf[pick] + 1e-12)
        except DegenerateGeometry:
            continue
        d = np.linalg.norm(cand.apply(src_all) - tgt_all, axis=1)
        mask = d <= cfg.inlier_distance
        score = float(mask.sum())
        if len(anchors):
            ad = np.linalg.norm(cand.apply(anchors.source) - anchors.target, axis=1)
            score += anchors.weight * float((ad <= cfg.inlier_distance).sum())
        if score > best_score:
            best_score = score
            best_mask = mask

    if best_mask is None or int(best_mask.sum()) + len(anchors) < cfg.min_correspondences:
        raise NoConsensus(
            f"best consensus {0 if best_mask is None else int(best_mask.sum())} "
            f"inliers below minimum {cfg.min_correspondences}"
        )

    # Final refit over all inliers, anchors weighted relative to a normal pair.
    in_src = src_all[best_mask]
    in_tgt = tgt_all[best_mask]
    in_w = conf[best_mask].copy()
    if in_w.sum() <= 0.0:
        in_w = np.ones(in_w.shape[0])
    if len(anchors):
        anchor_w = anchors.weight * float(np.mean(in_w)) * np.ones(len(anchors))
        in_src = np.vstack([in_src, anchors.source])
        in_tgt = np.vstack([in_tgt, anchors.target])
        in_w = np.concatenate([in_w, anchor_w])
    final = _weighted_rigid_fit(in_src, in_tgt, in_w)

    inlier_count = int(best_mask.sum())
    return FitResult(
        transform=final,
        inlier_count=inlier_count,
        fitness=inlier_count / n,
        rmse=_pair_rmse(final, src_all[best_mask], tgt_all[best_mask]),
    )


def icp_fit(
    src_positions: NDArray[np.float64],
    target_index: NnIndex,
    cfg: IcpConfig,
) -> FitResult:
    """Point-to-point ICP returning the cumulative transform (initial included).

    Per iteration: pair each moved source point with its target NN, drop pairs
    beyond max_correspondence_distance, refit, and record the post-refit RMSE
    over that iteration's pairs. Stops when that RMSE improves by less than
    convergence_epsilon, or at the first iteration whose RMSE would rise
    (the refit is then discarded): with a distance cutoff the pair set churns
    near the noise floor and iterating further only random-walks the pose, so
    the recorded history is non-increasing by construction.
    """
    src = np.asarray(src_positions, dtype=np.float64).reshape(-1, 3)
    if src.shape[0] == 0 or len(target_index) == 0:
        raise NoPairsWithinDistance("icp_fit requires non-empty clouds")

    xf = cfg.initial
    d_max = cfg.max_correspondence_distance
    history: list[float] = []
    prev_rmse = np.inf
    paired_fraction = 0.0
    inliers = 0

    for _ in range(cfg.max_iterations):
        moved = xf.apply(src)
        dist, nn = target_index.nearest_many(moved)
        keep = dist <= d_max
        if not keep.any():
            if not history:
                raise NoPairsWithinDistance(
                    f"no source point has a target neighbor within {d_max}"
                )
            break
        pairs_src = moved[keep]
        pairs_tgt = target_index.points[nn[keep]]
        try:
            delta = fit_pairs(pairs_src, pairs_tgt)
        except (TooFewCorrespondences, DegenerateGeometry):
            break
        rmse = _pair_rmse(delta, pairs_src, pairs_tgt)
        if rmse > prev_rmse + 1e-12:
            break  # no improvement: keep the previous accepted pose
        xf = delta.compose(xf)
        history.append(rmse)
        inliers = int(keep.sum())
        paired_fraction = inliers / src.shape[0]
        if prev_rmse - rmse < cfg.convergence_epsilon:
            break
        prev_rmse = rmse

    return FitResult(
        transform=xf,
        inlier_count=inliers,
        fitness=paired_fraction,
        rmse=history[-1] if history else 0.0,
        rmse_history=tuple(history),
    )
