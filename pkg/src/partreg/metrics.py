"""Evaluation metrics: inlier ratio, NFMR, and cloud-to-cloud distances."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from numpy.typing import NDArray

from .errors import EmptyCloud, EmptyGroundTruth
from .features import CorrespondenceSet
from .geom import NnIndex, RigidTransform


@dataclass(frozen=True)
class IrResult:
    """Fraction of predicted pairs that are correct under the true warp."""

    ratio: float
    correct: int
    total: int
    empty: bool

    def as_dict(self) -> dict:
        return {"ratio": self.ratio, "correct": self.correct, "total": self.total, "empty": self.empty}


@dataclass(frozen=True)
class NfmrResult:
    """Fraction of ground-truth matches the predictor recovered."""

    ratio: float
    recovered: int
    total: int

    def as_dict(self) -> dict:
        return {"ratio": self.ratio, "recovered": self.recovered, "total": self.total}


@dataclass(frozen=True)
class C2cStats:
    """Per-point NN distance summary from transformed source into target."""

    mean: float
    median: float
    max: float
    bin_width: float
    histogram: tuple[int, ...]
    per_part: dict[int, dict[str, float]]

    def as_dict(self) -> dict:
        return {
            "mean": self.mean,
            "median": self.median,
            "max": self.max,
            "bin_width": self.bin_width,
            "histogram": list(self.histogram),
            "per_part": {str(k): dict(v) for k, v in sorted(self.per_part.items())},
        }


@dataclass(frozen=True)
class MetricsBundle:
    inlier_ratio: IrResult
    nfmr: NfmrResult
    c2c: C2cStats
    tolerance: float

    def as_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "inlier_ratio": self.inlier_ratio.as_dict(),
            "nfmr": self.nfmr.as_dict(),
            "c2c": self.c2c.as_dict(),
        }


def inlier_ratio(
    predicted: CorrespondenceSet,
    src_positions: NDArray[np.float64],
    src_part_ids: NDArray[np.int64] | None,
    tgt_positions: NDArray[np.float64],
    part_transforms: Mapping[int, RigidTransform],
    tolerance: float,
    default_transform: RigidTransform | None = None,
) -> IrResult:
    """A pair (i, j) is correct iff ||warp(src_i) - tgt_j|| <= tolerance under
    the ground-truth per-part warp. An empty prediction reports ratio 0 with
    the empty flag set."""
    if not tolerance >= 0.0:
        raise ValueError("tolerance must be >= 0")
    n = len(predicted)
    if n == 0:
        return IrResult(ratio=0.0, correct=0, total=0, empty=True)
    src = np.asarray(src_positions, dtype=np.float64)[predicted.source_indices]
    tgt = np.asarray(tgt_positions, dtype=np.float64)[predicted.target_indices]
    warped = np.empty_like(src)
    if src_part_ids is None:
        xf = default_transform or RigidTransform.identity()
        warped = xf.apply(src)
    else:
        ids = np.asarray(src_part_ids)[predicted.source_indices]
        fallback = default_transform or RigidTransform.identity()
        for pid in np.unique(ids).tolist():
            xf = part_transforms.get(int(pid), fallback)
            mask = ids == pid
            warped[mask] = xf.apply(src[mask])
    correct = int((np.linalg.norm(warped - tgt, axis=1) <= tolerance).sum())
    return IrResult(ratio=correct / n, correct=correct, total=n, empty=False)


def nfmr(
    predicted: CorrespondenceSet,
    gt_sources: NDArray[np.int64],
    gt_targets: NDArray[np.int64],
    tgt_positions: NDArray[np.float64],
    tolerance: float,
) -> NfmrResult:
    """A ground-truth match (i, j*) counts as recovered iff some predicted
    pair from source i lands within tolerance of the true target position."""
    gs = np.asarray(gt_sources, dtype=np.int64).reshape(-1)
    gt = np.asarray(gt_targets, dtype=np.int64).reshape(-1)
    if gs.size == 0:
        raise EmptyGroundTruth("nfmr requires a non-empty ground-truth match set")
    tpos = np.asarray(tgt_positions, dtype=np.float64)
    true_pos = {int(s): tpos[t] for s, t in zip(gs.tolist(), gt.tolist())}
    recovered_sources: set[int] = set()
    for s, j in zip(predicted.source_indices.tolist(), predicted.target_indices.tolist()):
        tp = true_pos.get(int(s))
        if tp is None or int(s) in recovered_sources:
            continue
        if np.linalg.norm(tpos[j] - tp) <= tolerance:
            recovered_sources.add(int(s))
    total = len(true_pos)
    recovered = len(recovered_sources)
    return NfmrResult(ratio=recovered / total, recovered=recovered, total=total)


def c2c_stats(
    src_positions: NDArray[np.float64],
    tgt_positions: NDArray[np.float64],
    bin_width: float,
    part_ids: NDArray[np.int64] | None = None,
) -> C2cStats:
    """Exact nearest-neighbor distance from each (transformed) source point
    into the target, with a fixed-bin-width histogram whose counts sum to the
    source point count."""
    src = np.asarray(src_positions, dtype=np.float64)
    if src.shape[0] == 0:
        raise EmptyCloud("c2c_stats requires a non-empty source")
    if not bin_width > 0.0:
        raise ValueError("bin_width must be > 0")
    index = NnIndex(tgt_positions)
    d, _ = index.nearest_many(src)

    d_max = float(d.max())
    n_bins = max(1, int(np.ceil(d_max / bin_width)) if d_max > 0 else 1)
    edges = np.arange(n_bins + 1, dtype=np.float64) * bin_width
    if edges[-1] < d_max:
        edges[-1] = d_max  # guard against float rounding at the top edge
    counts, _ = np.histogram(d, bins=edges)

    per_part: dict[int, dict[str, float]] = {}
    if part_ids is not None:
        ids = np.asarray(part_ids)
        for pid in np.unique(ids).tolist():
            dp = d[ids == pid]
            per_part[int(pid)] = {
                "mean": float(dp.mean()),
                "median": float(np.median(dp)),
                "max": float(dp.max()),
                "count": int(dp.size),
            }
    return C2cStats(
        mean=float(d.mean()),
        median=float(np.median(d)),
        max=d_max,
        bin_width=float(bin_width),
        histogram=tuple(int(c) for c in counts),
        per_part=per_part,
    )
