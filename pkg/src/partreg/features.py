"""Correspondence front-end without any learned weights.

Descriptor route: uniform subsampling, kernel-point descriptors with frozen
seeded weights, rotary 3D positional encoding, position-aware scores,
dual-softmax confidences, thresholded match extraction.

Oracle route: emits correspondences straight from a scenario's ground truth
with a controllable wrong-pair fraction; the stand-in for a trained matcher
when exercising the registration pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import DimensionMismatch, EmptyResult
from .geom import NnIndex, PointCloud, as_points


@dataclass(frozen=True)
class CorrespondenceSet:
    """(source index, target index, confidence) triples over two clouds."""

    source_indices: NDArray[np.int64]
    target_indices: NDArray[np.int64]
    confidences: NDArray[np.float64]

    def __post_init__(self):
        si = np.asarray(self.source_indices, dtype=np.int64).reshape(-1)
        ti = np.asarray(self.target_indices, dtype=np.int64).reshape(-1)
        c = np.asarray(self.confidences, dtype=np.float64).reshape(-1)
        if not (si.size == ti.size == c.size):
            raise ValueError("correspondence arrays must have equal length")
        if c.size and (c.min() < 0.0 or c.max() > 1.0):
            raise ValueError("confidences must lie in [0, 1]")
        for name, a in (("source_indices", si), ("target_indices", ti), ("confidences", c)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def __len__(self) -> int:
        return int(self.source_indices.size)

    def subset(self, mask_or_indices) -> "CorrespondenceSet":
        sel = np.asarray(mask_or_indices)
        return CorrespondenceSet(
            self.source_indices[sel], self.target_indices[sel], self.confidences[sel]
        )

    @staticmethod
    def empty() -> "CorrespondenceSet":
        return CorrespondenceSet(
            np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.float64)
        )


def subsample(
    cloud: PointCloud, retention: float, seed: int
) -> tuple[PointCloud, NDArray[np.int64]]:
    """Seeded uniform subsample without replacement.

    Keeps round(retention * n) points, returned in ascending original order;
    the second value maps subsampled index -> original index.
    """
    if not 0.0 < retention <= 1.0:
        raise ValueError(f"retention must be in (0, 1], got {retention!r}")
    n = len(cloud)
    kept = int(np.floor(retention * n + 0.5))
    if kept == 0:
        raise EmptyResult(f"retention {retention} of {n} points keeps nothing")
    if kept == n:
        idx = np.arange(n, dtype=np.int64)
    else:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(n, size=kept, replace=False)).astype(np.int64)
    return cloud.select(idx), idx


def fibonacci_sphere(count: int) -> NDArray[np.float64]:
    """Near-uniform unit directions (golden-angle spiral)."""
    i = np.arange(count, dtype=np.float64)
    z = 1.0 - 2.0 * (i + 0.5) / count
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


@dataclass(frozen=True)
class KernelConfig:
    """Fixed kernel-point geometry plus a frozen seeded weight matrix.

    kernel_points live inside the radius-r ball; sigma is the linear
    correlation width; weight_matrix maps the K accumulated correlations to a
    D-dimensional descriptor.
    """

    radius: float
    sigma: float
    kernel_points: NDArray[np.float64]
    weight_matrix: NDArray[np.float64]
    seed: int

    def __post_init__(self):
        kp = as_points(self.kernel_points)
        if np.linalg.norm(kp, axis=1).max() > self.radius + 1e-12:
            raise ValueError("kernel points must lie inside the radius ball")
        if not self.sigma > 0.0:
            raise ValueError("sigma must be > 0")
        w = np.asarray(self.weight_matrix, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != kp.shape[0] or w.shape[1] < 1:
            raise ValueError(f"weight_matrix must be (K, D>=1), got {w.shape}")
        object.__setattr__(self, "kernel_points", kp)
        object.__setattr__(self, "weight_matrix", w)

    @property
    def num_kernels(self) -> int:
        return int(self.kernel_points.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.weight_matrix.shape[1])

    @staticmethod
    def default(radius: float, dimension: int = 48, num_kernels: int = 15, seed: int = 7) -> "KernelConfig":
        """One kernel point at the origin plus a Fibonacci shell at 0.66r;
        sigma = r/3; weights drawn once from the seed and frozen."""
        shell = fibonacci_sphere(num_kernels - 1) * (0.66 * radius)
        kp = np.vstack([np.zeros((1, 3)), shell])
        rng = np.random.default_rng(seed)
        w = rng.standard_normal((num_kernels, dimension)) / np.sqrt(num_kernels)
        return KernelConfig(
            radius=float(radius), sigma=float(radius) / 3.0,
            kernel_points=kp, weight_matrix=w, seed=seed,
        )


def kernel_descriptor(cloud: PointCloud, cfg: KernelConfig) -> NDArray[np.float64]:
    """Per-point descriptors from kernel-point correlations.

    For each point x, every neighbor within cfg.radius (the point itself
    excluded) contributes max(0, 1 - |y - kernel_k| / sigma) to accumulator
    a_k (y = neighbor - x); the descriptor is a @ weight_matrix normalized to
    unit length, or the zero vector when the neighborhood is empty. Depends
    only on relative offsets, hence translation-invariant.
    """
    pts = cloud.positions
    n = pts.shape[0]
    out = np.zeros((n, cfg.dimension))
    if n == 0:
        return out
    index = NnIndex(pts)
    neighborhoods = index.pairs_within(pts, cfg.radius)
    kp = cfg.kernel_points
    for i, neigh in enumerate(neighborhoods):
        neigh = [j for j in neigh if j != i]
        if not neigh:
            continue
        y = pts[neigh] - pts[i]                         # (M, 3) relative offsets
        d = np.linalg.norm(y[:, None, :] - kp[None, :, :], axis=2)  # (M, K)
        a = np.maximum(0.0, 1.0 - d / cfg.sigma).sum(axis=0)        # (K,)
        f = a @ cfg.weight_matrix
        norm = np.linalg.norm(f)
        if norm > 0.0:
            out[i] = f / norm
    return out


@dataclass(frozen=True)
class RotaryEncoder:
    """Orthogonal position-dependent feature rotation for 3D coordinates.

    The D-dimensional feature splits into D/6 two-dimensional blocks per axis;
    block j of axis a rotates by angle p_a * scale * base^(-6j/D). The induced
    map Theta(p) satisfies Theta(p)^T Theta(q) = Theta(q - p), so scores built
    on encoded features see relative positions only.
    """

    dimension: int
    base: float = 10000.0
    position_scale: float = 1.0
    frequencies: NDArray[np.float64] = field(init=False, repr=False)

    def __post_init__(self):
        if self.dimension < 6 or self.dimension % 6 != 0:
            raise DimensionMismatch(
                f"rotary dimension must be a positive multiple of 6, got {self.dimension}"
            )
        j = np.arange(self.dimension // 6, dtype=np.float64)
        freq = self.base ** (-6.0 * j / self.dimension)
        freq.setflags(write=False)
        object.__setattr__(self, "frequencies", freq)

    def _angles(self, positions: NDArray[np.float64]) -> NDArray[np.float64]:
        """(N, D/2) rotation angles, axis-major: x blocks, then y, then z."""
        p = np.asarray(positions, dtype=np.float64).reshape(-1, 3) * self.position_scale
        return np.concatenate([p[:, a : a + 1] * self.frequencies[None, :] for a in range(3)], axis=1)

    def encode(self, positions, features) -> NDArray[np.float64]:
        """Apply Theta(position) to each feature row; norms are preserved."""
        feats = np.asarray(features, dtype=np.float64)
        single = feats.ndim == 1
        if single:
            if feats.shape[0] != self.dimension:
                raise DimensionMismatch(
                    f"feature dimension {feats.shape[0]} != encoder dimension {self.dimension}"
                )
            feats = feats.reshape(1, self.dimension)
        if feats.shape[1] != self.dimension:
            raise DimensionMismatch(
                f"feature dimension {feats.shape[1]} != encoder dimension {self.dimension}"
            )
        ang = self._angles(positions)
        if ang.shape[0] != feats.shape[0]:
            if ang.shape[0] == 1:
                ang = np.broadcast_to(ang, (feats.shape[0], ang.shape[1]))
            else:
                raise DimensionMismatch("positions and features row counts differ")
        cos, sin = np.cos(ang), np.sin(ang)
        even, odd = feats[:, 0::2], feats[:, 1::2]
        out = np.empty_like(feats)
        out[:, 0::2] = even * cos - odd * sin
        out[:, 1::2] = even * sin + odd * cos
        return out[0] if single else out

    def matrix(self, position) -> NDArray[np.float64]:
        """Dense Theta(position); test/diagnostic helper."""
        ang = self._angles(np.asarray(position, dtype=np.float64).reshape(1, 3))[0]
        m = np.zeros((self.dimension, self.dimension))
        for b, theta in enumerate(ang):
            c, s = np.cos(theta), np.sin(theta)
            i = 2 * b
            m[i, i], m[i, i + 1] = c, -s
            m[i + 1, i], m[i + 1, i + 1] = s, c
        return m


def rotary_encode(enc: RotaryEncoder, position, feature) -> NDArray[np.float64]:
    """Theta(position) @ feature for a single point."""
    return enc.encode(np.asarray(position, dtype=np.float64).reshape(1, 3), feature)


def score_matrix(
    enc: RotaryEncoder,
    src_positions,
    src_features,
    tgt_positions,
    tgt_features,
) -> NDArray[np.float64]:
    """S(i, j) = <Theta(src_i) x_i, Theta(tgt_j) x_j> / sqrt(D)."""
    a = enc.encode(src_positions, src_features)
    b = enc.encode(tgt_positions, tgt_features)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch("source and target feature dimensions differ")
    return (a @ b.T) / np.sqrt(enc.dimension)


def dual_softmax(scores: NDArray[np.float64]) -> NDArray[np.float64]:
    """C(i, j) = softmax over row i at j * softmax over column j at i."""
    s = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise ValueError("score matrix contains non-finite entries")
    row = s - s.max(axis=1, keepdims=True)
    np.exp(row, out=row)
    row /= row.sum(axis=1, keepdims=True)
    col = s - s.max(axis=0, keepdims=True)
    np.exp(col, out=col)
    col /= col.sum(axis=0, keepdims=True)
    return row * col


def extract_matches(confidence: NDArray[np.float64], theta_c: float) -> CorrespondenceSet:
    """All (i, j) with confidence >= theta_c, row-major order."""
    if not 0.0 < theta_c < 1.0:
        raise ValueError(f"theta_c must be in (0, 1), got {theta_c!r}")
    c = np.asarray(confidence, dtype=np.float64)
    ii, jj = np.nonzero(c >= theta_c)
    return CorrespondenceSet(ii.astype(np.int64), jj.astype(np.int64), c[ii, jj])


def descriptor_correspondences(
    src: PointCloud,
    tgt: PointCloud,
    theta_c: float,
    kernel_radius: float | None = None,
    dimension: int = 48,
    seed: int = 7,
) -> CorrespondenceSet:
    """Full descriptor route: kernel descriptors -> rotary scores -> dual
    softmax -> threshold. The kernel radius defaults to 5% of the joint
    diagonal, floored at 2.5x the source's median NN spacing so neighborhoods
    are never empty on sparse clouds; positions are normalized by the joint
    diagonal before encoding."""
    from .geom import aabb_of  # local import to avoid cycle at module load
    from .partgraph import median_nn_spacing

    box = aabb_of(src.positions).union(aabb_of(tgt.positions))
    diag = max(box.diagonal, 1e-12)
    if kernel_radius is not None:
        radius = kernel_radius
    else:
        radius = max(0.05 * diag, 2.5 * median_nn_spacing(src))
    cfg = KernelConfig.default(radius=radius, dimension=dimension, seed=seed)
    enc = RotaryEncoder(dimension=dimension, position_scale=1.0 / diag)
    sf = kernel_descriptor(src, cfg)
    tf = kernel_descriptor(tgt, cfg)
    scores = score_matrix(enc, src.positions, sf, tgt.positions, tf)
    return extract_matches(dual_softmax(scores), theta_c)


def oracle_correspondences(
    pair_sources: NDArray[np.int64],
    pair_targets: NDArray[np.int64],
    tgt_positions: NDArray[np.float64],
    outlier_fraction: float,
    noise_sigma: float,
    seed: int,
    theta_c: float = 0.05,
    max_pairs: int | None = None,
    min_wrong_distance: float | None = None,
) -> CorrespondenceSet:
    """Ground-truth-backed matcher stand-in.

    Emits (1 - outlier_fraction) true pairs at confidence 1.0 and replaces the
    rest with uniformly random wrong targets at confidence in [theta_c, 1).
    noise_sigma > 0 snaps each true pair to the target point nearest the
    jittered true position. min_wrong_distance, when set, rejection-samples
    wrong targets until they land at least that far from the true target.
    Deterministic under the seed.
    """
    if not 0.0 <= outlier_fraction <= 1.0:
        raise ValueError("outlier_fraction must be in [0, 1]")
    src = np.asarray(pair_sources, dtype=np.int64).reshape(-1)
    tgt = np.asarray(pair_targets, dtype=np.int64).reshape(-1)
    if src.size != tgt.size:
        raise ValueError("pair arrays must have equal length")
    tpos = as_points(tgt_positions) if len(tgt_positions) else np.zeros((0, 3))
    rng = np.random.default_rng(seed)

    n = src.size
    if max_pairs is not None and max_pairs < n:
        sel = np.sort(rng.choice(n, size=max_pairs, replace=False))
        src, tgt = src[sel], tgt[sel]
        n = max_pairs

    out_tgt = tgt.copy()
    conf = np.ones(n, dtype=np.float64)

    if noise_sigma > 0.0 and n > 0:
        index = NnIndex(tpos)
        jittered = tpos[tgt] + rng.normal(scale=noise_sigma, size=(n, 3))
        _, snapped = index.nearest_many(jittered)
        out_tgt = snapped.astype(np.int64)

    n_wrong = int(np.floor(outlier_fraction * n + 0.5))
    if n_wrong > 0:
        wrong_at = rng.choice(n, size=n_wrong, replace=False)
        m = tpos.shape[0]
        for k in wrong_at.tolist():
            true_j = int(tgt[k])
            for _ in range(1000):
                j = int(rng.integers(m))
                if j == true_j:
                    continue
                if min_wrong_distance is not None:
                    if np.linalg.norm(tpos[j] - tpos[true_j]) <= min_wrong_distance:
                        continue
                break
            out_tgt[k] = j
            conf[k] = rng.uniform(theta_c, 1.0)

    return CorrespondenceSet(src, out_tgt, conf)
