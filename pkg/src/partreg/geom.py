"""Foundational geometry: point clouds, SE(3) transforms, AABBs, NN index.

All positions are float64 arrays in model units. Values are immutable after
construction (arrays are marked read-only) so they can be shared freely
between pipeline stages and concurrent readers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TypeAlias

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from .errors import (
    EmptyCloud,
    EmptySelection,
    InvalidRotation,
    NonPositiveFactor,
)

F64: TypeAlias = np.float64
Vec3: TypeAlias = NDArray[F64]    # shape (3,)
Mat3: TypeAlias = NDArray[F64]    # shape (3, 3)
Points: TypeAlias = NDArray[F64]  # shape (N, 3)

ROTATION_TOL = 1e-9


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def as_points(x) -> Points:
    """Coerce to a read-only (N, 3) float64 array, rejecting non-finite values."""
    p = np.ascontiguousarray(x, dtype=np.float64)
    if p.ndim == 1 and p.size == 3:
        p = p.reshape(1, 3)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError(f"expected (N, 3) points, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("points contain non-finite coordinates")
    return p


def as_vec3(x) -> Vec3:
    v = np.asarray(x, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains non-finite components")
    return v


@dataclass(frozen=True)
class PointCloud:
    """Ordered 3D points with optional per-point part labels and features.

    part_ids, when present, has one integer label per point; features, when
    present, is an (N, D) float64 array with a uniform dimension D >= 1.
    """

    positions: Points
    part_ids: NDArray[np.int64] | None = None
    features: NDArray[F64] | None = None

    def __post_init__(self):
        pos = _freeze(as_points(self.positions).copy())
        object.__setattr__(self, "positions", pos)
        if self.part_ids is not None:
            ids = np.asarray(self.part_ids, dtype=np.int64).reshape(-1)
            if ids.shape[0] != pos.shape[0]:
                raise ValueError(
                    f"part_ids length {ids.shape[0]} != point count {pos.shape[0]}"
                )
            object.__setattr__(self, "part_ids", _freeze(ids.copy()))
        if self.features is not None:
            feats = np.ascontiguousarray(self.features, dtype=np.float64)
            if feats.ndim != 2 or feats.shape[0] != pos.shape[0] or feats.shape[1] < 1:
                raise ValueError(
                    f"features must be ({pos.shape[0]}, D>=1), got {feats.shape}"
                )
            object.__setattr__(self, "features", _freeze(feats.copy()))

    def __len__(self) -> int:
        return self.positions.shape[0]

    def with_positions(self, positions: Points) -> "PointCloud":
        """Same metadata, new coordinates (must keep the point count)."""
        pos = as_points(positions)
        if pos.shape[0] != len(self):
            raise ValueError("with_positions must preserve the point count")
        return PointCloud(pos, self.part_ids, self.features)

    def select(self, indices) -> "PointCloud":
        idx = np.asarray(indices, dtype=np.int64).reshape(-1)
        return PointCloud(
            self.positions[idx],
            None if self.part_ids is None else self.part_ids[idx],
            None if self.features is None else self.features[idx],
        )


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) element: p -> rotation @ p + translation.

    Construction validates orthonormality and det=+1 to ROTATION_TOL; use
    from_noisy() to project an almost-rotation back onto SO(3) first.
    """

    rotation: Mat3
    translation: Vec3

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = as_vec3(self.translation)
        err = np.abs(r.T @ r - np.eye(3)).max()
        if err > ROTATION_TOL:
            raise InvalidRotation(f"R^T R deviates from I by {err:.3e}")
        det = float(np.linalg.det(r))
        if abs(det - 1.0) > ROTATION_TOL:
            raise InvalidRotation(f"det(R) = {det!r}, expected +1")
        object.__setattr__(self, "rotation", _freeze(r.copy()))
        object.__setattr__(self, "translation", _freeze(t.copy()))

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_noisy(rotation, translation) -> "RigidTransform":
        """Project a numerically noisy rotation onto SO(3) via SVD."""
        r = np.asarray(rotation, dtype=np.float64).reshape(3, 3)
        u, _, vt = np.linalg.svd(r)
        d = np.sign(np.linalg.det(u @ vt))
        r_proj = u @ np.diag([1.0, 1.0, d]) @ vt
        return RigidTransform(r_proj, translation)

    @staticmethod
    def from_matrix4(m) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64).reshape(4, 4)
        return RigidTransform(m[:3, :3], m[:3, 3])

    def matrix4(self) -> NDArray[F64]:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: Points) -> Points:
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            return self.rotation @ pts + self.translation
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return self after other: (self.compose(other))(p) == self(other(p))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -(rt @ self.translation))

    def is_identity(self, tol: float = 0.0) -> bool:
        return (
            np.abs(self.rotation - np.eye(3)).max() <= tol
            and np.abs(self.translation).max() <= tol
        )


def rotation_about_axis(axis, angle_rad: float, center=None) -> RigidTransform:
    """Rotation by angle_rad about a line through `center` along `axis` (Rodrigues)."""
    u = as_vec3(axis)
    n = np.linalg.norm(u)
    if n == 0.0:
        raise ValueError("axis must be nonzero")
    u = u / n
    k = np.array(
        [[0.0, -u[2], u[1]], [u[2], 0.0, -u[0]], [-u[1], u[0], 0.0]]
    )
    r = np.eye(3) + np.sin(angle_rad) * k + (1.0 - np.cos(angle_rad)) * (k @ k)
    c = np.zeros(3) if center is None else as_vec3(center)
    return RigidTransform.from_noisy(r, c - r @ c)


def rotation_angle(r: Mat3) -> float:
    """Angle in radians of a rotation matrix (0 for identity)."""
    cos = (float(np.trace(np.asarray(r))) - 1.0) / 2.0
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def apply_transform(cloud: PointCloud, xf: RigidTransform) -> PointCloud:
    """Rigid motion of a whole cloud; part ids and features carry through."""
    return cloud.with_positions(xf.apply(cloud.positions))


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """apply(compose(a, b), p) == apply(a, apply(b, p))."""
    return a.compose(b)


def scale_cloud(cloud: PointCloud, factor: float) -> PointCloud:
    """Uniform scaling about the origin; metadata preserved."""
    if not factor > 0.0:
        raise NonPositiveFactor(f"scale factor must be > 0, got {factor!r}")
    return cloud.with_positions(cloud.positions * float(factor))


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box [min, max], valid when min <= max componentwise."""

    min: Vec3
    max: Vec3

    def __post_init__(self):
        lo = as_vec3(self.min)
        hi = as_vec3(self.max)
        if np.any(lo > hi):
            raise ValueError(f"invalid AABB: min {lo} > max {hi}")
        object.__setattr__(self, "min", _freeze(lo.copy()))
        object.__setattr__(self, "max", _freeze(hi.copy()))

    @property
    def extents(self) -> Vec3:
        return self.max - self.min

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extents))

    @property
    def center(self) -> Vec3:
        return (self.min + self.max) / 2.0

    def contains_mask(self, points: Points) -> NDArray[np.bool_]:
        """Closed-bound containment test for each point."""
        p = np.asarray(points, dtype=np.float64)
        return np.all((p >= self.min) & (p <= self.max), axis=1)

    def inflated(self, fraction: float) -> "Aabb":
        """Grow each axis by `fraction` of its extent (degenerate axes get a floor)."""
        pad = self.extents * float(fraction)
        floor = max(self.diagonal, 1.0) * 1e-9
        pad = np.maximum(pad, floor)
        return Aabb(self.min - pad, self.max + pad)

    def union(self, other: "Aabb") -> "Aabb":
        return Aabb(np.minimum(self.min, other.min), np.maximum(self.max, other.max))


def aabb_of(cloud: PointCloud | Points, subset=None) -> Aabb:
    """Componentwise min/max over the selected points (all by default)."""
    pts = cloud.positions if isinstance(cloud, PointCloud) else as_points(cloud)
    if subset is not None:
        idx = np.asarray(subset, dtype=np.int64).reshape(-1)
        if idx.size == 0:
            raise EmptySelection("aabb_of: empty subset")
        if idx.size and (idx.min() < 0 or idx.max() >= pts.shape[0]):
            raise IndexError("aabb_of: subset index out of range")
        pts = pts[idx]
    if pts.shape[0] == 0:
        raise EmptySelection("aabb_of: no points selected")
    return Aabb(pts.min(axis=0), pts.max(axis=0))


class NnIndex:
    """Nearest-neighbor index over a fixed set of points (cKDTree-backed).

    Single-point queries break exact-distance ties by the lowest point index;
    batched queries are for hot loops where ties cannot occur (generic data).
    """

    def __init__(self, points: PointCloud | Points):
        pts = points.positions if isinstance(points, PointCloud) else as_points(points)
        if pts.shape[0] == 0:
            raise EmptyCloud("cannot build an NN index over an empty cloud")
        self._points = pts
        self._tree = cKDTree(pts)

    def __len__(self) -> int:
        return self._points.shape[0]

    @property
    def points(self) -> Points:
        return self._points

    def nearest(self, query) -> tuple[int, float]:
        """(index, distance) of the closest point; ties -> lowest index."""
        q = as_vec3(query)
        dist, idx = self._tree.query(q)
        dist = float(dist)
        # All points at exactly the minimal distance; pick the smallest index.
        tied = self._tree.query_ball_point(q, dist)
        if tied:
            idx = min(tied)
        return int(idx), dist

    def nearest_many(self, queries: Points) -> tuple[NDArray[F64], NDArray[np.int64]]:
        """Vectorized 1-NN: (distances, indices) for each query row."""
        d, i = self._tree.query(np.asarray(queries, dtype=np.float64))
        return np.asarray(d, dtype=np.float64), np.asarray(i, dtype=np.int64)

    def within_radius(self, query, radius: float) -> list[int]:
        return sorted(self._tree.query_ball_point(as_vec3(query), float(radius)))

    def pairs_within(self, queries: Points, radius: float) -> list[list[int]]:
        """For each query row, indices of points within radius (sorted)."""
        hits = self._tree.query_ball_point(
            np.asarray(queries, dtype=np.float64), float(radius)
        )
        return [sorted(h) for h in hits]


def nearest(index: NnIndex, query) -> tuple[int, float]:
    """Module-level alias for NnIndex.nearest."""
    return index.nearest(query)
