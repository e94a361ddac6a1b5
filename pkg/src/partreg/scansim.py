"""Synthetic articulated models, ground-truth deformations, degraded scans.

Two procedural test subjects: a lander-like model (mixed primitives, complex
geometry) and a robot-like model (all cuboids, mirrored left/right limbs).
Deformations rotate movable parts about their hinges with children following
parents, so every part has an exact ground-truth SE(3). Scan degradation
(partial view, holes, noise, outliers, clutter, subsampling) keeps the
source->target correspondence map in sync.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from .errors import NoClusterFound, NotMovable
from .geom import (
    Aabb,
    NnIndex,
    PointCloud,
    RigidTransform,
    aabb_of,
    rotation_about_axis,
    scale_cloud,
)
from .partgraph import Part, PartGraph, aabb_of as _aabb_of  # noqa: F401


@dataclass(frozen=True)
class Hinge:
    """Revolute joint: the part rotates about the axis through axis_point."""

    part_id: int
    parent_id: int
    axis_point: NDArray[np.float64]
    axis_dir: NDArray[np.float64]


@dataclass(frozen=True)
class ArticulatedModel:
    name: str
    cloud: PointCloud
    graph: PartGraph
    hinges: dict[int, Hinge]

    def __post_init__(self):
        for h in self.hinges.values():
            if not self.graph.has_edge(h.part_id, h.parent_id):
                raise ValueError(
                    f"hinge parent {h.parent_id} of part {h.part_id} is not a neighbor"
                )

    @property
    def movable_ids(self) -> list[int]:
        return sorted(self.hinges)

    def scaled(self, factor: float) -> "ArticulatedModel":
        """Uniform scaling of cloud, boxes and hinge definitions."""
        cloud = scale_cloud(self.cloud, factor)
        parts = tuple(
            Part(p.id, p.name, p.point_indices, aabb_of(cloud, p.point_indices))
            for p in self.graph.parts
        )
        graph = PartGraph(parts=parts, edges=self.graph.edges)
        hinges = {
            k: Hinge(h.part_id, h.parent_id, h.axis_point * factor, h.axis_dir)
            for k, h in self.hinges.items()
        }
        return ArticulatedModel(self.name, cloud, graph, hinges)


@dataclass(frozen=True)
class DeformationSpec:
    """Per-part hinge angles in degrees, optional extra per-part offsets, and
    the whole-body pose applied last."""

    hinge_angles_deg: dict[int, float] = field(default_factory=dict)
    part_offsets: dict[int, RigidTransform] = field(default_factory=dict)
    body_pose: RigidTransform = field(default_factory=RigidTransform.identity)


@dataclass(frozen=True)
class ScanSpec:
    """Degradation recipe applied in a fixed order (see degrade)."""

    noise_sigma: float = 0.0
    holes: tuple[tuple[tuple[float, float, float], float], ...] = ()
    hole_count: int = 0
    hole_radius: float = 0.0
    outlier_count: int = 0
    outlier_region: Aabb | None = None
    clutter_count: int = 0
    retention: float = 1.0
    overlap_fraction: float | None = None
    cut_normal: tuple[float, float, float] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0 or self.outlier_count < 0 or self.clutter_count < 0:
            raise ValueError("counts and sigma must be >= 0")
        if not 0.0 < self.retention <= 1.0:
            raise ValueError("retention must be in (0, 1]")
        if self.overlap_fraction is not None and not 0.0 < self.overlap_fraction <= 1.0:
            raise ValueError("overlap_fraction must be in (0, 1]")


@dataclass(frozen=True)
class GroundTruth:
    """Exact per-part transforms and the surviving source->target index map."""

    whole_body: RigidTransform
    part_transforms: dict[int, RigidTransform]
    pair_sources: NDArray[np.int64]
    pair_targets: NDArray[np.int64]

    def __post_init__(self):
        s = np.asarray(self.pair_sources, dtype=np.int64).reshape(-1)
        t = np.asarray(self.pair_targets, dtype=np.int64).reshape(-1)
        if s.size != t.size:
            raise ValueError("pair arrays must have equal length")
        object.__setattr__(self, "pair_sources", s)
        object.__setattr__(self, "pair_targets", t)

    def warp_positions(
        self, positions: NDArray[np.float64], part_ids: NDArray[np.int64] | None
    ) -> NDArray[np.float64]:
        """Apply the true per-part warp to source-frame positions."""
        pts = np.asarray(positions, dtype=np.float64)
        if part_ids is None:
            return self.whole_body.apply(pts)
        out = np.empty_like(pts)
        ids = np.asarray(part_ids)
        for pid in np.unique(ids).tolist():
            xf = self.part_transforms.get(int(pid), self.whole_body)
            mask = ids == pid
            out[mask] = xf.apply(pts[mask])
        return out


@dataclass(frozen=True)
class Scenario:
    """Everything one registration run needs, with exact ground truth."""

    scenario_id: str
    model_name: str
    preset: str
    source: PointCloud
    graph: PartGraph
    hinges: dict[int, Hinge]
    target: PointCloud
    ground_truth: GroundTruth
    deformation: DeformationSpec
    scan: ScanSpec
    seed: int


# ---------------------------------------------------------------------------
# Deterministic surface samplers (grids, no RNG)
# ---------------------------------------------------------------------------

def _grid(lo: float, hi: float, spacing: float) -> NDArray[np.float64]:
    n = max(2, int(round((hi - lo) / spacing)) + 1)
    return np.linspace(lo, hi, n)


def box_surface(mn, mx, spacing: float) -> NDArray[np.float64]:
    """Points on all six faces of the box [mn, mx]."""
    mn = np.asarray(mn, dtype=np.float64)
    mx = np.asarray(mx, dtype=np.float64)
    xs, ys, zs = (_grid(mn[a], mx[a], spacing) for a in range(3))
    faces = []
    for a, grid_a in ((0, xs), (1, ys), (2, zs)):
        b, c = [(1, 2), (0, 2), (0, 1)][a]
        gb, gc = (xs, ys, zs)[b], (xs, ys, zs)[c]
        bb, cc = np.meshgrid(gb, gc, indexing="ij")
        for val in (mn[a], mx[a]):
            pts = np.empty((bb.size, 3))
            pts[:, a] = val
            pts[:, b] = bb.ravel()
            pts[:, c] = cc.ravel()
            faces.append(pts)
    pts = np.vstack(faces)
    # Deterministic dedup of shared edges/corners.
    _, keep = np.unique(np.round(pts / (spacing * 1e-6)).astype(np.int64), axis=0, return_index=True)
    return pts[np.sort(keep)]


def _frame(direction: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    d = direction / np.linalg.norm(direction)
    ref = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(d, ref)
    u /= np.linalg.norm(u)
    v = np.cross(d, u)
    return u, v


def cylinder_surface(p0, p1, radius: float, spacing: float) -> NDArray[np.float64]:
    """Points on the lateral surface of a cylinder from p0 to p1."""
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    axis = p1 - p0
    length = float(np.linalg.norm(axis))
    u, v = _frame(axis)
    n_len = max(2, int(round(length / spacing)) + 1)
    n_ang = max(6, int(round(2 * np.pi * radius / spacing)))
    ts = np.linspace(0.0, 1.0, n_len)
    angs = np.linspace(0.0, 2 * np.pi, n_ang, endpoint=False)
    rows = []
    for t in ts:
        center = p0 + t * axis
        rows.append(center + radius * (np.cos(angs)[:, None] * u + np.sin(angs)[:, None] * v))
    return np.vstack(rows)


def disk_surface(center, normal, radius: float, spacing: float) -> NDArray[np.float64]:
    """Points on a flat disk (concentric rings, both faces coincide)."""
    center = np.asarray(center, dtype=np.float64)
    u, v = _frame(np.asarray(normal, dtype=np.float64))
    rings = [center.reshape(1, 3)]
    n_r = max(1, int(round(radius / spacing)))
    for k in range(1, n_r + 1):
        r = radius * k / n_r
        n_ang = max(6, int(round(2 * np.pi * r / spacing)))
        angs = np.linspace(0.0, 2 * np.pi, n_ang, endpoint=False)
        rings.append(center + r * (np.cos(angs)[:, None] * u + np.sin(angs)[:, None] * v))
    return np.vstack(rings)


# ---------------------------------------------------------------------------
# Procedural models (base scale ~ decimeter class; generate scales 10x)
# ---------------------------------------------------------------------------

def _assemble(
    name: str,
    pieces: list[tuple[str, NDArray[np.float64]]],
    edges: list[tuple[str, str]],
    hinges: list[tuple[str, str, NDArray[np.float64], NDArray[np.float64]]],
) -> ArticulatedModel:
    ids = {part_name: i for i, (part_name, _) in enumerate(pieces)}
    positions = np.vstack([pts for _, pts in pieces])
    labels = np.concatenate(
        [np.full(len(pts), ids[nm], dtype=np.int64) for nm, pts in pieces]
    )
    cloud = PointCloud(positions, part_ids=labels)
    offset = 0
    parts = []
    for nm, pts in pieces:
        idx = np.arange(offset, offset + len(pts), dtype=np.int64)
        parts.append(Part(id=ids[nm], name=nm, point_indices=idx, aabb=aabb_of(cloud, idx)))
        offset += len(pts)
    graph = PartGraph(
        parts=tuple(parts),
        edges=frozenset(frozenset((ids[a], ids[b])) for a, b in edges),
    )
    hmap = {
        ids[nm]: Hinge(ids[nm], ids[parent], np.asarray(pt, dtype=np.float64), np.asarray(ax, dtype=np.float64))
        for nm, parent, pt, ax in hinges
    }
    return ArticulatedModel(name, cloud, graph, hmap)


def _with_stub(
    pts: NDArray[np.float64], at, direction, radius: float, length: float, spacing: float
) -> NDArray[np.float64]:
    """Attach a small perpendicular fitting; breaks the spin symmetry of
    cylindrical pieces so their pose is observable."""
    at = np.asarray(at, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    return np.vstack([pts, cylinder_surface(at, at + d * length, radius, spacing)])


def build_lander_like(spacing: float = 0.2) -> ArticulatedModel:
    """Lander-style model: boxy body, four legs with foot pads, dish on a
    pole, sensor stack on a pole with a small joint, and an antenna. 11 parts,
    each >= 50 points. Movable chains: body->dish-pole->dish,
    body->sensor-pole->sensor-joint->sensor, body->antenna."""
    s = spacing
    pieces: list[tuple[str, NDArray[np.float64]]] = []
    pieces.append(("body", box_surface([-2.0, 0.0, -2.0], [2.0, 2.4, 2.0], s)))
    for k, (sx, sz) in enumerate([(1, 1), (1, -1), (-1, 1), (-1, -1)]):
        top = np.array([sx * 1.8, 0.1, sz * 1.8])
        foot = np.array([sx * 2.6, -1.6, sz * 2.6])
        leg = cylinder_surface(top, foot, 0.14, s * 0.7)
        leg = _with_stub(leg, foot, [sx * 1.0, 0.0, -sz * 0.6], 0.08, 0.42, s * 0.5)
        pieces.append((f"leg-{k + 1}", leg))
    pole = cylinder_surface([0.0, 2.4, 0.0], [0.0, 3.8, 0.0], 0.17, s * 0.33)
    pole = _with_stub(pole, [0.1, 3.1, 0.0], [1.0, 0.0, 0.3], 0.07, 0.45, s * 0.36)
    pieces.append(("dish-pole", pole))
    dish = disk_surface([0.0, 4.0, 0.0], [0.0, 1.0, 0.25], 0.95, s * 0.42)
    dish = _with_stub(dish, [0.6, 4.0, 0.0], [0.0, 1.0, 0.25], 0.08, 0.55, s * 0.36)
    pieces.append(("dish", dish))
    spole = cylinder_surface([1.0, 2.4, 0.8], [1.0, 3.6, 0.8], 0.16, s * 0.33)
    spole = _with_stub(spole, [1.1, 3.0, 0.8], [1.0, 0.0, -0.4], 0.06, 0.42, s * 0.36)
    pieces.append(("sensor-pole", spole))
    joint = cylinder_surface([1.0, 3.6, 0.8], [1.0, 3.95, 0.8], 0.26, s * 0.22)
    joint = _with_stub(joint, [1.24, 3.78, 0.8], [1.0, 0.3, 0.0], 0.1, 0.35, s * 0.26)
    pieces.append(("sensor-joint", joint))
    pieces.append(("sensor", box_surface([0.7, 3.95, 0.5], [1.3, 4.55, 1.1], s * 0.42)))
    ant = cylinder_surface([-1.4, 2.4, -1.4], [-1.4, 4.1, -1.4], 0.08, s * 0.45)
    ant = _with_stub(ant, [-1.4, 3.9, -1.4], [0.7, 0.0, 0.7], 0.09, 0.5, s * 0.4)
    pieces.append(("antenna", ant))

    edges = [
        ("body", "leg-1"), ("body", "leg-2"), ("body", "leg-3"), ("body", "leg-4"),
        ("body", "dish-pole"), ("dish-pole", "dish"),
        ("body", "sensor-pole"), ("sensor-pole", "sensor-joint"), ("sensor-joint", "sensor"),
        ("body", "antenna"),
    ]
    hinges = [
        ("dish-pole", "body", np.array([0.0, 2.4, 0.0]), np.array([1.0, 0.0, 0.0])),
        ("dish", "dish-pole", np.array([0.0, 3.8, 0.0]), np.array([1.0, 0.0, 0.0])),
        ("sensor-pole", "body", np.array([1.0, 2.4, 0.8]), np.array([0.0, 0.0, 1.0])),
        ("sensor-joint", "sensor-pole", np.array([1.0, 3.6, 0.8]), np.array([0.0, 0.0, 1.0])),
        ("sensor", "sensor-joint", np.array([1.0, 3.95, 0.8]), np.array([0.0, 1.0, 0.0])),
        ("antenna", "body", np.array([-1.4, 2.4, -1.4]), np.array([0.0, 0.0, 1.0])),
    ]
    return _assemble("lander", pieces, edges, hinges).scaled(3.0)


def build_robot_like(spacing: float = 0.11) -> ArticulatedModel:
    """Cubebot-style model: ten cuboid parts with exactly mirrored left/right
    limbs (the repetitive-geometry ambiguity case). Left is negative x."""
    s = spacing

    def mirrored(pts: NDArray[np.float64]) -> NDArray[np.float64]:
        out = pts.copy()
        out[:, 0] = -out[:, 0]
        return out

    body = box_surface([-0.8, 0.0, -0.45], [0.8, 2.0, 0.45], s)
    head = box_surface([-0.45, 2.1, -0.45], [0.45, 3.0, 0.45], s)
    left_arm = box_surface([-1.55, 0.7, -0.25], [-1.05, 2.0, 0.25], s * 0.8)
    left_hand = box_surface([-1.55, 0.05, -0.22], [-1.05, 0.6, 0.3], s * 0.62)
    left_leg = box_surface([-0.75, -1.55, -0.28], [-0.2, -0.1, 0.28], s * 0.8)
    left_foot = box_surface([-0.8, -1.95, -0.5], [-0.15, -1.65, 0.55], s * 0.62)

    pieces = [
        ("body", body),
        ("head", head),
        ("left-arm", left_arm),
        ("right-arm", mirrored(left_arm)),
        ("left-hand", left_hand),
        ("right-hand", mirrored(left_hand)),
        ("left-leg", left_leg),
        ("right-leg", mirrored(left_leg)),
        ("left-foot", left_foot),
        ("right-foot", mirrored(left_foot)),
    ]
    edges = [
        ("body", "head"),
        ("body", "left-arm"), ("left-arm", "left-hand"),
        ("body", "right-arm"), ("right-arm", "right-hand"),
        ("body", "left-leg"), ("left-leg", "left-foot"),
        ("body", "right-leg"), ("right-leg", "right-foot"),
    ]
    x = np.array([1.0, 0.0, 0.0])
    y = np.array([0.0, 1.0, 0.0])
    z = np.array([0.0, 0.0, 1.0])
    hinges = [
        ("head", "body", np.array([0.0, 2.05, 0.0]), y),
        ("left-arm", "body", np.array([-1.3, 1.9, 0.0]), x),
        ("right-arm", "body", np.array([1.3, 1.9, 0.0]), x),
        ("left-hand", "left-arm", np.array([-1.3, 0.65, 0.0]), x),
        ("right-hand", "right-arm", np.array([1.3, 0.65, 0.0]), x),
        ("left-leg", "body", np.array([-0.475, -0.05, 0.0]), x),
        ("right-leg", "body", np.array([0.475, -0.05, 0.0]), x),
        ("left-foot", "left-leg", np.array([-0.475, -1.6, 0.0]), z),
        ("right-foot", "right-leg", np.array([0.475, -1.6, 0.0]), z),
    ]
    return _assemble("robot", pieces, edges, hinges).scaled(3.0)


BUILDERS = {"lander": build_lander_like, "robot": build_robot_like}


# ---------------------------------------------------------------------------
# Deformation with exact ground truth
# ---------------------------------------------------------------------------

def part_chain_transforms(
    model: ArticulatedModel, spec: DeformationSpec
) -> dict[int, RigidTransform]:
    """Rest-frame transform of every part before the body pose: hinge
    rotations composed parent-to-child, then optional per-part offsets."""
    for pid in list(spec.hinge_angles_deg) + list(spec.part_offsets):
        if pid not in model.hinges:
            if spec.hinge_angles_deg.get(pid) or pid in spec.part_offsets:
                raise NotMovable(f"part {pid} has no hinge")

    local: dict[int, RigidTransform] = {}
    for pid, hinge in model.hinges.items():
        angle = math.radians(spec.hinge_angles_deg.get(pid, 0.0))
        xf = rotation_about_axis(hinge.axis_dir, angle, hinge.axis_point)
        if pid in spec.part_offsets:
            xf = spec.part_offsets[pid].compose(xf)
        local[pid] = xf

    total: dict[int, RigidTransform] = {}

    def resolve(pid: int) -> RigidTransform:
        if pid in total:
            return total[pid]
        if pid not in model.hinges:
            xf = RigidTransform.identity()
        else:
            parent = resolve(model.hinges[pid].parent_id)
            xf = parent.compose(local[pid])
        total[pid] = xf
        return xf

    for p in model.graph.parts:
        resolve(p.id)
    return total


def apply_deformation(
    model: ArticulatedModel, spec: DeformationSpec
) -> tuple[PointCloud, GroundTruth]:
    """Deformed copy of the model cloud plus exact per-part ground truth.

    Children follow parents along hinge chains; the whole-body pose applies
    last. The returned correspondence map is the identity (degradation will
    rewrite it)."""
    chain = part_chain_transforms(model, spec)
    per_part = {pid: spec.body_pose.compose(xf) for pid, xf in chain.items()}
    positions = np.empty_like(model.cloud.positions)
    for part in model.graph.parts:
        xf = per_part[part.id]
        positions[part.point_indices] = xf.apply(model.cloud.positions[part.point_indices])
    n = len(model.cloud)
    gt = GroundTruth(
        whole_body=spec.body_pose,
        part_transforms=per_part,
        pair_sources=np.arange(n, dtype=np.int64),
        pair_targets=np.arange(n, dtype=np.int64),
    )
    return PointCloud(positions, part_ids=model.cloud.part_ids), gt


# ---------------------------------------------------------------------------
# Scan degradation
# ---------------------------------------------------------------------------

def degrade(
    cloud: PointCloud, spec: ScanSpec, gt: GroundTruth
) -> tuple[PointCloud, GroundTruth]:
    """Apply the scan recipe in order: partial-view cut, holes, noise,
    outliers, clutter, retention subsampling. Target part labels are dropped
    (real scans are unlabeled); the ground-truth map is remapped to survivors.
    """
    rng = np.random.default_rng(spec.seed)
    positions = cloud.positions.copy()
    n0 = positions.shape[0]
    # original-target-index of every current row; -1 marks synthetic points.
    origin = np.arange(n0, dtype=np.int64)

    def keep_rows(mask: NDArray[np.bool_]):
        nonlocal positions, origin
        positions = positions[mask]
        origin = origin[mask]

    if spec.overlap_fraction is not None and spec.overlap_fraction < 1.0:
        if spec.cut_normal is not None:
            normal = np.asarray(spec.cut_normal, dtype=np.float64)
        else:
            normal = rng.standard_normal(3)
        normal = normal / np.linalg.norm(normal)
        proj = (positions - positions.mean(axis=0)) @ normal
        kept = int(np.floor(spec.overlap_fraction * positions.shape[0] + 0.5))
        order = np.argsort(proj, kind="stable")[:kept]
        mask = np.zeros(positions.shape[0], dtype=bool)
        mask[order] = True
        keep_rows(mask)

    hole_specs = [
        (np.asarray(c, dtype=np.float64), float(r)) for c, r in spec.holes
    ]
    if spec.hole_count > 0 and spec.hole_radius > 0.0 and positions.shape[0]:
        centers = rng.choice(positions.shape[0], size=min(spec.hole_count, positions.shape[0]), replace=False)
        hole_specs.extend((positions[c].copy(), spec.hole_radius) for c in centers)
    for center, radius in hole_specs:
        if positions.shape[0] == 0:
            break
        d = np.linalg.norm(positions - center, axis=1)
        keep_rows(d > radius)

    if spec.noise_sigma > 0.0 and positions.shape[0]:
        positions = positions + rng.normal(scale=spec.noise_sigma, size=positions.shape)

    extras = []
    if spec.outlier_count > 0:
        region = spec.outlier_region
        if region is None:
            region = aabb_of(positions).inflated(0.3)
        extras.append(
            rng.uniform(region.min, region.max, size=(spec.outlier_count, 3))
        )
    if spec.clutter_count > 0:
        box = aabb_of(positions if positions.shape[0] else cloud.positions)
        diag = max(box.diagonal, 1.0)
        n_blobs = max(1, spec.clutter_count // 75)
        sizes = np.full(n_blobs, spec.clutter_count // n_blobs)
        sizes[: spec.clutter_count % n_blobs] += 1
        for size in sizes.tolist():
            direction = rng.standard_normal(3)
            direction /= np.linalg.norm(direction)
            center = box.center + direction * diag * 0.8
            extras.append(center + rng.normal(scale=0.04 * diag, size=(size, 3)))
    if extras:
        extra_pts = np.vstack(extras)
        positions = np.vstack([positions, extra_pts]) if positions.shape[0] else extra_pts
        origin = np.concatenate([origin, np.full(extra_pts.shape[0], -1, dtype=np.int64)])

    if spec.retention < 1.0 and positions.shape[0]:
        kept = int(np.floor(spec.retention * positions.shape[0] + 0.5))
        kept = max(kept, 1)
        sel = np.sort(rng.choice(positions.shape[0], size=kept, replace=False))
        positions = positions[sel]
        origin = origin[sel]

    # Remap ground-truth pairs onto surviving rows.
    new_index_of = np.full(n0, -1, dtype=np.int64)
    real = origin >= 0
    new_index_of[origin[real]] = np.flatnonzero(real)
    old_t = gt.pair_targets
    alive = new_index_of[old_t] >= 0
    gt2 = GroundTruth(
        whole_body=gt.whole_body,
        part_transforms=gt.part_transforms,
        pair_sources=gt.pair_sources[alive],
        pair_targets=new_index_of[old_t[alive]],
    )
    return PointCloud(positions), gt2


# ---------------------------------------------------------------------------
# Target segmentation (distance threshold + DBSCAN)
# ---------------------------------------------------------------------------

def dbscan_labels(
    positions: NDArray[np.float64], eps: float, min_pts: int
) -> NDArray[np.int64]:
    """Standard density-reachability DBSCAN; -1 marks noise.

    Points are visited in index order and neighbor expansion is sorted, so
    labels are deterministic.
    """
    if not eps > 0.0:
        raise ValueError("eps must be > 0")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    pts = np.asarray(positions, dtype=np.float64)
    n = pts.shape[0]
    labels = np.full(n, -2, dtype=np.int64)  # -2 unvisited, -1 noise
    if n == 0:
        return labels
    index = NnIndex(pts)
    neighborhoods = index.pairs_within(pts, eps)
    cluster = -1
    for i in range(n):
        if labels[i] != -2:
            continue
        seeds = neighborhoods[i]
        if len(seeds) < min_pts:
            labels[i] = -1
            continue
        cluster += 1
        labels[i] = cluster
        queue = list(seeds)
        qi = 0
        while qi < len(queue):
            j = queue[qi]
            qi += 1
            if labels[j] == -1:
                labels[j] = cluster
            if labels[j] != -2:
                continue
            labels[j] = cluster
            j_neigh = neighborhoods[j]
            if len(j_neigh) >= min_pts:
                queue.extend(j_neigh)
    return labels


def segment_target(
    cloud: PointCloud, distance_threshold: float, eps: float, min_pts: int
) -> PointCloud:
    """Drop points beyond distance_threshold of the scene centroid, then keep
    the largest DBSCAN cluster."""
    pts = cloud.positions
    centroid = pts.mean(axis=0)
    near = np.flatnonzero(np.linalg.norm(pts - centroid, axis=1) <= distance_threshold)
    if near.size == 0:
        raise NoClusterFound("no points within the distance threshold")
    labels = dbscan_labels(pts[near], eps, min_pts)
    valid = labels >= 0
    if not valid.any():
        raise NoClusterFound("DBSCAN classified every point as noise")
    counts = np.bincount(labels[valid])
    best = int(np.argmax(counts))
    return cloud.select(near[labels == best])


# ---------------------------------------------------------------------------
# Experiment presets (the four regimes)
# ---------------------------------------------------------------------------

PRESETS = ("e1", "e2", "e3", "e4")

LOW_NOISE_FRACTION = 0.002   # of model diagonal
HIGH_NOISE_FRACTION = 0.01


def _body_pose(diag: float) -> RigidTransform:
    axis = np.array([0.2, 1.0, 0.3])
    pose = rotation_about_axis(axis, math.radians(25.0))
    return RigidTransform(pose.rotation, diag * np.array([0.13, 0.045, 0.075]))


def _deformation_for(model: ArticulatedModel, preset: str, diag: float) -> DeformationSpec:
    pose = _body_pose(diag)
    name_to_id = {p.name: p.id for p in model.graph.parts}

    def angles(d: dict[str, float]) -> dict[int, float]:
        return {name_to_id[k]: v for k, v in d.items()}

    if preset == "e1":
        return DeformationSpec(body_pose=pose)
    if model.name == "lander":
        if preset == "e2":
            return DeformationSpec(angles({"dish-pole": 25.0}), body_pose=pose)
        return DeformationSpec(
            angles({"dish-pole": 25.0, "dish": 10.0, "sensor-pole": 20.0}),
            body_pose=pose,
        )
    if preset == "e2":
        return DeformationSpec(angles({"left-hand": 30.0}), body_pose=pose)
    return DeformationSpec(angles({"left-hand": 30.0, "left-leg": 25.0}), body_pose=pose)


def _scan_for(model_name: str, preset: str, diag: float, n_points: int, seed: int) -> ScanSpec:
    low = LOW_NOISE_FRACTION * diag
    high = HIGH_NOISE_FRACTION * diag
    if preset in ("e1", "e2", "e3"):
        return ScanSpec(noise_sigma=low, seed=seed)
    # Cut directions chosen so every deformed chain keeps a usable share of
    # correspondences while static geometry still anchors the whole-body fit.
    cut = (-0.25, -0.65, -0.72) if model_name == "lander" else (1.0, 0.0, -0.5)
    return ScanSpec(
        noise_sigma=high,
        hole_count=8,
        hole_radius=0.03 * diag,
        outlier_count=int(round(0.03 * n_points)),
        clutter_count=150,
        retention=0.95,
        overlap_fraction=0.45,
        cut_normal=cut,
        seed=seed,
    )


def make_scenario(
    preset: str, model_name: str, seed: int = 0, scale_10x: bool = True
) -> Scenario:
    """Build one of the four experiment regimes for a model, with ground truth."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; expected one of {PRESETS}")
    if model_name not in BUILDERS:
        raise ValueError(f"unknown model {model_name!r}; expected one of {tuple(BUILDERS)}")
    model = BUILDERS[model_name]()
    if scale_10x:
        model = model.scaled(10.0)
    diag = aabb_of(model.cloud).diagonal
    deformation = _deformation_for(model, preset, diag)
    deformed, gt = apply_deformation(model, deformation)
    scan = _scan_for(model_name, preset, diag, len(deformed), seed)
    target, gt = degrade(deformed, scan, gt)
    return Scenario(
        scenario_id=f"{preset}-{model_name}-seed{seed}",
        model_name=model_name,
        preset=preset,
        source=model.cloud,
        graph=model.graph,
        hinges=model.hinges,
        target=target,
        ground_truth=gt,
        deformation=deformation,
        scan=scan,
        seed=seed,
    )
