"""Part decomposition of a labeled source cloud: graph, ordering, junctions.

Parts partition the labeled cloud; edges mark physically adjacent parts
(joints). Junction points of a part are the points sitting close to a
neighbor part; they anchor RANSAC so the model does not disintegrate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import MissingPartLabels, NoAnchors, NotAdjacent
from .geom import Aabb, NnIndex, PointCloud, RigidTransform, aabb_of


@dataclass(frozen=True)
class Part:
    """One rigid part: its points (indices into the source cloud) and box."""

    id: int
    name: str
    point_indices: NDArray[np.int64]
    aabb: Aabb

    def __post_init__(self):
        idx = np.asarray(self.point_indices, dtype=np.int64).reshape(-1)
        if idx.size == 0:
            raise ValueError(f"part {self.id} has no points")
        if np.unique(idx).size != idx.size:
            raise ValueError(f"part {self.id} has duplicate point indices")
        idx = np.sort(idx)
        idx.setflags(write=False)
        object.__setattr__(self, "point_indices", idx)

    @property
    def volume(self) -> float:
        """AABB volume; the 'size' used for the tuning order."""
        return self.aabb.volume

    @property
    def point_count(self) -> int:
        return int(self.point_indices.size)


@dataclass(frozen=True)
class PartGraph:
    """Parts plus adjacency edges (unordered id pairs)."""

    parts: tuple[Part, ...]
    edges: frozenset[frozenset[int]]

    def __post_init__(self):
        ids = {p.id for p in self.parts}
        if len(ids) != len(self.parts):
            raise ValueError("duplicate part ids")
        for e in self.edges:
            if len(e) != 2 or not e <= ids:
                raise ValueError(f"bad edge {set(e)}")
        object.__setattr__(self, "parts", tuple(self.parts))
        object.__setattr__(self, "edges", frozenset(frozenset(e) for e in self.edges))

    def part(self, part_id: int) -> Part:
        for p in self.parts:
            if p.id == part_id:
                return p
        raise KeyError(f"no part with id {part_id}")

    def neighbors(self, part_id: int) -> list[int]:
        out = []
        for e in self.edges:
            if part_id in e:
                (other,) = e - {part_id}
                out.append(other)
        return sorted(out)

    def has_edge(self, a: int, b: int) -> bool:
        return frozenset((a, b)) in self.edges

    def edge_list(self) -> list[tuple[int, int]]:
        """Deterministic edge listing: sorted (low, high) pairs."""
        return sorted(tuple(sorted(e)) for e in self.edges)


@dataclass(frozen=True)
class JunctionSet:
    """Junction points of `part_id` toward `neighbor_id`.

    anchor_positions are the part-side points' current world positions;
    anchor_targets are where the junction currently sits on the neighbor side
    (identical to anchor_positions unless the neighbor has already been moved,
    in which case the junction rides along with it).
    """

    part_id: int
    neighbor_id: int
    anchor_indices: NDArray[np.int64]
    anchor_positions: NDArray[np.float64]
    anchor_targets: NDArray[np.float64] | None = None

    def __post_init__(self):
        if self.anchor_targets is None:
            object.__setattr__(self, "anchor_targets", self.anchor_positions)

    def __len__(self) -> int:
        return int(self.anchor_indices.size)


def median_nn_spacing(cloud: PointCloud) -> float:
    """Median nearest-neighbor distance; the cloud's natural length scale."""
    if len(cloud) < 2:
        return 0.0
    index = NnIndex(cloud)
    d, _ = index._tree.query(cloud.positions, k=2)
    return float(np.median(d[:, 1]))


def build_graph(
    cloud: PointCloud,
    adjacency_distance: float | None = None,
    names: dict[int, str] | None = None,
) -> PartGraph:
    """One part per distinct label; edge iff min inter-part distance is under
    adjacency_distance (default: 2x the cloud's median NN spacing)."""
    if cloud.part_ids is None:
        raise MissingPartLabels("build_graph requires per-point part ids")
    if adjacency_distance is None:
        adjacency_distance = 2.0 * median_nn_spacing(cloud)
    if not adjacency_distance > 0.0:
        raise ValueError("adjacency_distance must be > 0")

    labels = np.unique(cloud.part_ids)
    parts = []
    index_of: dict[int, NDArray[np.int64]] = {}
    for label in labels.tolist():
        idx = np.flatnonzero(cloud.part_ids == label).astype(np.int64)
        index_of[label] = idx
        parts.append(
            Part(
                id=int(label),
                name=(names or {}).get(int(label), f"part-{label}"),
                point_indices=idx,
                aabb=aabb_of(cloud, idx),
            )
        )

    edges: set[frozenset[int]] = set()
    trees = {label: NnIndex(cloud.positions[index_of[label]]) for label in labels.tolist()}
    for i, a in enumerate(labels.tolist()):
        for b in labels.tolist()[i + 1 :]:
            d, _ = trees[b].nearest_many(cloud.positions[index_of[a]])
            if float(d.min()) < adjacency_distance:
                edges.add(frozenset((int(a), int(b))))
    return PartGraph(parts=tuple(parts), edges=frozenset(edges))


def sort_parts_by_volume(graph: PartGraph) -> list[int]:
    """Part ids in non-increasing AABB volume; ties broken by lower id."""
    return [p.id for p in sorted(graph.parts, key=lambda p: (-p.volume, p.id))]


def junction_points(
    graph: PartGraph,
    cloud: PointCloud,
    part_id: int,
    neighbor_id: int,
    junction_radius: float,
    max_anchors: int,
    neighbor_transform: RigidTransform | None = None,
) -> JunctionSet:
    """Up to max_anchors points of the part within junction_radius of any
    neighbor point, nearest first (ties by lower index). Positions are read
    from `cloud`, i.e. the current world frame.

    When the neighbor was already adjusted, pass its accepted transform and
    the junction is searched in the pre-adjustment neighbor frame while the
    anchor targets ride along with the neighbor (for a static neighbor the
    targets equal the positions: the anchors must stay put).
    """
    if not graph.has_edge(part_id, neighbor_id):
        raise NotAdjacent(f"parts {part_id} and {neighbor_id} share no edge")
    if not junction_radius > 0.0:
        raise ValueError("junction_radius must be > 0")

    part = graph.part(part_id)
    neighbor = graph.part(neighbor_id)
    part_pts = cloud.positions[part.point_indices]
    neighbor_pts = cloud.positions[neighbor.point_indices]
    if neighbor_transform is not None:
        # The part has not moved yet; find the junction against where the
        # neighbor used to be, then carry the anchors with the neighbor.
        neighbor_pts = neighbor_transform.inverse().apply(neighbor_pts)
    tree = NnIndex(neighbor_pts)
    dist, _ = tree.nearest_many(part_pts)

    within = np.flatnonzero(dist <= junction_radius)
    order = within[np.lexsort((part.point_indices[within], dist[within]))]
    chosen = order[: max(0, int(max_anchors))]
    anchor_idx = part.point_indices[chosen]
    positions = cloud.positions[anchor_idx].copy()
    targets = (
        positions if neighbor_transform is None else neighbor_transform.apply(positions)
    )
    return JunctionSet(
        part_id=part_id,
        neighbor_id=neighbor_id,
        anchor_indices=np.asarray(anchor_idx, dtype=np.int64),
        anchor_positions=positions,
        anchor_targets=targets,
    )


def junction_break_check(
    junctions: JunctionSet, candidate: RigidTransform, tolerance: float
) -> tuple[bool, float]:
    """(passed, max displacement). Fails iff some anchor lands farther than
    `tolerance` from its target (its own current position for a static
    neighbor) under the candidate transform."""
    if len(junctions) == 0:
        raise NoAnchors(
            f"junction {junctions.part_id}-{junctions.neighbor_id} has no anchors"
        )
    moved = candidate.apply(junctions.anchor_positions)
    disp = float(np.linalg.norm(moved - junctions.anchor_targets, axis=1).max())
    return disp <= tolerance, disp
