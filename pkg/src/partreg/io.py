"""File formats: ASCII PLY clouds and JSON documents for graphs, ground
truth, scenarios, and run reports.

All JSON documents carry a "schema" tag and are dumped canonically (sorted
keys, two-space indent, trailing newline) so identical values serialize to
identical bytes. Floats use Python's shortest round-trip repr, which recovers
the exact float64 on read.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import PlyParseError, SchemaError
from .geom import Aabb, PointCloud, RigidTransform, aabb_of
from .partgraph import Part, PartGraph
from .scansim import (
    DeformationSpec,
    GroundTruth,
    Hinge,
    ScanSpec,
    Scenario,
)

PLY_COMMENT = "partreg v1"

GRAPH_SCHEMA = "partreg/graph@1"
GROUND_TRUTH_SCHEMA = "partreg/ground-truth@1"
SCENARIO_SCHEMA = "partreg/scenario@1"
REPORT_SCHEMA = "partreg/report@1"
METRICS_SCHEMA = "partreg/metrics@1"


def dump_json(path: Path | str, doc: dict) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def load_json(path: Path | str, schema: str) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema") != schema:
        raise SchemaError(
            f"{path}: expected schema {schema!r}, found {doc.get('schema')!r}"
        )
    return doc


def transform_to_rows(xf: RigidTransform) -> list[list[float]]:
    return [[float(v) for v in row] for row in xf.matrix4().tolist()]


def transform_from_rows(rows) -> RigidTransform:
    return RigidTransform.from_matrix4(np.asarray(rows, dtype=np.float64))


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------

def ply_dumps(cloud: PointCloud) -> str:
    """ASCII PLY text with double x/y/z and an optional int part_id property."""
    has_ids = cloud.part_ids is not None
    lines = [
        "ply",
        "format ascii 1.0",
        f"comment {PLY_COMMENT}",
        f"element vertex {len(cloud)}",
        "property double x",
        "property double y",
        "property double z",
    ]
    if has_ids:
        lines.append("property int part_id")
    lines.append("end_header")
    for i in range(len(cloud)):
        x, y, z = (float(v) for v in cloud.positions[i])
        row = f"{x!r} {y!r} {z!r}"
        if has_ids:
            row += f" {int(cloud.part_ids[i])}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def write_ply(path: Path | str, cloud: PointCloud) -> None:
    Path(path).write_text(ply_dumps(cloud), encoding="utf-8")


def read_ply(path: Path | str) -> PointCloud:
    """Parse the subset of ASCII PLY written by write_ply; errors carry the
    1-based line number of the offending row."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0].strip() != "ply":
        raise PlyParseError("missing 'ply' magic", line=1)
    vertex_count = None
    properties: list[str] = []
    body_start = None
    for ln, raw in enumerate(text[1:], start=2):
        tok = raw.strip().split()
        if not tok:
            continue
        if tok[0] == "format":
            if tok[1:2] != ["ascii"]:
                raise PlyParseError(f"unsupported format {' '.join(tok[1:])!r}", line=ln)
        elif tok[0] == "comment":
            continue
        elif tok[0] == "element":
            if tok[1] != "vertex":
                raise PlyParseError(f"unsupported element {tok[1]!r}", line=ln)
            try:
                vertex_count = int(tok[2])
            except (IndexError, ValueError):
                raise PlyParseError("bad vertex count", line=ln) from None
        elif tok[0] == "property":
            if len(tok) != 3:
                raise PlyParseError("malformed property line", line=ln)
            properties.append(tok[2])
        elif tok[0] == "end_header":
            body_start = ln
            break
        else:
            raise PlyParseError(f"unexpected header token {tok[0]!r}", line=ln)
    if body_start is None or vertex_count is None:
        raise PlyParseError("header ended without end_header/element vertex", line=len(text))
    if properties[:3] != ["x", "y", "z"]:
        raise PlyParseError(f"expected x y z properties, got {properties}", line=body_start)
    has_ids = "part_id" in properties
    want = len(properties)

    rows = np.empty((vertex_count, 3), dtype=np.float64)
    ids = np.empty(vertex_count, dtype=np.int64) if has_ids else None
    for k in range(vertex_count):
        ln = body_start + 1 + k
        if ln > len(text):
            raise PlyParseError(
                f"expected {vertex_count} vertex rows, file ends after {k}", line=len(text)
            )
        tok = text[ln - 1].split()
        if len(tok) != want:
            raise PlyParseError(
                f"expected {want} values, got {len(tok)}", line=ln
            )
        try:
            rows[k] = [float(tok[0]), float(tok[1]), float(tok[2])]
            if has_ids:
                ids[k] = int(tok[properties.index("part_id")])
        except ValueError as exc:
            raise PlyParseError(str(exc), line=ln) from None
    return PointCloud(rows, part_ids=ids)


# ---------------------------------------------------------------------------
# Part graph
# ---------------------------------------------------------------------------

def _index_ranges(indices: np.ndarray) -> list[list[int]]:
    """Compress sorted indices into [start, stop) runs."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) != 1)
    starts = np.concatenate([[0], breaks + 1])
    stops = np.concatenate([breaks, [idx.size - 1]])
    return [[int(idx[a]), int(idx[b]) + 1] for a, b in zip(starts, stops)]


def _ranges_to_indices(ranges) -> np.ndarray:
    if not ranges:
        return np.empty(0, dtype=np.int64)
    return np.concatenate([np.arange(a, b, dtype=np.int64) for a, b in ranges])


def write_graph(path: Path | str, graph: PartGraph, hinges: dict[int, Hinge]) -> None:
    parts = []
    for p in sorted(graph.parts, key=lambda q: q.id):
        entry: dict = {
            "id": p.id,
            "name": p.name,
            "point_ranges": _index_ranges(p.point_indices),
        }
        if p.id in hinges:
            h = hinges[p.id]
            entry["hinge"] = {
                "parent": h.parent_id,
                "axis_point": [float(v) for v in h.axis_point],
                "axis_dir": [float(v) for v in h.axis_dir],
            }
        parts.append(entry)
    dump_json(path, {
        "schema": GRAPH_SCHEMA,
        "parts": parts,
        "edges": [list(e) for e in graph.edge_list()],
    })


def read_graph(path: Path | str, cloud: PointCloud) -> tuple[PartGraph, dict[int, Hinge]]:
    doc = load_json(path, GRAPH_SCHEMA)
    parts = []
    hinges: dict[int, Hinge] = {}
    for entry in doc["parts"]:
        idx = _ranges_to_indices(entry["point_ranges"])
        parts.append(
            Part(
                id=int(entry["id"]),
                name=str(entry["name"]),
                point_indices=idx,
                aabb=aabb_of(cloud, idx),
            )
        )
        if "hinge" in entry:
            h = entry["hinge"]
            hinges[int(entry["id"])] = Hinge(
                part_id=int(entry["id"]),
                parent_id=int(h["parent"]),
                axis_point=np.asarray(h["axis_point"], dtype=np.float64),
                axis_dir=np.asarray(h["axis_dir"], dtype=np.float64),
            )
    edges = frozenset(frozenset((int(a), int(b))) for a, b in doc["edges"])
    return PartGraph(parts=tuple(parts), edges=edges), hinges


# ---------------------------------------------------------------------------
# Ground truth and scenario bundle
# ---------------------------------------------------------------------------

def write_ground_truth(path: Path | str, gt: GroundTruth) -> None:
    dump_json(path, {
        "schema": GROUND_TRUTH_SCHEMA,
        "whole_body": transform_to_rows(gt.whole_body),
        "part_transforms": {
            str(pid): transform_to_rows(xf) for pid, xf in sorted(gt.part_transforms.items())
        },
        "pairs": [[int(s), int(t)] for s, t in zip(gt.pair_sources, gt.pair_targets)],
    })


def read_ground_truth(path: Path | str) -> GroundTruth:
    doc = load_json(path, GROUND_TRUTH_SCHEMA)
    pairs = np.asarray(doc["pairs"], dtype=np.int64).reshape(-1, 2)
    return GroundTruth(
        whole_body=transform_from_rows(doc["whole_body"]),
        part_transforms={
            int(k): transform_from_rows(v) for k, v in doc["part_transforms"].items()
        },
        pair_sources=pairs[:, 0],
        pair_targets=pairs[:, 1],
    )


def _scan_spec_to_doc(spec: ScanSpec) -> dict:
    return {
        "noise_sigma": spec.noise_sigma,
        "holes": [[list(map(float, c)), float(r)] for c, r in spec.holes],
        "hole_count": spec.hole_count,
        "hole_radius": spec.hole_radius,
        "outlier_count": spec.outlier_count,
        "outlier_region": None if spec.outlier_region is None else {
            "min": [float(v) for v in spec.outlier_region.min],
            "max": [float(v) for v in spec.outlier_region.max],
        },
        "clutter_count": spec.clutter_count,
        "retention": spec.retention,
        "overlap_fraction": spec.overlap_fraction,
        "cut_normal": None if spec.cut_normal is None else [float(v) for v in spec.cut_normal],
        "seed": spec.seed,
    }


def _scan_spec_from_doc(doc: dict) -> ScanSpec:
    region = doc.get("outlier_region")
    return ScanSpec(
        noise_sigma=float(doc["noise_sigma"]),
        holes=tuple((tuple(c), float(r)) for c, r in doc.get("holes", [])),
        hole_count=int(doc["hole_count"]),
        hole_radius=float(doc["hole_radius"]),
        outlier_count=int(doc["outlier_count"]),
        outlier_region=None if region is None else Aabb(region["min"], region["max"]),
        clutter_count=int(doc["clutter_count"]),
        retention=float(doc["retention"]),
        overlap_fraction=doc["overlap_fraction"],
        cut_normal=None if doc["cut_normal"] is None else tuple(doc["cut_normal"]),
        seed=int(doc["seed"]),
    )


def _deformation_to_doc(spec: DeformationSpec) -> dict:
    return {
        "hinge_angles_deg": {str(k): float(v) for k, v in sorted(spec.hinge_angles_deg.items())},
        "part_offsets": {
            str(k): transform_to_rows(v) for k, v in sorted(spec.part_offsets.items())
        },
        "body_pose": transform_to_rows(spec.body_pose),
    }


def _deformation_from_doc(doc: dict) -> DeformationSpec:
    return DeformationSpec(
        hinge_angles_deg={int(k): float(v) for k, v in doc["hinge_angles_deg"].items()},
        part_offsets={int(k): transform_from_rows(v) for k, v in doc["part_offsets"].items()},
        body_pose=transform_from_rows(doc["body_pose"]),
    )


SOURCE_PLY = "source.ply"
TARGET_PLY = "target.ply"
GRAPH_JSON = "graph.json"
GROUND_TRUTH_JSON = "ground_truth.json"
SCENARIO_JSON = "scenario.json"


def write_scenario(out_dir: Path | str, scenario: Scenario) -> Path:
    """Write the full bundle: source/target PLY, graph, ground truth, spec."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_ply(out / SOURCE_PLY, scenario.source)
    write_ply(out / TARGET_PLY, scenario.target)
    write_graph(out / GRAPH_JSON, scenario.graph, scenario.hinges)
    write_ground_truth(out / GROUND_TRUTH_JSON, scenario.ground_truth)
    dump_json(out / SCENARIO_JSON, {
        "schema": SCENARIO_SCHEMA,
        "scenario_id": scenario.scenario_id,
        "model_name": scenario.model_name,
        "preset": scenario.preset,
        "seed": scenario.seed,
        "deformation": _deformation_to_doc(scenario.deformation),
        "scan": _scan_spec_to_doc(scenario.scan),
    })
    return out


def read_scenario(in_dir: Path | str) -> Scenario:
    src = Path(in_dir)
    source = read_ply(src / SOURCE_PLY)
    target = read_ply(src / TARGET_PLY)
    graph, hinges = read_graph(src / GRAPH_JSON, source)
    gt = read_ground_truth(src / GROUND_TRUTH_JSON)
    meta = load_json(src / SCENARIO_JSON, SCENARIO_SCHEMA)
    return Scenario(
        scenario_id=str(meta["scenario_id"]),
        model_name=str(meta["model_name"]),
        preset=str(meta["preset"]),
        source=source,
        graph=graph,
        hinges=hinges,
        target=target,
        ground_truth=gt,
        deformation=_deformation_from_doc(meta["deformation"]),
        scan=_scan_spec_from_doc(meta["scan"]),
        seed=int(meta["seed"]),
    )
