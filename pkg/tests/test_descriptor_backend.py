"""End-to-end run of the descriptor (non-learned) correspondence route.

The frozen-weight descriptors are deliberately not rotation-invariant and
their dual-softmax confidences are nearly flat, so this back-end is only
expected to carry refinement-scale misalignments; large poses are the oracle
back-end's job. This test pins that contract: on a small, slightly shifted
object the pipeline completes and part poses land within tight bounds.
"""

import numpy as np
import pytest

from partreg.geom import PointCloud, RigidTransform, rotation_angle
from partreg.partgraph import build_graph
from partreg.pipeline import PipelineConfig, run_pipeline
from partreg.scansim import (
    DeformationSpec,
    GroundTruth,
    ScanSpec,
    Scenario,
    box_surface,
)


@pytest.fixture(scope="module")
def two_box_scenario():
    rng = np.random.default_rng(5)
    a = box_surface([0, 0, 0], [4, 2, 2], 0.55)
    b = box_surface([4, 0.4, 0.4], [6.5, 1.6, 1.6], 0.5)
    pts = np.vstack([a, b])
    ids = np.concatenate([np.zeros(len(a), np.int64), np.ones(len(b), np.int64)])
    src = PointCloud(pts, part_ids=ids)
    graph = build_graph(src, adjacency_distance=0.8)
    pose = RigidTransform(np.eye(3), [0.15, -0.1, 0.08])
    tgt = PointCloud(pose.apply(pts) + rng.normal(scale=0.015, size=pts.shape))
    gt = GroundTruth(pose, {0: pose, 1: pose},
                     np.arange(len(pts), dtype=np.int64),
                     np.arange(len(pts), dtype=np.int64))
    return Scenario("two-box", "custom", "unit", src, graph, {}, tgt, gt,
                    DeformationSpec(body_pose=pose),
                    ScanSpec(noise_sigma=0.015, seed=0), 0)


def test_descriptor_backend_registers_refinement_scale(two_box_scenario):
    sc = two_box_scenario
    n = len(sc.source)
    # dual-softmax confidences sit near 1/(n*m); threshold just above it
    cfg = PipelineConfig(
        f_retention=1.0,
        backend="descriptor",
        theta_c=1.1 / (n * n),
        d_max_corr=2.0,
        ransac_inlier_distance=0.12,
        joint_tolerance=0.3,
        top_n=64,
        seed=9,
    )
    res = run_pipeline(sc, cfg)
    assert len(res.matches_original) > 100
    pose = sc.ground_truth.whole_body
    for o in res.outcomes:
        assert o.stage == "icp-done"
        total = res.total_transform(o.part_id)
        rot = np.degrees(rotation_angle(total.rotation.T @ pose.rotation))
        centroid = sc.source.positions[
            sc.graph.part(o.part_id).point_indices
        ].mean(axis=0)
        trans = np.linalg.norm(total.apply(centroid) - pose.apply(centroid))
        assert rot < 1.5
        assert trans < 0.05
    assert res.metrics.c2c.median <= 2.0 * sc.scan.noise_sigma


def test_descriptor_backend_deterministic(two_box_scenario):
    sc = two_box_scenario
    n = len(sc.source)
    cfg = PipelineConfig(f_retention=1.0, backend="descriptor",
                         theta_c=1.1 / (n * n), d_max_corr=2.0,
                         ransac_inlier_distance=0.12, joint_tolerance=0.3,
                         top_n=64, seed=9)
    a = run_pipeline(sc, cfg)
    b = run_pipeline(sc, cfg)
    assert a.events == b.events
    assert (
        a.transformed_source.positions.tobytes()
        == b.transformed_source.positions.tobytes()
    )
