import numpy as np
import pytest

from partreg.errors import InvalidCommand, NoPendingCheckpoint, TooFewCorrespondences
from partreg.features import CorrespondenceSet, subsample
from partreg.geom import (
    PointCloud,
    RigidTransform,
    aabb_of,
    rotation_angle,
)
from partreg.partgraph import sort_parts_by_volume
from partreg.pipeline import (
    AutoPolicy,
    InteractiveSession,
    PipelineConfig,
    derive_seed,
    part_feature_points,
    region_of_interest,
    run_pipeline,
    whole_body_fit,
)
from partreg.scansim import make_scenario


@pytest.fixture(scope="module")
def e1_lander():
    return make_scenario("e1", "lander", seed=0)


@pytest.fixture(scope="module")
def e2_lander():
    return make_scenario("e2", "lander", seed=0)


def config(retention=0.5, **kw):
    kw.setdefault("seed", 7)
    return PipelineConfig(f_retention=retention, **kw)


def deformed_parts(scenario):
    out = set()
    for pid, a in scenario.deformation.hinge_angles_deg.items():
        if a:
            out.add(pid)
            stack = [pid]
            while stack:
                q = stack.pop()
                for h in scenario.hinges.values():
                    if h.parent_id == q and h.part_id not in out:
                        out.add(h.part_id)
                        stack.append(h.part_id)
    return out


def part_pose_errors(scenario, result, part_id):
    gt = scenario.ground_truth.part_transforms[part_id]
    total = result.total_transform(part_id)
    rot = np.degrees(rotation_angle(total.rotation.T @ gt.rotation))
    part = scenario.graph.part(part_id)
    c = scenario.source.positions[part.point_indices].mean(axis=0)
    trans = float(np.linalg.norm(total.apply(c) - gt.apply(c)))
    return rot, trans, part.aabb.diagonal


class TestWholeBodyFit:
    def test_identity_when_source_equals_target(self, rng):
        pts = rng.uniform(-10, 10, (120, 3))
        cloud = PointCloud(pts)
        n = len(cloud)
        matches = CorrespondenceSet(
            np.arange(n, dtype=np.int64), np.arange(n, dtype=np.int64), np.ones(n)
        )
        w, sp, ssub = whole_body_fit(cloud, cloud, cloud, matches, config())
        np.testing.assert_allclose(w.matrix4(), np.eye(4), atol=1e-9)

    def test_recovers_generator_pose_without_noise(self):
        sc = make_scenario("e1", "lander", seed=1)
        # zero-noise variant: rebuild with a noiseless scan
        from partreg.scansim import ScanSpec, apply_deformation, degrade
        from partreg.scansim import BUILDERS

        model = BUILDERS["lander"]().scaled(10.0)
        deformed, gt = apply_deformation(model, sc.deformation)
        target, gt = degrade(deformed, ScanSpec(seed=0), gt)
        cfg = config()
        src_sub, src_kept = subsample(model.cloud, 0.5, 1)
        tgt_sub, tgt_kept = subsample(target, 0.5, 2)
        inv_s = np.full(len(model.cloud), -1, np.int64)
        inv_s[src_kept] = np.arange(src_kept.size)
        inv_t = np.full(len(target), -1, np.int64)
        inv_t[tgt_kept] = np.arange(tgt_kept.size)
        ss, tt = inv_s[gt.pair_sources], inv_t[gt.pair_targets]
        ok = (ss >= 0) & (tt >= 0)
        matches = CorrespondenceSet(ss[ok], tt[ok], np.ones(int(ok.sum())))
        w, _, _ = whole_body_fit(model.cloud, src_sub, tgt_sub, matches, cfg)
        err = rotation_angle(w.rotation.T @ gt.whole_body.rotation)
        assert err < 1e-6
        assert np.linalg.norm(w.translation - gt.whole_body.translation) < 1e-6

    def test_too_few_matches_raises(self, rng):
        cloud = PointCloud(rng.uniform(-1, 1, (10, 3)))
        matches = CorrespondenceSet(
            np.arange(3, dtype=np.int64), np.arange(3, dtype=np.int64), np.ones(3)
        )
        with pytest.raises(TooFewCorrespondences):
            whole_body_fit(cloud, cloud, cloud, matches, config(n_min_corr=5))


class TestPartFeaturePoints:
    def test_covering_box_selects_all(self, rng):
        pts = rng.uniform(-5, 5, (50, 3))
        box = aabb_of(pts)
        np.testing.assert_array_equal(part_feature_points(pts, box), np.arange(50))

    def test_disjoint_box_selects_none(self, rng):
        pts = rng.uniform(-5, 5, (50, 3))
        box = aabb_of(pts + 100.0)
        assert part_feature_points(pts, box).size == 0

    def test_matches_containment_scan(self, rng):
        pts = rng.uniform(-5, 5, (200, 3))
        box = aabb_of(rng.uniform(-3, 3, (20, 3)))
        got = part_feature_points(pts, box)
        expect = [
            i for i, p in enumerate(pts)
            if (p >= box.min).all() and (p <= box.max).all()
        ]
        np.testing.assert_array_equal(got, expect)


class TestRegionOfInterest:
    def test_no_matches_pads_part_box(self, rng):
        part_pts = rng.uniform(-2, 2, (30, 3))
        tgt = PointCloud(rng.uniform(-10, 10, (100, 3)))
        box, idx = region_of_interest(tgt, part_pts, np.zeros((0, 3)), padding=0.1)
        base = aabb_of(part_pts)
        np.testing.assert_allclose(box.min, base.inflated(0.1).min)
        np.testing.assert_allclose(box.max, base.inflated(0.1).max)

    def test_interior_matches_leave_box_unchanged(self, rng):
        part_pts = rng.uniform(-2, 2, (30, 3))
        matches_inside = rng.uniform(-1, 1, (5, 3))
        tgt = PointCloud(rng.uniform(-10, 10, (50, 3)))
        box, _ = region_of_interest(tgt, part_pts, matches_inside, padding=0.1)
        base = aabb_of(part_pts).inflated(0.1)
        np.testing.assert_allclose(box.min, base.min)
        np.testing.assert_allclose(box.max, base.max)

    def test_distant_match_extends_box(self, rng):
        part_pts = rng.uniform(-2, 2, (30, 3))
        far = np.array([[40.0, 0.0, 0.0]])
        tgt = PointCloud(np.vstack([rng.uniform(-5, 5, (50, 3)), far + 0.1]))
        box, idx = region_of_interest(tgt, part_pts, far, padding=0.1)
        assert box.max[0] > 40.0
        assert 50 in idx.tolist()  # the target point near the distant match

    def test_returned_indices_match_scan(self, rng):
        part_pts = rng.uniform(-3, 3, (20, 3))
        tgt = PointCloud(rng.uniform(-6, 6, (200, 3)))
        box, idx = region_of_interest(tgt, part_pts, np.zeros((0, 3)), 0.2)
        expect = np.flatnonzero(box.contains_mask(tgt.positions))
        np.testing.assert_array_equal(idx, expect)


class TestRunPipeline:
    def test_e1_all_parts_accurate(self, e1_lander):
        res = run_pipeline(e1_lander, config())
        for o in res.outcomes:
            rot, trans, diag = part_pose_errors(e1_lander, res, o.part_id)
            assert rot < 2.0, o.part_name
            assert trans < 0.02 * diag, o.part_name
        assert res.metrics.c2c.median <= 2.0 * e1_lander.scan.noise_sigma

    def test_deterministic_under_seed(self, e1_lander):
        a = run_pipeline(e1_lander, config())
        b = run_pipeline(e1_lander, config())
        assert a.events == b.events
        for oa, ob in zip(a.outcomes, b.outcomes):
            assert oa.stage == ob.stage
            assert oa.transform.matrix4().tobytes() == ob.transform.matrix4().tobytes()

    def test_part_order_follows_volume_sort(self, e1_lander):
        res = run_pipeline(e1_lander, config())
        processed = [o.part_id for o in res.outcomes]
        assert processed == sort_parts_by_volume(e1_lander.graph)

    def test_e2_hinge_recovery_and_connectivity(self, e2_lander):
        cfg = config()
        res = run_pipeline(e2_lander, cfg)
        moved = deformed_parts(e2_lander)
        for pid in moved:
            rot, trans, diag = part_pose_errors(e2_lander, res, pid)
            assert rot < 2.0
            assert trans < 0.02 * diag
        # connectivity: undeformed edges keep their gap within tolerance
        final = res.transformed_source.positions
        src = e2_lander.source.positions
        for a, b in e2_lander.graph.edge_list():
            if a in moved or b in moved:
                continue
            pa, pb = e2_lander.graph.part(a), e2_lander.graph.part(b)
            gap0 = np.linalg.norm(
                src[pa.point_indices][:, None] - src[pb.point_indices][None, :], axis=2
            ).min()
            gap1 = np.linalg.norm(
                final[pa.point_indices][:, None] - final[pb.point_indices][None, :], axis=2
            ).min()
            assert gap1 - gap0 <= cfg.joint_tolerance

    def test_small_part_skipped_with_inherited_pose(self, rng):
        # hand-built scenario: a big labeled block plus a 30-point attachment
        from partreg.partgraph import build_graph
        from partreg.scansim import (DeformationSpec, GroundTruth, ScanSpec,
                                     Scenario, apply_deformation, degrade)

        g = np.arange(0.0, 8.1, 0.8)
        xx, yy, zz = np.meshgrid(g, g, g, indexing="ij")
        big = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], 1)
        tiny = rng.uniform(0, 1.2, (30, 3)) + np.array([8.5, 3.5, 3.5])
        pts = np.vstack([big, tiny])
        ids = np.concatenate([np.zeros(len(big), np.int64), np.ones(30, np.int64)])
        cloud = PointCloud(pts, part_ids=ids)
        graph = build_graph(cloud, adjacency_distance=1.2)
        assert graph.has_edge(0, 1)
        pose = RigidTransform(np.eye(3), [3.0, 1.0, 0.0])
        gt = GroundTruth(pose, {0: pose, 1: pose},
                         np.arange(len(pts), dtype=np.int64),
                         np.arange(len(pts), dtype=np.int64))
        target = PointCloud(pose.apply(pts))
        scenario = Scenario(
            scenario_id="tiny-part", model_name="custom", preset="unit",
            source=cloud, graph=graph, hinges={}, target=target,
            ground_truth=gt, deformation=DeformationSpec(body_pose=pose),
            scan=ScanSpec(seed=0), seed=0,
        )
        res = run_pipeline(scenario, config(min_part_points=50, d_max_corr=2.0))
        tiny_outcome = res.outcome_for(1)
        assert tiny_outcome.stage == "skipped-small"
        # inherited the big neighbor's accepted transform
        big_outcome = res.outcome_for(0)
        np.testing.assert_allclose(
            tiny_outcome.transform.matrix4(), big_outcome.transform.matrix4(), atol=1e-12
        )

    def test_skip_rules_exact(self, e1_lander):
        # n_min above any single part's correspondence count (but below the
        # whole-body total) suppresses every part-level RANSAC
        res = run_pipeline(e1_lander, config(n_min_corr=600))
        assert all(o.ransac_skipped or o.correspondence_count == 0 for o in res.outcomes)
        ransac_checkpoints = [
            e for e in res.events if e["kind"] == "checkpoint" and e["stage"] == "ransac"
        ]
        assert not ransac_checkpoints

    def test_auto_zero_retries_is_single_shot(self, e1_lander):
        cfg = config(auto_policy=AutoPolicy(max_ransac_retries=0,
                                            fitness_threshold=2.0,  # unreachable
                                            max_icp_retries=0))
        res = run_pipeline(e1_lander, cfg)
        retries = [e for e in res.events if e["kind"] == "retry"]
        assert not retries

    def test_matches_are_original_indices(self, e1_lander):
        res = run_pipeline(e1_lander, config())
        assert res.matches_original.source_indices.max() < len(e1_lander.source)
        assert res.matches_original.target_indices.max() < len(e1_lander.target)


class TestInteractiveSession:
    def test_retry_advances_seed_and_checkpoint(self, e2_lander):
        ses = InteractiveSession(e2_lander, config())
        ses.start()
        assert ses.state.pending is not None
        ses.command("retry")
        assert ses.state.pending.retry_count == 1
        assert ses.state.events[-1]["kind"] == "checkpoint"
        assert any(e["kind"] == "retry" for e in ses.state.events)

    def test_retry_changes_candidate_when_fit_is_inexact(self, e2_lander):
        # with heavy outliers the consensus set varies between seeds, so the
        # re-seeded stage yields a visibly re-posed candidate
        cfg = config(oracle_outlier_fraction=0.45, ransac_inlier_distance=1.5)
        ses = InteractiveSession(e2_lander, cfg)
        ses.start()
        first = ses.state.pending.candidate
        ses.command("retry")
        second = ses.state.pending.candidate
        assert (
            first.transform.matrix4().tobytes() != second.transform.matrix4().tobytes()
        )

    def test_accept_to_completion_matches_structure(self, e1_lander):
        ses = InteractiveSession(e1_lander, config())
        ses.start()
        steps = 0
        while ses.state.pending is not None:
            ses.command("accept")
            steps += 1
            assert steps < 200
        assert ses.state.status == "completed"
        assert ses.result is not None
        assert len(ses.result.outcomes) == len(e1_lander.graph.parts)

    def test_skip_at_ransac_falls_back(self, e1_lander):
        ses = InteractiveSession(e1_lander, config())
        ses.start()
        ses.command("skip")  # discard the first RANSAC candidate
        # session continues; eventually completes
        while ses.state.pending is not None:
            ses.command("accept")
        assert ses.result is not None

    def test_command_without_checkpoint_rejected(self, e1_lander):
        ses = InteractiveSession(e1_lander, config())
        with pytest.raises(NoPendingCheckpoint):
            ses.command("accept")

    def test_invalid_command_rejected(self, e1_lander):
        ses = InteractiveSession(e1_lander, config())
        ses.start()
        with pytest.raises(InvalidCommand):
            ses.command("explode")

    def test_event_log_append_only(self, e1_lander):
        ses = InteractiveSession(e1_lander, config())
        ses.start()
        n0 = len(ses.state.events)
        ses.command("retry")
        assert len(ses.state.events) > n0
        ses.command("accept")
        assert ses.state.events[0]["kind"] == "pipeline-start"


class TestDeriveSeed:
    def test_stable_and_distinct(self):
        a = derive_seed(7, "ransac", 3, 0)
        assert a == derive_seed(7, "ransac", 3, 0)
        assert a != derive_seed(7, "ransac", 3, 1)
        assert a != derive_seed(7, "ransac", 4, 0)
        assert a != derive_seed(8, "ransac", 3, 0)
