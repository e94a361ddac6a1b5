"""End-to-end part-whole registration.

Order of operations: subsample both clouds, match (descriptor or oracle
back-end), whole-body soft-Procrustes fit, then tune parts in decreasing
volume order. Each part runs RANSAC (with junction anchors to already-placed
larger neighbors) and ICP inside a region of interest; both stages pause at
checkpoints that either a human (interactive session) or the auto policy
resolves with accept / retry / skip. A candidate that would tear a joint
reverts the part to the whole-body pose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from numpy.typing import NDArray

from .errors import (
    EmptyGroundTruth,
    InvalidCommand,
    NoPendingCheckpoint,
    PartRegError,
    TooFewCorrespondences,
)
from .features import (
    CorrespondenceSet,
    descriptor_correspondences,
    oracle_correspondences,
    subsample,
)
from .geom import (
    Aabb,
    NnIndex,
    PointCloud,
    RigidTransform,
    aabb_of,
    apply_transform,
    rotation_about_axis,
)
from .metrics import MetricsBundle, NfmrResult, c2c_stats, inlier_ratio, nfmr
from .partgraph import (
    Part,
    PartGraph,
    junction_break_check,
    junction_points,
    median_nn_spacing,
    sort_parts_by_volume,
)
from .rigidfit import (
    AnchorPairs,
    FitResult,
    IcpConfig,
    ProcrustesInput,
    RansacConfig,
    icp_fit,
    ransac_fit,
    soft_procrustes,
)
from .scansim import Scenario

COMMANDS = ("accept", "retry", "skip")

# Stable codes for per-stage seed derivation.
_SEED_CODES = {
    "subsample-src": 11,
    "subsample-tgt": 12,
    "oracle": 13,
    "ransac": 21,
    "icp-perturb": 22,
}


def derive_seed(master: int, stage: str, part_id: int = 0, retry: int = 0) -> int:
    """Deterministic per-(stage, part, retry) integer seed."""
    seq = np.random.SeedSequence([master & 0x7FFFFFFF, _SEED_CODES[stage], part_id, retry])
    return int(seq.generate_state(1, np.uint64)[0] & 0x7FFFFFFF)


@dataclass(frozen=True)
class AutoPolicy:
    """Stand-in for 'while user not satisfied': retry a stage while its
    fitness is below the threshold, keep the best candidate seen."""

    max_ransac_retries: int = 5
    fitness_threshold: float = 0.6
    max_icp_retries: int = 3


@dataclass(frozen=True)
class PipelineConfig:
    f_retention: float = 0.5
    d_max_corr: float = 20.0
    n_min_corr: int = 5
    theta_c: float = 0.05
    top_n: int = 128
    min_part_points: int = 50
    roi_padding: float = 0.10
    joint_tolerance: float = 2.0
    junction_radius_fraction: float = 0.05
    max_anchors: int = 10
    ransac_iterations: int = 256
    ransac_inlier_distance: float | None = None  # default: d_max_corr / 2
    icp_max_iterations: int = 50
    icp_epsilon: float = 1e-7
    auto_policy: AutoPolicy = field(default_factory=AutoPolicy)
    interactive: bool = False
    backend: str = "oracle"  # "oracle" | "descriptor"
    oracle_outlier_fraction: float = 0.1
    oracle_noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.f_retention <= 1.0:
            raise ValueError("f_retention must be in (0, 1]")
        for name in ("d_max_corr", "theta_c", "roi_padding", "joint_tolerance",
                     "junction_radius_fraction"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be > 0")
        if self.backend not in ("oracle", "descriptor"):
            raise ValueError(f"unknown backend {self.backend!r}")


    def as_dict(self) -> dict:
        d = asdict(self)
        return d


@dataclass
class PartOutcome:
    part_id: int
    part_name: str
    stage: str  # skipped-small | skipped-few-correspondences | ransac-done | icp-done | joint-skip
    transform: RigidTransform
    fitness: float = 0.0
    rmse: float = 0.0
    inlier_count: int = 0
    correspondence_count: int = 0
    anchor_count: int = 0
    retries: dict[str, int] = field(default_factory=dict)
    ransac_skipped: bool = False
    joint_displacement: float | None = None
    rmse_history: tuple[float, ...] = ()
    notes: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class Checkpoint:
    part_id: int
    part_name: str
    stage: str  # "ransac" | "icp"
    candidate: FitResult
    retry_count: int
    joint_ok: bool = True
    joint_displacement: float = 0.0


@dataclass
class SessionState:
    scenario_id: str
    status: str = "idle"  # idle | running | awaiting-command | completed | failed
    step: int = 0
    outcomes: list[PartOutcome] = field(default_factory=list)
    pending: Checkpoint | None = None
    events: list[dict] = field(default_factory=list)

    def log(self, kind: str, **detail):
        self.step += 1
        self.events.append({"step": self.step, "kind": kind, **detail})


@dataclass
class PipelineResult:
    scenario_id: str
    whole_body: RigidTransform
    outcomes: list[PartOutcome]
    metrics: MetricsBundle
    matches_original: CorrespondenceSet
    transformed_source: PointCloud
    events: list[dict]
    source_kept: NDArray[np.int64]
    target_kept: NDArray[np.int64]

    def outcome_for(self, part_id: int) -> PartOutcome:
        for o in self.outcomes:
            if o.part_id == part_id:
                return o
        raise KeyError(part_id)

    def total_transform(self, part_id: int) -> RigidTransform:
        """Part pose in the source frame: part adjustment after whole-body."""
        return self.outcome_for(part_id).transform.compose(self.whole_body)


# ---------------------------------------------------------------------------
# Stand-alone stage operations (also used by the engine)
# ---------------------------------------------------------------------------

def whole_body_fit(
    source: PointCloud,
    src_sub: PointCloud,
    tgt_sub: PointCloud,
    correspondences: CorrespondenceSet,
    cfg: PipelineConfig,
) -> tuple[RigidTransform, PointCloud, PointCloud]:
    """Soft-Procrustes over the top matches; returns (W, S', S_hat')."""
    needed = max(3, cfg.n_min_corr)
    if len(correspondences) < needed:
        raise TooFewCorrespondences(
            f"whole-body fit needs >= {needed} correspondences, got {len(correspondences)}"
        )
    w = soft_procrustes(
        ProcrustesInput(
            correspondences=correspondences,
            source_positions=src_sub.positions,
            target_positions=tgt_sub.positions,
            top_n=cfg.top_n,
        )
    )
    return w, apply_transform(source, w), apply_transform(src_sub, w)


def part_feature_points(
    sub_positions: NDArray[np.float64], part_box: Aabb
) -> NDArray[np.int64]:
    """Indices of subsampled points inside the part's box (closed bounds)."""
    return np.flatnonzero(part_box.contains_mask(sub_positions)).astype(np.int64)


def region_of_interest(
    target: PointCloud,
    part_points: NDArray[np.float64],
    match_target_positions: NDArray[np.float64],
    padding: float,
) -> tuple[Aabb, NDArray[np.int64]]:
    """Padded bound of the part's points and its matched target points, plus
    the indices of target points inside it."""
    box = aabb_of(part_points)
    if len(match_target_positions):
        box = box.union(aabb_of(match_target_positions))
    box = box.inflated(padding)
    return box, np.flatnonzero(box.contains_mask(target.positions)).astype(np.int64)


# ---------------------------------------------------------------------------
# Engine: Algorithm steps as a generator that yields checkpoints
# ---------------------------------------------------------------------------

class _Engine:
    def __init__(self, scenario: Scenario, cfg: PipelineConfig, state: SessionState):
        self.scenario = scenario
        self.cfg = cfg
        self.state = state
        # Live working positions of the moved source; the service layer reads
        # this (under its lock) to render the "current" cloud.
        self.sprime: NDArray[np.float64] | None = None
        self.inlier_distance: float = cfg.d_max_corr / 2.0
        self.target_spacing: float = 0.0

    # -- matching back-ends --------------------------------------------------

    def _oracle_matches(
        self,
        src_kept: NDArray[np.int64],
        tgt_kept: NDArray[np.int64],
        tgt_sub: PointCloud,
    ) -> CorrespondenceSet:
        gt = self.scenario.ground_truth
        src_pos_in_sub = np.full(len(self.scenario.source), -1, dtype=np.int64)
        src_pos_in_sub[src_kept] = np.arange(src_kept.size)
        tgt_pos_in_sub = np.full(len(self.scenario.target), -1, dtype=np.int64)
        tgt_pos_in_sub[tgt_kept] = np.arange(tgt_kept.size)
        sub_s = src_pos_in_sub[gt.pair_sources]
        sub_t = tgt_pos_in_sub[gt.pair_targets]
        ok = (sub_s >= 0) & (sub_t >= 0)
        return oracle_correspondences(
            sub_s[ok],
            sub_t[ok],
            tgt_sub.positions,
            outlier_fraction=self.cfg.oracle_outlier_fraction,
            noise_sigma=self.cfg.oracle_noise_sigma,
            seed=derive_seed(self.cfg.seed, "oracle"),
            theta_c=self.cfg.theta_c,
        )

    # -- checkpoint plumbing ---------------------------------------------------

    def _checkpoint_loop(self, part: Part, stage: str, candidate: FitResult,
                         rerun, retries: dict[str, int], notes: list[str],
                         joint_probe=None):
        """Yield checkpoints until accept/skip; returns the accepted FitResult
        or None for skip. `rerun(retry)` recomputes the stage's candidate;
        `joint_probe(candidate)` reports (ok, max displacement) for the UI and
        the auto policy."""
        retry = 0
        while True:
            joint_ok, joint_disp = (True, 0.0) if joint_probe is None else joint_probe(candidate)
            self.state.log(
                "checkpoint", part=part.id, stage=stage, retry=retry,
                fitness=candidate.fitness, rmse=candidate.rmse, joint_ok=joint_ok,
            )
            self.state.pending = Checkpoint(part.id, part.name, stage, candidate,
                                            retry, joint_ok, joint_disp)
            self.state.status = "awaiting-command"
            cmd = yield self.state.pending
            self.state.pending = None
            self.state.status = "running"
            override: FitResult | None = None
            if isinstance(cmd, tuple):
                cmd, override = cmd
            if cmd == "accept":
                retries[stage] = retry
                accepted = override if override is not None else candidate
                self.state.log("accept", part=part.id, stage=stage,
                               fitness=accepted.fitness, rmse=accepted.rmse)
                return accepted
            if cmd == "skip":
                retries[stage] = retry
                self.state.log("skip", part=part.id, stage=stage)
                return None
            if cmd != "retry":
                raise InvalidCommand(f"unknown command {cmd!r}")
            retry += 1
            self.state.log("retry", part=part.id, stage=stage, retry=retry)
            try:
                candidate = rerun(retry)
            except PartRegError as exc:
                notes.append(f"{stage} retry {retry} failed: {exc}")
                self.state.log("retry-failed", part=part.id, stage=stage,
                               error=type(exc).__name__)

    # -- per-part tuning -------------------------------------------------------

    def _tune_part(
        self,
        part: Part,
        matches: CorrespondenceSet,
        sprime: NDArray[np.float64],
        sprime_sub: NDArray[np.float64],
        tgt_sub: PointCloud,
        processed: list[int],
        accepted_xf: dict[int, RigidTransform],
    ):
        cfg = self.cfg
        graph = self.scenario.graph
        target = self.scenario.target
        notes: list[str] = []
        retries: dict[str, int] = {}
        self.state.log("part-start", part=part.id, name=part.name,
                       points=part.point_count)

        outcome = PartOutcome(
            part_id=part.id, part_name=part.name, stage="icp-done",
            transform=RigidTransform.identity(), retries=retries, notes=notes,
        )

        if part.point_count < cfg.min_part_points:
            outcome.stage = "skipped-small"
            inherited = RigidTransform.identity()
            donors = [nb for nb in graph.neighbors(part.id) if nb in processed]
            if donors:
                donor = max(donors, key=lambda nb: graph.part(nb).volume)
                inherited = accepted_xf.get(donor, inherited)
                notes.append(f"inherited transform of neighbor part {donor}")
            outcome.transform = inherited
            self.state.log("part-skip-small", part=part.id, points=part.point_count)
            return outcome

        # Feature points: current part box over the subsampled moved source.
        part_box = aabb_of(sprime[part.point_indices])
        feat = part_feature_points(sprime_sub, part_box)
        feat_mask = np.zeros(sprime_sub.shape[0], dtype=bool)
        feat_mask[feat] = True
        kj = matches.subset(feat_mask[matches.source_indices])
        outcome.correspondence_count = len(kj)

        roi_box, roi_idx = region_of_interest(
            target,
            sprime[part.point_indices],
            tgt_sub.positions[kj.target_indices],
            cfg.roi_padding,
        )
        self.state.log("part-roi", part=part.id, correspondences=len(kj),
                       roi_points=int(roi_idx.size))

        # Junction anchors toward already-placed neighbors, current frame.
        current_cloud = PointCloud(sprime, part_ids=self.scenario.source.part_ids)
        junction_sets = []
        radius = cfg.junction_radius_fraction * part_box.diagonal
        if radius > 0.0:
            for nb in graph.neighbors(part.id):
                if nb not in processed:
                    continue
                nb_xf = accepted_xf.get(nb)
                if nb_xf is not None and nb_xf.is_identity():
                    nb_xf = None
                js = junction_points(graph, current_cloud, part.id, nb,
                                     radius, cfg.max_anchors,
                                     neighbor_transform=nb_xf)
                if len(js):
                    junction_sets.append(js)
        if junction_sets:
            anchor_pos = np.vstack([js.anchor_positions for js in junction_sets])
            anchor_tgt = np.vstack([js.anchor_targets for js in junction_sets])
        else:
            anchor_pos = anchor_tgt = np.zeros((0, 3))
        outcome.anchor_count = int(anchor_pos.shape[0])

        # The configured joint tolerance is a floor. Legitimate hinge swing
        # scales with the junction radius (anchors sit that far off the axis),
        # and an honestly noisy fit deserves slack proportional to its
        # residual; a drifted ICP result overfits to a *small* rmse and gets
        # no extra slack from this rule.
        def joint_tolerance_for(fit: FitResult) -> float:
            return max(cfg.joint_tolerance, 2.0 * radius, 1.6 * fit.rmse)

        def joint_probe(fit: FitResult) -> tuple[bool, float]:
            ok, worst = True, 0.0
            tol = joint_tolerance_for(fit)
            for js in junction_sets:
                js_ok, disp = junction_break_check(js, fit.transform, tol)
                worst = max(worst, disp)
                ok = ok and js_ok
            return ok, worst

        # First-level registration: RANSAC over the part's correspondences.
        ransac_result: FitResult | None = None
        if len(kj) < cfg.n_min_corr:
            outcome.ransac_skipped = True
            notes.append(
                f"RANSAC skipped: {len(kj)} correspondences < n_min {cfg.n_min_corr}"
            )
            self.state.log("ransac-skip", part=part.id, correspondences=len(kj))
        else:
            def run_ransac(retry: int) -> FitResult:
                rcfg = RansacConfig(
                    max_iterations=cfg.ransac_iterations,
                    sample_size=3,
                    inlier_distance=self.inlier_distance,
                    min_correspondences=cfg.n_min_corr,
                    seed=derive_seed(cfg.seed, "ransac", part.id, retry),
                    anchors=AnchorPairs(anchor_pos, anchor_tgt),
                )
                return ransac_fit(sprime_sub, tgt_sub.positions, kj, rcfg)

            try:
                first = run_ransac(0)
            except PartRegError as exc:
                notes.append(f"RANSAC failed: {exc}")
                outcome.ransac_skipped = True
                self.state.log("ransac-error", part=part.id, error=type(exc).__name__)
            else:
                ransac_result = yield from self._checkpoint_loop(
                    part, "ransac", first, run_ransac, retries, notes,
                    joint_probe=joint_probe,
                )

        # Second-level registration: ICP inside the ROI.
        part_src = sprime[part.point_indices]
        part_centroid = part_src.mean(axis=0)
        init = ransac_result.transform if ransac_result else RigidTransform.identity()
        icp_result: FitResult | None = None
        # Pairing cutoff: d_max_corr is the *maximum*; with a partial view a
        # looser radius lets occluded source points latch onto unrelated
        # surfaces, so derive a working cutoff from the RANSAC residual (a
        # noise estimate) and the target sampling density.
        if ransac_result is not None:
            icp_cutoff = max(1.3 * ransac_result.rmse, 1.2 * self.target_spacing)
        else:
            icp_cutoff = 3.0 * self.target_spacing
        icp_cutoff = min(cfg.d_max_corr, icp_cutoff) if icp_cutoff > 0 else cfg.d_max_corr

        if len(kj) == 0 and ransac_result is None:
            notes.append("ICP skipped: part has no correspondences in the target")
            self.state.log("icp-skip", part=part.id, reason="no-correspondences")
        elif roi_idx.size == 0:
            notes.append("ICP skipped: empty region of interest")
            self.state.log("icp-error", part=part.id, error="EmptyRoi")
        else:
            roi_index = NnIndex(target.positions[roi_idx])

            def run_icp(retry: int) -> FitResult:
                start = init
                # Retries tighten the pairing leash and shorten the iteration
                # budget (thin or half-occluded parts drift inside a loose
                # basin), then also perturb the init.
                cutoff = max(icp_cutoff * (0.7 ** retry), 0.6 * self.target_spacing)
                budget = max(4, cfg.icp_max_iterations >> retry)
                if retry > 1:
                    rng = np.random.default_rng(
                        derive_seed(cfg.seed, "icp-perturb", part.id, retry)
                    )
                    axis = rng.standard_normal(3)
                    wobble = rotation_about_axis(
                        axis, math.radians(rng.uniform(0.5, 2.5)), part_centroid
                    )
                    jitter = RigidTransform(
                        np.eye(3), rng.normal(scale=0.002 * part_box.diagonal, size=3)
                    )
                    start = jitter.compose(wobble).compose(init)
                return icp_fit(
                    part_src,
                    roi_index,
                    IcpConfig(
                        max_correspondence_distance=cutoff,
                        max_iterations=budget,
                        convergence_epsilon=cfg.icp_epsilon,
                        initial=start,
                    ),
                )

            try:
                first_icp = run_icp(0)
            except PartRegError as exc:
                notes.append(f"ICP failed: {exc}")
                self.state.log("icp-error", part=part.id, error=type(exc).__name__)
            else:
                icp_result = yield from self._checkpoint_loop(
                    part, "icp", first_icp, run_icp, retries, notes,
                    joint_probe=joint_probe,
                )

        if icp_result is not None:
            final, outcome.stage = icp_result, "icp-done"
        elif ransac_result is not None:
            final, outcome.stage = ransac_result, "ransac-done"
        else:
            final = None
            outcome.stage = "skipped-few-correspondences"
            if not outcome.ransac_skipped:
                notes.append("no candidate accepted; whole-body pose stands")

        if final is not None:
            outcome.fitness = final.fitness
            outcome.rmse = final.rmse
            outcome.inlier_count = final.inlier_count
            outcome.rmse_history = final.rmse_history
            outcome.transform = final.transform

            # Joint preservation: the accepted candidate must keep anchors
            # at the junction or the part reverts to the whole-body pose.
            ok, worst = joint_probe(final)
            if not ok:
                outcome.stage = "joint-skip"
                outcome.transform = RigidTransform.identity()
                notes.append(
                    f"a joint would move {worst:.4g} > tolerance "
                    f"{joint_tolerance_for(final):.4g}"
                )
                self.state.log("joint-skip", part=part.id, displacement=worst)
            outcome.joint_displacement = worst if junction_sets else None

        self.state.log("part-done", part=part.id, stage=outcome.stage)
        return outcome

    # -- full run ----------------------------------------------------------------

    def run(self):
        cfg = self.cfg
        scenario = self.scenario
        self.state.status = "running"
        self.state.log("pipeline-start", scenario=scenario.scenario_id,
                       backend=cfg.backend, seed=cfg.seed)

        src_sub, src_kept = subsample(
            scenario.source, cfg.f_retention, derive_seed(cfg.seed, "subsample-src")
        )
        tgt_sub, tgt_kept = subsample(
            scenario.target, cfg.f_retention, derive_seed(cfg.seed, "subsample-tgt")
        )
        self.state.log("subsample", source_kept=int(src_kept.size),
                       target_kept=int(tgt_kept.size))

        if cfg.backend == "oracle":
            matches = self._oracle_matches(src_kept, tgt_kept, tgt_sub)
        else:
            matches = descriptor_correspondences(src_sub, tgt_sub, cfg.theta_c)
        self.state.log("matches", count=len(matches))

        # RANSAC inlier radius: d_max/2 unless the target's sampling density
        # says that is too loose to discriminate candidate poses.
        sub_spacing = median_nn_spacing(tgt_sub)
        if cfg.ransac_inlier_distance is not None:
            self.inlier_distance = cfg.ransac_inlier_distance
        else:
            self.inlier_distance = min(cfg.d_max_corr / 2.0, 3.0 * sub_spacing)
        self.target_spacing = median_nn_spacing(scenario.target)
        self.state.log("ransac-inlier-distance", value=self.inlier_distance)

        whole, sprime_cloud, ssub_cloud = whole_body_fit(
            scenario.source, src_sub, tgt_sub, matches, cfg
        )
        sprime = sprime_cloud.positions.copy()
        sprime_sub = ssub_cloud.positions.copy()
        self.sprime = sprime
        self.state.log("whole-body-fit", matches_used=min(len(matches), cfg.top_n))

        order = sort_parts_by_volume(scenario.graph)
        self.state.log("part-order", order=list(order))

        processed: list[int] = []
        accepted_xf: dict[int, RigidTransform] = {}
        sub_part_ids = src_sub.part_ids
        for pid in order:
            part = scenario.graph.part(pid)
            outcome = yield from self._tune_part(
                part, matches, sprime, sprime_sub, tgt_sub, processed, accepted_xf,
            )
            self.state.outcomes.append(outcome)
            processed.append(pid)
            accepted_xf[pid] = outcome.transform
            if not outcome.transform.is_identity():
                sprime[part.point_indices] = outcome.transform.apply(
                    sprime[part.point_indices]
                )
                if sub_part_ids is not None:
                    rows = np.flatnonzero(sub_part_ids == pid)
                    sprime_sub[rows] = outcome.transform.apply(sprime_sub[rows])

        final_cloud = PointCloud(
            sprime, part_ids=scenario.source.part_ids, features=scenario.source.features
        )
        matches_orig = CorrespondenceSet(
            src_kept[matches.source_indices],
            tgt_kept[matches.target_indices],
            matches.confidences,
        )
        bundle = compute_metrics(scenario, final_cloud, matches_orig, src_kept)
        self.state.log(
            "metrics",
            inlier_ratio=bundle.inlier_ratio.ratio,
            nfmr=bundle.nfmr.ratio,
            c2c_median=bundle.c2c.median,
        )
        self.state.status = "completed"
        self.state.log("pipeline-complete", scenario=scenario.scenario_id)

        return PipelineResult(
            scenario_id=scenario.scenario_id,
            whole_body=whole,
            outcomes=list(self.state.outcomes),
            metrics=bundle,
            matches_original=matches_orig,
            transformed_source=final_cloud,
            events=list(self.state.events),
            source_kept=src_kept,
            target_kept=tgt_kept,
        )


def metric_tolerance(scenario: Scenario) -> float:
    """2x the scenario's noise sigma, with a tiny floor for noiseless scans."""
    sigma = scenario.scan.noise_sigma
    if sigma > 0.0:
        return 2.0 * sigma
    return 1e-6 * max(aabb_of(scenario.target).diagonal, 1.0)


def compute_metrics(
    scenario: Scenario,
    transformed_source: PointCloud,
    matches_original: CorrespondenceSet,
    source_kept: NDArray[np.int64],
    tolerance: float | None = None,
) -> MetricsBundle:
    """IR + NFMR over original-index matches, C2C of the final cloud.

    NFMR's denominator is the ground truth restricted to the matcher's
    domain: pairs whose source point survived the source subsampling.
    """
    gt = scenario.ground_truth
    tol = metric_tolerance(scenario) if tolerance is None else tolerance
    ir = inlier_ratio(
        matches_original,
        scenario.source.positions,
        scenario.source.part_ids,
        scenario.target.positions,
        gt.part_transforms,
        tol,
        default_transform=gt.whole_body,
    )
    domain = np.isin(gt.pair_sources, np.asarray(source_kept, dtype=np.int64))
    if not domain.any():
        nf = NfmrResult(ratio=0.0, recovered=0, total=0)
    else:
        nf = nfmr(
            matches_original,
            gt.pair_sources[domain],
            gt.pair_targets[domain],
            scenario.target.positions,
            tol,
        )
    diag = aabb_of(scenario.target).diagonal
    bin_width = max(tol / 2.0, 1e-4 * diag)
    c2c = c2c_stats(
        transformed_source.positions,
        scenario.target.positions,
        bin_width,
        part_ids=transformed_source.part_ids,
    )
    return MetricsBundle(inlier_ratio=ir, nfmr=nf, c2c=c2c, tolerance=tol)


# ---------------------------------------------------------------------------
# Sessions: interactive wrapper and the auto driver
# ---------------------------------------------------------------------------

class InteractiveSession:
    """Checkpointed pipeline run advanced by accept/retry/skip commands."""

    def __init__(self, scenario: Scenario, cfg: PipelineConfig):
        self.scenario = scenario
        self.cfg = cfg
        self.state = SessionState(scenario_id=scenario.scenario_id)
        self.engine = _Engine(scenario, cfg, self.state)
        self._gen = self.engine.run()
        self.result: PipelineResult | None = None
        self._started = False

    def start(self) -> SessionState:
        """Run until the first checkpoint (or to completion)."""
        if self._started:
            return self.state
        self._started = True
        self._advance(None)
        return self.state

    def command(self, command: str) -> SessionState:
        """Resolve the pending checkpoint; raises NoPendingCheckpoint or
        InvalidCommand without touching the run otherwise."""
        if command not in COMMANDS:
            raise InvalidCommand(
                f"command must be one of {COMMANDS}, got {command!r}"
            )
        if self.state.pending is None:
            raise NoPendingCheckpoint("no checkpoint is awaiting a command")
        self._advance(command)
        return self.state

    def accept_with(self, fit: FitResult) -> SessionState:
        """Accept the pending stage with an explicit candidate (auto mode)."""
        if self.state.pending is None:
            raise NoPendingCheckpoint("no checkpoint is awaiting a command")
        self._advance(("accept", fit))
        return self.state

    def _advance(self, cmd):
        try:
            if cmd is None:
                next(self._gen)
            else:
                self._gen.send(cmd)
        except StopIteration as stop:
            self.result = stop.value


def run_pipeline(scenario: Scenario, cfg: PipelineConfig) -> PipelineResult:
    """Auto-mode run: checkpoints resolve via cfg.auto_policy (retry while
    fitness is under the threshold, keep the best candidate seen)."""
    session = InteractiveSession(scenario, cfg)
    session.start()
    policy = cfg.auto_policy

    def rank(cp: Checkpoint):
        # Joint-keeping candidates first (by fitness); among joint-breaking
        # ones prefer the smallest break (drift inflates paired fraction, so
        # fitness is misleading there).
        if cp.joint_ok:
            return (1, cp.candidate.fitness, -cp.candidate.rmse)
        return (0, -cp.joint_displacement, -cp.candidate.rmse)

    best: Checkpoint | None = None
    key: tuple[int, str] | None = None
    while session.state.pending is not None:
        cp = session.state.pending
        if (cp.part_id, cp.stage) != key:
            key = (cp.part_id, cp.stage)
            best = cp
        elif rank(cp) > rank(best):
            best = cp
        limit = (
            policy.max_ransac_retries if cp.stage == "ransac" else policy.max_icp_retries
        )
        satisfied = cp.joint_ok and cp.candidate.fitness >= policy.fitness_threshold
        if satisfied or cp.retry_count >= limit:
            session.accept_with(best.candidate)
        else:
            session.command("retry")
    assert session.result is not None
    return session.result
