"""Command-line entry points: generate, register, evaluate, serve.

Flags mirror PipelineConfig field names; the PARTREG_SEED environment
variable overrides any configured seed.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from .errors import PartRegError
from .io import (
    METRICS_SCHEMA,
    dump_json,
    read_ply,
    read_scenario,
    write_scenario,
)
from .pipeline import AutoPolicy, PipelineConfig, compute_metrics, run_pipeline
from .report import (
    MATCHES_CSV,
    REPORT_JSON,
    TRANSFORMED_PLY,
    load_report,
    read_matches_csv,
    write_run_outputs,
)
from .scansim import BUILDERS, PRESETS, Scenario, make_scenario

MODEL_RETENTION = {"lander": 0.5, "robot": 0.4}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline configuration")
    g.add_argument("--f-retention", type=float, default=None,
                   help="subsample retention fraction (default per model: lander 0.5, robot 0.4)")
    g.add_argument("--d-max-corr", type=float, default=20.0,
                   help="maximum ICP correspondence distance (default 20)")
    g.add_argument("--n-min-corr", type=int, default=5,
                   help="minimum correspondences for RANSAC (default 5)")
    g.add_argument("--theta-c", type=float, default=0.05)
    g.add_argument("--top-n", type=int, default=256)
    g.add_argument("--min-part-points", type=int, default=50)
    g.add_argument("--roi-padding", type=float, default=0.10)
    g.add_argument("--joint-tolerance", type=float, default=2.0)
    g.add_argument("--junction-radius-fraction", type=float, default=0.05)
    g.add_argument("--max-anchors", type=int, default=10)
    g.add_argument("--ransac-iterations", type=int, default=256)
    g.add_argument("--ransac-inlier-distance", type=float, default=None)
    g.add_argument("--icp-max-iterations", type=int, default=50)
    g.add_argument("--icp-epsilon", type=float, default=1e-7)
    g.add_argument("--backend", choices=("oracle", "descriptor"), default="oracle")
    g.add_argument("--oracle-outlier-fraction", type=float, default=0.1)
    g.add_argument("--oracle-noise-sigma", type=float, default=0.0)
    g.add_argument("--auto-max-ransac-retries", type=int, default=5)
    g.add_argument("--auto-fitness-threshold", type=float, default=0.6)
    g.add_argument("--auto-max-icp-retries", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)


def _config_from_args(args, model_name: str) -> PipelineConfig:
    seed = args.seed
    env_seed = os.environ.get("PARTREG_SEED")
    if env_seed is not None:
        seed = int(env_seed)
    retention = args.f_retention
    if retention is None:
        retention = MODEL_RETENTION.get(model_name, 0.5)
    return PipelineConfig(
        f_retention=retention,
        d_max_corr=args.d_max_corr,
        n_min_corr=args.n_min_corr,
        theta_c=args.theta_c,
        top_n=args.top_n,
        min_part_points=args.min_part_points,
        roi_padding=args.roi_padding,
        joint_tolerance=args.joint_tolerance,
        junction_radius_fraction=args.junction_radius_fraction,
        max_anchors=args.max_anchors,
        ransac_iterations=args.ransac_iterations,
        ransac_inlier_distance=args.ransac_inlier_distance,
        icp_max_iterations=args.icp_max_iterations,
        icp_epsilon=args.icp_epsilon,
        auto_policy=AutoPolicy(
            max_ransac_retries=args.auto_max_ransac_retries,
            fitness_threshold=args.auto_fitness_threshold,
            max_icp_retries=args.auto_max_icp_retries,
        ),
        backend=args.backend,
        oracle_outlier_fraction=args.oracle_outlier_fraction,
        oracle_noise_sigma=args.oracle_noise_sigma,
        seed=seed,
    )


def _load_or_make_scenario(args) -> Scenario:
    if args.scenario is not None:
        return read_scenario(args.scenario)
    seed = args.seed
    env_seed = os.environ.get("PARTREG_SEED")
    if env_seed is not None:
        seed = int(env_seed)
    return make_scenario(args.preset, args.model, seed=seed,
                         scale_10x=not args.no_scale10x)


def cmd_generate(args) -> int:
    seed = args.seed
    env_seed = os.environ.get("PARTREG_SEED")
    if env_seed is not None:
        seed = int(env_seed)
    scenario = make_scenario(args.preset, args.model, seed=seed,
                             scale_10x=not args.no_scale10x)
    out = write_scenario(args.out, scenario)
    print(f"wrote scenario {scenario.scenario_id}: "
          f"{len(scenario.source)} source / {len(scenario.target)} target points -> {out}")
    return 0


def cmd_register(args) -> int:
    t0 = time.perf_counter()
    scenario = _load_or_make_scenario(args)
    cfg = _config_from_args(args, scenario.model_name)
    out = Path(args.out)
    if args.scenario is None:
        write_scenario(out / "scenario", scenario)
    t1 = time.perf_counter()
    result = run_pipeline(scenario, cfg)
    t2 = time.perf_counter()
    timings = {"load_s": t1 - t0, "pipeline_s": t2 - t1}
    write_run_outputs(out, result, cfg, scenario, timings,
                      figures=not args.no_figures)
    timings["total_s"] = time.perf_counter() - t0
    m = result.metrics
    print(f"registered {scenario.scenario_id}: "
          f"IR {m.inlier_ratio.ratio:.3f}, NFMR {m.nfmr.ratio:.3f}, "
          f"median C2C {m.c2c.median:.4g} -> {out / REPORT_JSON}")
    return 0


def cmd_evaluate(args) -> int:
    scenario = read_scenario(args.scenario)
    if args.run is not None:
        run_dir = Path(args.run)
        cloud = read_ply(run_dir / TRANSFORMED_PLY)
        matches = read_matches_csv(run_dir / MATCHES_CSV)
        source_kept = load_report(run_dir / REPORT_JSON)["source_kept"]
    else:
        cloud = read_ply(args.cloud)
        matches = read_matches_csv(args.matches)
        source_kept = list(range(len(scenario.source)))
    bundle = compute_metrics(scenario, cloud, matches, source_kept,
                             tolerance=args.tolerance)
    doc = {"schema": METRICS_SCHEMA, "scenario_id": scenario.scenario_id,
           **bundle.as_dict()}
    if args.out is not None:
        dump_json(args.out, doc)
    print(f"evaluated {scenario.scenario_id}: IR {bundle.inlier_ratio.ratio:.3f}, "
          f"NFMR {bundle.nfmr.ratio:.3f}, median C2C {bundle.c2c.median:.4g}")
    return 0


def cmd_serve(args) -> int:
    from .service import SessionService, serve_forever

    scenario = _load_or_make_scenario(args)
    cfg = _config_from_args(args, scenario.model_name)
    host, _, port = args.listen.rpartition(":")
    static = args.static
    if static is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        static = bundled if bundled.is_dir() else None
    service = SessionService(scenario, cfg, static_dir=static)
    serve_forever(service, host or "127.0.0.1", int(port))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="partreg",
        description="Part-whole registration of articulated rigid objects.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic scenario bundle")
    p.add_argument("--preset", choices=PRESETS, required=True)
    p.add_argument("--model", choices=tuple(BUILDERS), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-scale10x", action="store_true",
                   help="keep the base model scale instead of the 10x working scale")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("register", help="run the pipeline and write the report")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="scenario bundle directory")
    src.add_argument("--preset", choices=PRESETS, help="generate this preset in memory")
    p.add_argument("--model", choices=tuple(BUILDERS), default="lander")
    p.add_argument("--no-scale10x", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("evaluate", help="recompute metrics from artifacts")
    p.add_argument("--scenario", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--run", help="register output directory")
    src.add_argument("--cloud", help="transformed source PLY")
    p.add_argument("--matches", help="matches CSV (with --cloud)")
    p.add_argument("--tolerance", type=float, default=None)
    p.add_argument("--out", default=None, help="write metrics JSON here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="interactive session service")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario")
    src.add_argument("--preset", choices=PRESETS)
    p.add_argument("--model", choices=tuple(BUILDERS), default="lander")
    p.add_argument("--no-scale10x", action="store_true")
    p.add_argument("--listen", default="127.0.0.1:8718")
    p.add_argument("--static", default=None, help="review UI asset directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PartRegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
