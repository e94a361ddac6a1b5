"""Run report rendering: report.json, delimited tables, matplotlib figures.

The report JSON is canonical (sorted keys) and excludes nothing; determinism
comparisons strip the "timings" key, which is the only wall-clock content.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import SchemaError
from .features import CorrespondenceSet
from .io import REPORT_SCHEMA, dump_json, load_json, transform_to_rows, write_ply
from .metrics import MetricsBundle
from .pipeline import PipelineConfig, PipelineResult
from .scansim import Scenario

REPORT_JSON = "report.json"
MATCHES_CSV = "matches.csv"
OUTCOMES_CSV = "part_outcomes.csv"
TRANSFORMED_PLY = "transformed_source.ply"
FIGURES_DIR = "figures"


def report_document(
    result: PipelineResult, cfg: PipelineConfig, timings: dict[str, float]
) -> dict:
    parts = []
    for o in result.outcomes:
        parts.append({
            "id": o.part_id,
            "name": o.part_name,
            "stage": o.stage,
            "transform": transform_to_rows(o.transform),
            "total_transform": transform_to_rows(result.total_transform(o.part_id)),
            "fitness": o.fitness,
            "rmse": o.rmse,
            "inlier_count": o.inlier_count,
            "correspondence_count": o.correspondence_count,
            "anchor_count": o.anchor_count,
            "retries": dict(o.retries),
            "ransac_skipped": o.ransac_skipped,
            "joint_displacement": o.joint_displacement,
            "rmse_history": list(o.rmse_history),
            "notes": list(o.notes),
        })
    return {
        "schema": REPORT_SCHEMA,
        "scenario_id": result.scenario_id,
        "config": cfg.as_dict(),
        "whole_body": transform_to_rows(result.whole_body),
        "parts": parts,
        "metrics": result.metrics.as_dict(),
        "events": result.events,
        "source_kept": [int(i) for i in result.source_kept],
        "target_kept": [int(i) for i in result.target_kept],
        "timings": {k: float(v) for k, v in sorted(timings.items())},
    }


def load_report(path: Path | str) -> dict:
    return load_json(path, REPORT_SCHEMA)


def strip_timings(doc: dict) -> str:
    """Canonical bytes of a report with wall-clock content removed."""
    trimmed = {k: v for k, v in doc.items() if k != "timings"}
    return json.dumps(trimmed, indent=2, sort_keys=True)


def write_matches_csv(path: Path | str, matches: CorrespondenceSet) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source_index", "target_index", "confidence"])
        for s, t, c in zip(
            matches.source_indices, matches.target_indices, matches.confidences
        ):
            writer.writerow([int(s), int(t), repr(float(c))])


def read_matches_csv(path: Path | str) -> CorrespondenceSet:
    src, tgt, conf = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["source_index", "target_index", "confidence"]:
            raise SchemaError(f"{path}: unexpected matches header {header}")
        for row in reader:
            src.append(int(row[0]))
            tgt.append(int(row[1]))
            conf.append(float(row[2]))
    return CorrespondenceSet(
        np.asarray(src, dtype=np.int64),
        np.asarray(tgt, dtype=np.int64),
        np.asarray(conf, dtype=np.float64),
    )


def write_outcomes_csv(path: Path | str, result: PipelineResult) -> None:
    per_part_c2c = result.metrics.c2c.per_part
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "part_id", "name", "stage", "fitness", "rmse", "inlier_count",
            "correspondence_count", "anchor_count", "ransac_retries",
            "icp_retries", "c2c_median",
        ])
        for o in result.outcomes:
            c2c = per_part_c2c.get(o.part_id, {})
            writer.writerow([
                o.part_id, o.part_name, o.stage,
                repr(float(o.fitness)), repr(float(o.rmse)),
                o.inlier_count, o.correspondence_count, o.anchor_count,
                o.retries.get("ransac", 0), o.retries.get("icp", 0),
                repr(float(c2c.get("median", float("nan")))),
            ])


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------

def _fig_c2c_histogram(metrics: MetricsBundle, path: Path) -> None:
    counts = np.asarray(metrics.c2c.histogram, dtype=np.int64)
    w = metrics.c2c.bin_width
    centers = (np.arange(counts.size) + 0.5) * w
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(centers, counts, width=w * 0.92, color="#3a7ca5")
    ax.axvline(metrics.c2c.median, color="#d1495b", ls="--",
               label=f"median = {metrics.c2c.median:.4g}")
    ax.set_xlabel("C2C nearest-neighbor distance (model units)")
    ax.set_ylabel("points")
    ax.set_title("Cloud-to-cloud distance, transformed source vs target")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _fig_c2c_per_part(result: PipelineResult, path: Path) -> None:
    rows = [
        (o.part_name, result.metrics.c2c.per_part.get(o.part_id, {}).get("median", 0.0),
         o.stage)
        for o in result.outcomes
    ]
    names = [r[0] for r in rows]
    meds = [r[1] for r in rows]
    colors = ["#6aa84f" if r[2] == "icp-done" else "#e69138" for r in rows]
    fig, ax = plt.subplots(figsize=(7, 0.45 * len(rows) + 1.8))
    ax.barh(np.arange(len(rows)), meds, color=colors)
    ax.set_yticks(np.arange(len(rows)), names)
    ax.invert_yaxis()
    ax.set_xlabel("median C2C distance (model units)")
    ax.set_title("Per-part alignment (green = ICP-refined)")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _fig_alignment(result: PipelineResult, scenario: Scenario, path: Path) -> None:
    src = result.transformed_source.positions
    tgt = scenario.target.positions
    ids = result.transformed_source.part_ids
    fig, axes = plt.subplots(1, 2, figsize=(11, 5))
    for ax, (a, b, la, lb) in zip(axes, [(0, 1, "x", "y"), (0, 2, "x", "z")]):
        ax.scatter(tgt[:, a], tgt[:, b], s=2, c="#bbbbbb", label="target")
        ax.scatter(src[:, a], src[:, b], s=2,
                   c=(ids if ids is not None else "#3a7ca5"), cmap="tab20",
                   label="transformed source")
        ax.set_aspect("equal")
        ax.set_xlabel(la)
        ax.set_ylabel(lb)
        ax.legend(markerscale=4, loc="upper right", fontsize=8)
    fig.suptitle(f"Alignment overlay: {result.scenario_id}")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_figures(result: PipelineResult, scenario: Scenario, out_dir: Path | str) -> list[Path]:
    fig_dir = Path(out_dir) / FIGURES_DIR
    fig_dir.mkdir(parents=True, exist_ok=True)
    paths = [
        fig_dir / "c2c_histogram.png",
        fig_dir / "c2c_per_part.png",
        fig_dir / "alignment.png",
    ]
    _fig_c2c_histogram(result.metrics, paths[0])
    _fig_c2c_per_part(result, paths[1])
    _fig_alignment(result, scenario, paths[2])
    return paths


def write_run_outputs(
    out_dir: Path | str,
    result: PipelineResult,
    cfg: PipelineConfig,
    scenario: Scenario,
    timings: dict[str, float],
    figures: bool = True,
) -> Path:
    """Everything `register` leaves behind: report, tables, cloud, figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(out / REPORT_JSON, report_document(result, cfg, timings))
    write_matches_csv(out / MATCHES_CSV, result.matches_original)
    write_outcomes_csv(out / OUTCOMES_CSV, result)
    write_ply(out / TRANSFORMED_PLY, result.transformed_source)
    if figures:
        render_figures(result, scenario, out)
    return out
