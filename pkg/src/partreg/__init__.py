"""Part-whole registration of rigid objects with movable parts."""

from .errors import PartRegError
from .features import CorrespondenceSet, RotaryEncoder, dual_softmax, extract_matches, subsample
from .geom import Aabb, NnIndex, PointCloud, RigidTransform, apply_transform, scale_cloud
from .metrics import MetricsBundle, c2c_stats, inlier_ratio, nfmr
from .partgraph import PartGraph, build_graph, junction_points, sort_parts_by_volume
from .pipeline import (
    InteractiveSession,
    PipelineConfig,
    PipelineResult,
    run_pipeline,
)
from .rigidfit import FitResult, IcpConfig, RansacConfig, icp_fit, ransac_fit, soft_procrustes
from .scansim import Scenario, build_lander_like, build_robot_like, make_scenario

__version__ = "0.1.0"

__all__ = [
    "Aabb",
    "CorrespondenceSet",
    "FitResult",
    "IcpConfig",
    "InteractiveSession",
    "MetricsBundle",
    "NnIndex",
    "PartGraph",
    "PartRegError",
    "PipelineConfig",
    "PipelineResult",
    "PointCloud",
    "RansacConfig",
    "RigidTransform",
    "RotaryEncoder",
    "Scenario",
    "apply_transform",
    "build_graph",
    "build_lander_like",
    "build_robot_like",
    "c2c_stats",
    "dual_softmax",
    "extract_matches",
    "icp_fit",
    "inlier_ratio",
    "junction_points",
    "make_scenario",
    "nfmr",
    "ransac_fit",
    "run_pipeline",
    "scale_cloud",
    "soft_procrustes",
    "sort_parts_by_volume",
    "subsample",
]
