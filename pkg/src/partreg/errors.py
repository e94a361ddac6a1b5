"""Exception types shared across the package.

Every contract violation raises a named subclass of PartRegError so callers
can distinguish "skip this part" conditions from genuine bugs.
"""

from __future__ import annotations


class PartRegError(Exception):
    """Base class for all partreg errors."""


class EmptyCloud(PartRegError):
    """An operation that needs at least one point received none."""


class EmptySelection(PartRegError):
    """A subset selection (AABB, subsample) produced no points."""


class EmptyResult(EmptySelection):
    """Subsampling rounded down to zero kept points."""


class NonPositiveFactor(PartRegError, ValueError):
    """A scale factor must be strictly positive."""


class InvalidRotation(PartRegError, ValueError):
    """Matrix is not orthonormal with determinant +1 within tolerance."""


class DimensionMismatch(PartRegError, ValueError):
    """Feature vector dimension does not match the encoder/matrix."""


class MissingPartLabels(PartRegError):
    """Part graph construction requires per-point part ids."""


class NotAdjacent(PartRegError):
    """Requested (part, neighbor) pair is not an edge of the graph."""


class NoAnchors(PartRegError):
    """Junction set has no anchor points (pipeline treats this as a pass)."""


class TooFewCorrespondences(PartRegError):
    """Fewer correspondences than the configured minimum."""


class DegenerateGeometry(PartRegError):
    """Selected correspondences are collinear or coincident."""


class NoConsensus(PartRegError):
    """RANSAC found no candidate with enough inliers."""


class NoPairsWithinDistance(PartRegError):
    """ICP found no source point with a target neighbor within d_max."""


class NotMovable(PartRegError):
    """Deformation was requested for a part without a hinge."""


class NoClusterFound(PartRegError):
    """DBSCAN classified every point as noise."""


class EmptyGroundTruth(PartRegError):
    """NFMR needs a non-empty ground-truth match set."""


class NoPendingCheckpoint(PartRegError):
    """A session command arrived while no checkpoint was pending."""


class InvalidCommand(PartRegError, ValueError):
    """Unknown or stage-inappropriate session command."""


class PlyParseError(PartRegError, ValueError):
    """Malformed PLY input; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SchemaError(PartRegError, ValueError):
    """Structured document failed schema validation."""
