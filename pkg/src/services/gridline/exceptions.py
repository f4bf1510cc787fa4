"""
Gridline Exceptions Module

This module defines the exceptions raised by the gridline services. Every
exception carries an ``error_type`` code next to its human readable message so
that callers (and the JSON logs) can branch on the failure kind without
parsing text.

Exceptions:
    GridlineError: Base class of every domain failure
    OutOfBoundsError: Polyline or point outside the grid's image
    EmptyResultError: Discretization left nothing to return
    InvalidGeometryError: Segment endpoints outside the unit cell box
    InvalidAnchorError: Malformed anchor set or anchor request
    InsufficientDataError: Not enough samples (e.g. k-means with n < k)
    InvalidCostMatrixError: NaN or infinite assignment cost
    RepresentationMismatchError: Predictions and truth in different spaces
    InvalidAssignmentError: Assignment index outside predictors or truth
    InvalidWeightsError: Negative or non-finite loss weights
    ShapeMismatchError: Tensor or raster shape inconsistent with the grid
    TrainingDivergenceError: Loss became NaN or infinite during training
    ImpossibleConstraintError: Scene configuration cannot be satisfied
    AnnotationParseError: Malformed annotation or raster file
    CheckpointError: Unreadable or incompatible model checkpoint
    InvalidConfigError: Out-of-range training or decoding parameter

Example:
    try:
        segments = split_polyline(polyline, grid)
    except OutOfBoundsError as e:
        logger.error("Skipping polyline: %s (%s)", e, e.error_type)

Note:
    Long running entry points are wrapped with
    ``src.services.gridline.utils.handle_gridline_exceptions`` which logs the
    ``error_type`` before re-raising.
"""

from typing import Literal


class GridlineError(Exception):
    """
    Base class for gridline domain errors.

    Args:
        message (str): Human readable description.
        error_type (str): Stable machine readable error code.
    """

    def __init__(self, message: str, error_type: str):
        self.error_type = error_type
        super().__init__(message)


class OutOfBoundsError(GridlineError):
    """
    Raised when geometry leaves the image covered by the grid, or a cell index
    lies outside the grid.

    Example:
        raise OutOfBoundsError(
            "Polyline point (70.0, 3.0) outside 64x64 image", "OUT_OF_BOUNDS"
        )
    """

    def __init__(
        self, message: str, error_type: Literal["OUT_OF_BOUNDS", "CELL_OUT_OF_RANGE"]
    ):
        super().__init__(message, error_type)


class EmptyResultError(GridlineError):
    """Raised when splitting a polyline yields no segment at all."""

    def __init__(self, message: str, error_type: Literal["EMPTY_RESULT"]):
        super().__init__(message, error_type)


class InvalidGeometryError(GridlineError):
    """
    Raised when a segment cannot be expressed inside the unit cell box, or a
    polyline violates its construction invariants.
    """

    def __init__(self, message: str, error_type: Literal["INVALID_GEOMETRY"]):
        super().__init__(message, error_type)


class InvalidAnchorError(GridlineError):
    """Raised for P < 1, unknown spaces or malformed anchor documents."""

    def __init__(self, message: str, error_type: Literal["INVALID_ANCHOR_SET"]):
        super().__init__(message, error_type)


class InsufficientDataError(GridlineError):
    """Raised when fewer samples than requested clusters (or none) are given."""

    def __init__(self, message: str, error_type: Literal["INSUFFICIENT_DATA"]):
        super().__init__(message, error_type)


class InvalidCostMatrixError(GridlineError):
    """Raised when a cost matrix holds NaN or infinite entries."""

    def __init__(self, message: str, error_type: Literal["INVALID_COST_MATRIX"]):
        super().__init__(message, error_type)


class RepresentationMismatchError(GridlineError):
    """Raised when predictions and ground truth use different representations."""

    def __init__(
        self, message: str, error_type: Literal["REPRESENTATION_MISMATCH"]
    ):
        super().__init__(message, error_type)


class InvalidAssignmentError(GridlineError):
    """Raised when an assignment references a missing predictor or truth segment."""

    def __init__(self, message: str, error_type: Literal["INVALID_ASSIGNMENT"]):
        super().__init__(message, error_type)


class InvalidWeightsError(GridlineError):
    """Raised for negative or non-finite loss weights."""

    def __init__(self, message: str, error_type: Literal["INVALID_WEIGHTS"]):
        super().__init__(message, error_type)


class ShapeMismatchError(GridlineError):
    """Raised when a raster or tensor does not fit the grid and head shapes."""

    def __init__(self, message: str, error_type: Literal["SHAPE_MISMATCH"]):
        super().__init__(message, error_type)


class TrainingDivergenceError(GridlineError):
    """
    Raised when the training loss stops being finite.

    Attributes:
        epoch (int): Epoch in which the divergence was detected.
        step (int): Step within the epoch.
    """

    def __init__(
        self,
        message: str,
        error_type: Literal["TRAINING_DIVERGED"],
        epoch: int = -1,
        step: int = -1,
    ):
        self.epoch = epoch
        self.step = step
        super().__init__(message, error_type)


class ImpossibleConstraintError(GridlineError):
    """Raised when a scene configuration cannot produce valid scenes."""

    def __init__(self, message: str, error_type: Literal["IMPOSSIBLE_CONSTRAINT"]):
        super().__init__(message, error_type)


class AnnotationParseError(GridlineError):
    """
    Raised for malformed annotation lines or raster files.

    Attributes:
        line_number (int | None): 1-based line of the offending record, if any.
    """

    def __init__(
        self,
        message: str,
        error_type: Literal["ANNOTATION_PARSE_ERROR"],
        line_number: int | None = None,
    ):
        self.line_number = line_number
        super().__init__(message, error_type)


class CheckpointError(GridlineError):
    """Raised when a checkpoint header or payload is not understood."""

    def __init__(self, message: str, error_type: Literal["INVALID_CHECKPOINT"]):
        super().__init__(message, error_type)


class InvalidConfigError(GridlineError):
    """Raised when a training, NMS or stitching parameter is out of range."""

    def __init__(self, message: str, error_type: Literal["INVALID_CONFIG"]):
        super().__init__(message, error_type)
