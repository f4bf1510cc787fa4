"""
Composite Training Loss Module

The training objective is a weighted sum of a geometric term, a confidence
term and a classification term, evaluated per predictor:

    - an assigned predictor pays w_geom * ||g - g_hat|| for its geometry,
      w_conf1 * (c - 1)^2 for its confidence and
      w_class * sum_c (p_c - onehot_c)^2 for its label distribution
    - an unassigned predictor pays only w_conf0 * c^2

Gradients are closed form. The geometric gradient at zero distance is 0.
Sums use compensated summation so the value does not depend on the order in
which cells and predictors are visited.
"""

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from src.core.custom_classes import SubscriptableDataclass
from src.core.constants import (
    DEFAULT_LOSS_WEIGHTS,
    INVALID_ASSIGNMENT_ERROR_CODE,
    INVALID_WEIGHTS_ERROR_CODE,
)
from src.services.gridline.anchors import AnchorAssignment
from src.services.gridline.exceptions import InvalidAssignmentError, InvalidWeightsError
from src.services.gridline.geom import CellTruth, PredictionGrid
from src.services.gridline.matching import Matching

Cell = tuple[int, int]
CellAssignment = Matching | AnchorAssignment | Mapping[int, int]


@dataclass(kw_only=True, frozen=True)
class LossWeights(SubscriptableDataclass):
    """
    Weights of the loss terms.

    Raises:
        InvalidWeightsError: Any weight negative or not finite.
    """

    w_geom: float = DEFAULT_LOSS_WEIGHTS[0]
    w_conf1: float = DEFAULT_LOSS_WEIGHTS[1]
    w_conf0: float = DEFAULT_LOSS_WEIGHTS[2]
    w_class: float = DEFAULT_LOSS_WEIGHTS[3]

    def __post_init__(self) -> None:
        for name in ("w_geom", "w_conf1", "w_conf0", "w_class"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 0:
                raise InvalidWeightsError(
                    f"Loss weight {name}={value} must be finite and non-negative",
                    INVALID_WEIGHTS_ERROR_CODE,
                )
            object.__setattr__(self, name, value)

    @classmethod
    def parse(cls, text: str) -> "LossWeights":
        """
        Parses ``"wg,wc1,wc0,wcl"``.

        Raises:
            InvalidWeightsError: Not exactly four numbers.
        """
        try:
            values = [float(v) for v in text.split(",")]
        except ValueError as e:
            raise InvalidWeightsError(
                f"Cannot parse loss weights '{text}'", INVALID_WEIGHTS_ERROR_CODE
            ) from e
        if len(values) != 4:
            raise InvalidWeightsError(
                f"Expected four loss weights, got '{text}'", INVALID_WEIGHTS_ERROR_CODE
            )
        return cls(w_geom=values[0], w_conf1=values[1], w_conf0=values[2], w_class=values[3])


@dataclass(kw_only=True, frozen=True)
class LossBreakdown(SubscriptableDataclass):
    """
    Loss value and its terms.

    ``total = w_geom * geom + conf + w_class * cls``; ``conf`` already carries
    its weights. ``per_predictor`` holds each predictor's share of ``total``.
    """

    total: float
    geom: float
    conf: float
    cls: float
    per_predictor: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {"total": self.total, "geom": self.geom, "conf": self.conf, "cls": self.cls}


@dataclass(kw_only=True, frozen=True, eq=False)
class LossGradients:
    """Partial derivatives of the total loss with respect to every head output."""

    geometry: np.ndarray
    labels: np.ndarray
    confidence: np.ndarray


@dataclass(kw_only=True, frozen=True, eq=False)
class _Targets:
    mask: np.ndarray
    geometry: np.ndarray
    onehot: np.ndarray


def assignment_pairs(assignment: CellAssignment) -> dict[int, int]:
    """Predictor -> gt map of any supported per-cell assignment."""
    if isinstance(assignment, (Matching, AnchorAssignment)):
        return assignment.assigned
    return dict(assignment)


def _truth_map(gts: Mapping[Cell, CellTruth] | Sequence[CellTruth]) -> dict[Cell, CellTruth]:
    if isinstance(gts, Mapping):
        return dict(gts)
    return {truth.cell: truth for truth in gts}


def _build_targets(
    preds: PredictionGrid,
    gts: Mapping[Cell, CellTruth] | Sequence[CellTruth],
    assignment: Mapping[Cell, CellAssignment],
) -> _Targets:
    truths = _truth_map(gts)
    shape = preds.confidence.shape
    mask = np.zeros(shape, dtype=bool)
    geometry = np.zeros(preds.geometry.shape)
    onehot = np.zeros(preds.labels.shape)

    for cell, cell_assignment in assignment.items():
        pairs = assignment_pairs(cell_assignment)
        if not pairs:
            continue
        truth = truths.get(tuple(cell))
        row, col = cell
        if truth is None or not (0 <= row < shape[0] and 0 <= col < shape[1]):
            raise InvalidAssignmentError(
                f"Assignment refers to cell {cell} without ground truth",
                INVALID_ASSIGNMENT_ERROR_CODE,
            )
        if len(set(pairs.values())) != len(pairs):
            raise InvalidAssignmentError(
                f"A ground-truth segment of cell {cell} is assigned twice",
                INVALID_ASSIGNMENT_ERROR_CODE,
            )
        for predictor, gt in pairs.items():
            if not 0 <= predictor < preds.P or not 0 <= gt < len(truth.geometry):
                raise InvalidAssignmentError(
                    f"Pair ({predictor}, {gt}) out of range in cell {cell}",
                    INVALID_ASSIGNMENT_ERROR_CODE,
                )
            label = int(truth.labels[gt])
            if not 0 <= label < preds.num_classes:
                raise InvalidAssignmentError(
                    f"Label {label} exceeds the {preds.num_classes} label outputs",
                    INVALID_ASSIGNMENT_ERROR_CODE,
                )
            mask[row, col, predictor] = True
            geometry[row, col, predictor] = truth.geometry[gt]
            onehot[row, col, predictor, label] = 1.0
    return _Targets(mask=mask, geometry=geometry, onehot=onehot)


def _fsum(values: np.ndarray) -> float:
    return math.fsum(np.ravel(values).tolist())


def _evaluate(
    preds: PredictionGrid, targets: _Targets, w: LossWeights
) -> tuple[LossBreakdown, LossGradients]:
    mask = targets.mask
    diff = np.where(mask[..., None], preds.geometry - targets.geometry, 0.0)
    distance = np.linalg.norm(diff, axis=-1)

    confidence = preds.confidence
    conf_terms = np.where(
        mask, w.w_conf1 * (confidence - 1.0) ** 2, w.w_conf0 * confidence**2
    )
    label_diff = np.where(mask[..., None], preds.labels - targets.onehot, 0.0)
    cls_terms = (label_diff**2).sum(axis=-1)

    geom = _fsum(distance)
    conf = _fsum(conf_terms)
    cls = _fsum(cls_terms)
    breakdown = LossBreakdown(
        total=w.w_geom * geom + conf + w.w_class * cls,
        geom=geom,
        conf=conf,
        cls=cls,
        per_predictor=w.w_geom * distance + conf_terms + w.w_class * cls_terms,
    )

    safe = np.where(distance > 0.0, distance, 1.0)
    geometry_grad = np.where(
        (distance > 0.0)[..., None], w.w_geom * diff / safe[..., None], 0.0
    )
    confidence_grad = np.where(
        mask, 2.0 * w.w_conf1 * (confidence - 1.0), 2.0 * w.w_conf0 * confidence
    )
    gradients = LossGradients(
        geometry=geometry_grad,
        labels=2.0 * w.w_class * label_diff,
        confidence=confidence_grad,
    )
    return breakdown, gradients


def loss_and_gradients(
    preds: PredictionGrid,
    gts: Mapping[Cell, CellTruth] | Sequence[CellTruth],
    assignment: Mapping[Cell, CellAssignment],
    w: LossWeights,
) -> tuple[LossBreakdown, LossGradients]:
    """Loss value and gradients in a single pass; see :func:`composite_loss`."""
    return _evaluate(preds, _build_targets(preds, gts, assignment), w)


def composite_loss(
    preds: PredictionGrid,
    gts: Mapping[Cell, CellTruth] | Sequence[CellTruth],
    assignment: Mapping[Cell, CellAssignment],
    w: LossWeights,
) -> LossBreakdown:
    """
    Evaluates the weighted loss of one image's predictions.

    Args:
        preds (PredictionGrid): Activated head output (absolute geometry).
        gts (Mapping[Cell, CellTruth] | Sequence[CellTruth]): Per-cell truth in
            the same representation as ``preds``.
        assignment (Mapping[Cell, CellAssignment]): Per-cell Matching,
            AnchorAssignment or predictor -> gt map. Cells absent from the map
            have no assigned predictor.
        w (LossWeights): Term weights.

    Returns:
        LossBreakdown: Total, its three terms and per-predictor shares.

    Raises:
        InvalidAssignmentError: A pair refers to a missing predictor, gt or
            label, or a gt is assigned twice.
    """
    breakdown, _ = loss_and_gradients(preds, gts, assignment, w)
    return breakdown


def loss_gradients(
    preds: PredictionGrid,
    gts: Mapping[Cell, CellTruth] | Sequence[CellTruth],
    assignment: Mapping[Cell, CellAssignment],
    w: LossWeights,
) -> LossGradients:
    """
    Exact partial derivatives of :func:`composite_loss`'s total.

    Per predictor the block holds 4 geometry, C label and 1 confidence values.
    Geometry and label gradients of unassigned predictors are 0.

    Raises:
        InvalidAssignmentError: As :func:`composite_loss`.
    """
    _, gradients = loss_and_gradients(preds, gts, assignment, w)
    return gradients
