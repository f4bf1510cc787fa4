"""
Evaluation Metrics Module

Scores predictor grids against ground truth the way detection results are
reported: confidence-gated retrieval counts, rates, mean absolute errors of
matched pairs, the duplicate-assignment statistic and circular uv-gate sweeps.

Key Features:
    - Per-predictor TP/FP/TN/FN under dynamic (Hungarian) or static anchor
      association, with a configurable confidence threshold
    - Recall, precision, F1 and accuracy with 0 for empty denominators
    - MAE of endpoints, midpoints and lengths in pixels; absent without TPs
    - Gate sweep with greedy one-to-one nearest-midpoint matching, so F1
      never decreases as the radius grows
    - JSON, aligned-text table and CSV renderings of the report
"""

import io
import csv
import math
import logging
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from src.core.custom_classes import SubscriptableDataclass
from src.core.utils import create_display_table, render_display_table
from src.core.constants import (
    GRIDLINE_APP_NAME,
    DEFAULT_CONFIDENCE_THRESHOLD,
    DEFAULT_GATE_RADII,
    DYNAMIC_ASSIGNMENT_LABEL,
    INVALID_ASSIGNMENT_ERROR_CODE,
    SHAPE_MISMATCH_ERROR_CODE,
)
from src.services.gridline.anchors import (
    AnchorSet,
    AssignmentPolicy,
    assign_to_anchors,
    ma_statistic,
)
from src.services.gridline.exceptions import InvalidAssignmentError, ShapeMismatchError
from src.services.gridline.geom import (
    CellSegment,
    CellTruth,
    Grid,
    ImageSegment,
    Point2,
    PredictionGrid,
    Space,
    cell_truths,
    group_by_cell,
    one_hot,
    project_coordinates,
    segment_coordinates,
)
from src.services.gridline.matching import match_coordinates
from src.services.gridline.utils import handle_gridline_exceptions

LOGGER = logging.getLogger(GRIDLINE_APP_NAME)

Cell = tuple[int, int]
AssociationRule = str | AnchorSet

TABLE_COLUMNS = ["F1", "Re", "Pr", "Acc", "Cf", "CfTP", "‖·‖", "MP", "L", "MA"]
GATE_COLUMNS = ["radius", "f1", "recall", "precision", "cf", "cf_tp", "mae_cart", "mae_mp", "mae_len"]


@dataclass(kw_only=True, frozen=True)
class OutcomeCounts(SubscriptableDataclass):
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "OutcomeCounts") -> "OutcomeCounts":
        return OutcomeCounts(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            tn=self.tn + other.tn,
            fn=self.fn + other.fn,
        )


@dataclass(kw_only=True, frozen=True)
class MatchedPair(SubscriptableDataclass):
    """A true positive: predictor ``predictor`` of ``cell`` associated with gt ``gt_index``."""

    cell: Cell
    predictor: int
    gt_index: int
    pred: ImageSegment
    gt: ImageSegment


@dataclass(kw_only=True, frozen=True)
class ClassifiedOutcomes:
    """
    Outcome of :func:`classify_outcomes`.

    Attributes:
        counts (OutcomeCounts): Retrieval counts over every predictor.
        pairs (tuple[MatchedPair, ...]): True-positive pairs in image pixels.
        confidence_deviations (tuple[float, ...]): Per predictor, |c - 1| if
            it is associated with a gt, else |c|.
    """

    counts: OutcomeCounts
    pairs: tuple[MatchedPair, ...] = ()
    confidence_deviations: tuple[float, ...] = field(default=(), repr=False)


@dataclass(kw_only=True, frozen=True)
class RetrievalMetrics(SubscriptableDataclass):
    recall: float
    precision: float
    f1: float
    accuracy: float


@dataclass(kw_only=True, frozen=True)
class MaeMetrics(SubscriptableDataclass):
    """Error columns; ``None`` marks a column without any sample."""

    mae_cart: float | None = None
    mae_mp: float | None = None
    mae_len: float | None = None
    cf_tp: float | None = None
    cf: float | None = None


@dataclass(kw_only=True, frozen=True)
class GatePoint(SubscriptableDataclass):
    """Scores of one gate radius (pixels)."""

    radius: float
    f1: float
    recall: float
    precision: float
    cf: float | None
    cf_tp: float | None
    mae_cart: float | None
    mae_mp: float | None
    mae_len: float | None


def _image_segment(
    cart: np.ndarray,
    cell: Cell,
    cell_size: int,
    confidence: float,
    label_probs: Sequence[float],
) -> ImageSegment:
    row, col = cell
    su, sv, eu, ev = cart
    return ImageSegment(
        start=Point2((col + su) * cell_size, (row + sv) * cell_size),
        end=Point2((col + eu) * cell_size, (row + ev) * cell_size),
        confidence=float(confidence),
        label_probs=tuple(float(p) for p in label_probs),
        cell=cell,
    )


def _truth_map(
    gts: Mapping[Cell, CellTruth] | Sequence[CellSegment] | Sequence[CellTruth],
    representation: Space,
) -> dict[Cell, CellTruth]:
    if isinstance(gts, Mapping):
        return dict(gts)
    if gts and isinstance(gts[0], CellSegment):
        gts = cell_truths(gts, representation)
    return {truth.cell: truth for truth in gts}


def _cell_association(
    preds: PredictionGrid,
    truth: CellTruth,
    rule: AssociationRule,
    policy: AssignmentPolicy,
) -> dict[int, int]:
    row, col = truth.cell
    if isinstance(rule, AnchorSet):
        coords = project_coordinates(truth.geometry, preds.representation, rule.space)
        return assign_to_anchors(list(coords), rule, policy).assigned
    return match_coordinates(preds.geometry[row, col], truth.geometry).assigned


def classify_outcomes(
    preds: PredictionGrid,
    gts: Mapping[Cell, CellTruth] | Sequence[CellSegment] | Sequence[CellTruth],
    rule: AssociationRule = DYNAMIC_ASSIGNMENT_LABEL,
    threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
    policy: AssignmentPolicy = "greedy",
) -> ClassifiedOutcomes:
    """
    Classifies every predictor of an image as TP, FP, TN or FN.

    A predictor associated with a gt is TP when its confidence exceeds
    ``threshold`` and FN otherwise; an unassociated predictor is FP when its
    confidence exceeds ``threshold`` and TN otherwise. Association is the
    Hungarian matching on the predicted geometry (``rule="dynamic"``) or the
    static assignment to an AnchorSet.

    Args:
        preds (PredictionGrid): Predictions of one image.
        gts: Ground truth of the same grid, as per-cell truths or as
            discretized CellSegments.
        rule (str | AnchorSet, optional): ``dynamic`` or the anchors.
        threshold (float, optional): Confidence threshold. Defaults to 0.5.
        policy (AssignmentPolicy, optional): Static assignment policy.

    Returns:
        ClassifiedOutcomes: Counts, TP pairs in image pixels and confidence
        deviations of all predictors.

    Examples:
        >>> preds = PredictionGrid.empty(Grid(rows=1, cols=1, cell_size=8), 2, 1, "mr")
        >>> classify_outcomes(preds, []).counts
        OutcomeCounts(tp=0, fp=0, tn=2, fn=0)
    """
    if not isinstance(rule, AnchorSet) and rule != DYNAMIC_ASSIGNMENT_LABEL:
        raise InvalidAssignmentError(
            f"Unknown association rule '{rule}'", INVALID_ASSIGNMENT_ERROR_CODE
        )
    truths = _truth_map(gts, preds.representation)
    cart_preds = preds.clamped_cart()
    size = preds.grid.cell_size

    associations: dict[Cell, dict[int, int]] = {
        cell: _cell_association(preds, truth, rule, policy) for cell, truth in truths.items()
    }

    tp = fp = tn = fn = 0
    pairs: list[MatchedPair] = []
    deviations: list[float] = []
    for row, col, k in np.ndindex(*preds.confidence.shape):
        confidence = float(preds.confidence[row, col, k])
        positive = confidence > threshold
        gt_index = associations.get((row, col), {}).get(k)
        if gt_index is None:
            deviations.append(abs(confidence))
            fp, tn = (fp + 1, tn) if positive else (fp, tn + 1)
            continue
        deviations.append(abs(confidence - 1.0))
        if not positive:
            fn += 1
            continue
        tp += 1
        truth = truths[(row, col)]
        gt_label = int(truth.labels[gt_index])
        gt_cart = project_coordinates(
            truth.geometry[gt_index], preds.representation, Space.CART
        )
        pairs.append(
            MatchedPair(
                cell=(row, col),
                predictor=k,
                gt_index=gt_index,
                pred=_image_segment(
                    cart_preds[row, col, k],
                    (row, col),
                    size,
                    confidence,
                    preds.labels[row, col, k],
                ),
                gt=_image_segment(
                    gt_cart,
                    (row, col),
                    size,
                    1.0,
                    one_hot(gt_label, max(preds.num_classes, gt_label + 1)),
                ),
            )
        )
    return ClassifiedOutcomes(
        counts=OutcomeCounts(tp=tp, fp=fp, tn=tn, fn=fn),
        pairs=tuple(pairs),
        confidence_deviations=tuple(deviations),
    )


def retrieval_metrics(c: OutcomeCounts) -> RetrievalMetrics:
    """
    Recall, precision, F1 and accuracy of a count table.

    A zero denominator yields 0.

    Examples:
        >>> round(retrieval_metrics(OutcomeCounts(tp=45, fp=55, tn=845, fn=55)).f1, 4)
        0.45
    """
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    accuracy = (c.tp + c.tn) / c.total if c.total else 0.0
    return RetrievalMetrics(recall=recall, precision=precision, f1=f1, accuracy=accuracy)


def _mean(values: Iterable[float]) -> float | None:
    values = list(values)
    return math.fsum(values) / len(values) if values else None


def mae_metrics(
    pairs: Sequence[MatchedPair | tuple[ImageSegment, ImageSegment]],
    confidence_deviations: Sequence[float] | None = None,
) -> MaeMetrics:
    """
    Mean absolute errors of true-positive pairs in pixels.

    ``mae_cart`` averages, per pair, the start-to-start and end-to-end
    distances; ``mae_mp`` is the midpoint distance and ``mae_len`` the absolute
    length difference. ``cf_tp`` is the mean |c - 1| over the pairs and ``cf``
    the mean of ``confidence_deviations`` (all predictors).

    Returns:
        MaeMetrics: Columns without samples are ``None``.
    """
    segments = [(p.pred, p.gt) if isinstance(p, MatchedPair) else tuple(p) for p in pairs]
    cart, mid, length, conf = [], [], [], []
    for pred, gt in segments:
        start = np.linalg.norm(pred.start.as_array() - gt.start.as_array())
        end = np.linalg.norm(pred.end.as_array() - gt.end.as_array())
        cart.append(float(start + end) / 2.0)
        mid.append(float(np.linalg.norm(pred.midpoint - gt.midpoint)))
        length.append(abs(pred.length - gt.length))
        conf.append(abs(pred.confidence - 1.0))
    return MaeMetrics(
        mae_cart=_mean(cart),
        mae_mp=_mean(mid),
        mae_len=_mean(length),
        cf_tp=_mean(conf),
        cf=_mean(confidence_deviations) if confidence_deviations is not None else None,
    )


def _gate_order(preds: Sequence[ImageSegment], gts: Sequence[ImageSegment]):
    if not preds or not gts:
        return np.zeros((len(preds), len(gts))), []
    distances = cdist(
        np.array([p.midpoint for p in preds]), np.array([g.midpoint for g in gts])
    )
    pred_index, gt_index = np.indices(distances.shape)
    order = np.lexsort((gt_index.ravel(), pred_index.ravel(), distances.ravel()))
    return distances, [np.unravel_index(int(i), distances.shape) for i in order]


@dataclass(kw_only=True, frozen=True)
class _GateOutcome:
    tp: int
    fp: int
    fn: int
    pairs: tuple[tuple[ImageSegment, ImageSegment], ...]
    deviations: tuple[float, ...]


def _gate_match(
    preds: Sequence[ImageSegment],
    gts: Sequence[ImageSegment],
    radius: float,
    threshold: float,
    distances: np.ndarray,
    order: list,
) -> _GateOutcome:
    positive = [p.confidence > threshold for p in preds]
    pred_used: set[int] = set()
    gt_used: set[int] = set()
    pairs = []
    for i, j in order:
        if distances[i, j] > radius:
            break
        if not positive[i] or i in pred_used or j in gt_used:
            continue
        pred_used.add(int(i))
        gt_used.add(int(j))
        pairs.append((preds[i], gts[j]))
    deviations = tuple(
        abs(p.confidence - 1.0) if i in pred_used else abs(p.confidence)
        for i, p in enumerate(preds)
    )
    tp = len(pairs)
    return _GateOutcome(
        tp=tp,
        fp=sum(positive) - tp,
        fn=len(gts) - tp,
        pairs=tuple(pairs),
        deviations=deviations,
    )


def gate_sweep_images(
    images: Sequence[tuple[Sequence[ImageSegment], Sequence[ImageSegment]]],
    radii: Sequence[float] = DEFAULT_GATE_RADII,
    threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
) -> list[GatePoint]:
    """
    :func:`gate_sweep` over several images, pooling counts and errors.

    Args:
        images: Per image, (predictions, ground truth) in pixels.
        radii (Sequence[float], optional): Gate radii in pixels.
        threshold (float, optional): Confidence threshold of positives.

    Returns:
        list[GatePoint]: One point per radius, in the given order.
    """
    prepared = [(preds, gts, *_gate_order(preds, gts)) for preds, gts in images]
    curve = []
    for radius in radii:
        outcomes = [
            _gate_match(preds, gts, radius, threshold, distances, order)
            for preds, gts, distances, order in prepared
        ]
        counts = OutcomeCounts(
            tp=sum(o.tp for o in outcomes),
            fp=sum(o.fp for o in outcomes),
            fn=sum(o.fn for o in outcomes),
        )
        rates = retrieval_metrics(counts)
        errors = mae_metrics(
            [pair for o in outcomes for pair in o.pairs],
            [d for o in outcomes for d in o.deviations],
        )
        curve.append(
            GatePoint(
                radius=float(radius),
                f1=rates.f1,
                recall=rates.recall,
                precision=rates.precision,
                cf=errors.cf,
                cf_tp=errors.cf_tp,
                mae_cart=errors.mae_cart,
                mae_mp=errors.mae_mp,
                mae_len=errors.mae_len,
            )
        )
    return curve


def gate_sweep(
    preds: Sequence[ImageSegment],
    gts: Sequence[ImageSegment],
    radii: Sequence[float] = DEFAULT_GATE_RADII,
    threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
) -> list[GatePoint]:
    """
    Scores predictions with a circular gate in image coordinates.

    For each radius, positive predictions (confidence > ``threshold``) and
    ground-truth segments are paired greedily by increasing midpoint distance,
    each consumed at most once, as long as the distance is at most the radius.
    Paired predictions are TP; the remaining positives are FP and the remaining
    gts FN. A larger radius only appends pairs to the greedy order, so F1 never
    decreases with the radius.

    Args:
        preds (Sequence[ImageSegment]): Predictions of one image.
        gts (Sequence[ImageSegment]): Ground truth of the image.
        radii (Sequence[float], optional): Radii in pixels.
        threshold (float, optional): Confidence threshold.

    Returns:
        list[GatePoint]: One point per radius.
    """
    return gate_sweep_images([(preds, gts)], radii, threshold)


@dataclass(kw_only=True, frozen=True)
class MetricsReport(SubscriptableDataclass):
    """
    Aggregated evaluation of a prediction set.

    The error columns are ``None`` when no true positive exists; ``ma`` is
    reported for anchor association only.
    """

    counts: OutcomeCounts
    recall: float
    precision: float
    f1: float
    accuracy: float
    mae_cart: float | None = None
    mae_mp: float | None = None
    mae_len: float | None = None
    cf: float | None = None
    cf_tp: float | None = None
    ma: float | None = None
    label_accuracy: float | None = None
    threshold: float = DEFAULT_CONFIDENCE_THRESHOLD
    gate_curve: tuple[GatePoint, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        document = super().to_dict()
        document["counts"] = self.counts.to_dict()
        document["gate_curve"] = [point.to_dict() for point in self.gate_curve]
        return document

    def table_row(self) -> list[str]:
        def fmt(value: float | None, digits: int = 3) -> str:
            return "-" if value is None else f"{value:.{digits}f}"

        return [
            fmt(self.f1),
            fmt(self.recall),
            fmt(self.precision),
            fmt(self.accuracy),
            fmt(self.cf),
            fmt(self.cf_tp),
            fmt(self.mae_cart, 2),
            fmt(self.mae_mp, 2),
            fmt(self.mae_len, 2),
            fmt(None if self.ma is None else 100.0 * self.ma, 1),
        ]

    def render_text(self, title: str = "Evaluation") -> str:
        return render_display_table(title, TABLE_COLUMNS, [self.table_row()])

    def display(self, title: str = "Evaluation") -> None:
        create_display_table(title, "green", TABLE_COLUMNS, [self.table_row()])

    def gate_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(GATE_COLUMNS)
        for point in self.gate_curve:
            writer.writerow(["" if point[c] is None else point[c] for c in GATE_COLUMNS])
        return buffer.getvalue()


def grid_from_segments(
    segments: Sequence[CellSegment],
    grid: Grid,
    num_classes: int,
    representation: Space | str = Space.MR,
    P: int | None = None,  # pylint: disable=invalid-name
) -> PredictionGrid:
    """
    Packs cell segments into a predictor grid, one slot per segment.

    Unused slots have zero confidence. ``P`` defaults to the largest number of
    segments found in a cell (at least 1).

    Raises:
        ShapeMismatchError: A cell holds more segments than ``P``.
    """
    representation = Space(representation)
    cells = group_by_cell(segments)
    width = max([len(members) for members in cells.values()] + [1])
    P = width if P is None else P  # pylint: disable=invalid-name
    if width > P:
        raise ShapeMismatchError(
            f"A cell holds {width} segments but only {P} slots exist",
            SHAPE_MISMATCH_ERROR_CODE,
        )
    pred = PredictionGrid.empty(grid, P, num_classes, representation)
    for (row, col), members in cells.items():
        for k, segment in enumerate(members):
            pred.geometry[row, col, k] = segment_coordinates(segment, representation)
            probs = np.zeros(num_classes)
            probs[: len(segment.label_probs)] = segment.label_probs
            pred.labels[row, col, k] = probs
            pred.confidence[row, col, k] = segment.confidence
    return pred


@handle_gridline_exceptions("evaluate")
def evaluate(
    images: Sequence[tuple[PredictionGrid, Sequence[CellSegment]]],
    rule: AssociationRule = DYNAMIC_ASSIGNMENT_LABEL,
    threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
    radii: Sequence[float] = DEFAULT_GATE_RADII,
    policy: AssignmentPolicy = "greedy",
) -> MetricsReport:
    """
    Evaluates a set of images and pools them into one report.

    Counts and pairs are pooled over images, which weights every image by its
    number of predictors.

    Args:
        images: Per image, the prediction grid and the discretized ground truth.
        rule (str | AnchorSet, optional): Association rule.
        threshold (float, optional): Confidence threshold.
        radii (Sequence[float], optional): Gate radii of the sweep.
        policy (AssignmentPolicy, optional): Static assignment policy.

    Returns:
        MetricsReport: The aggregated report with its gate curve.
    """
    counts = OutcomeCounts()
    pairs: list[MatchedPair] = []
    deviations: list[float] = []
    gated = []
    for preds, truth in images:
        outcome = classify_outcomes(preds, truth, rule, threshold, policy)
        counts = counts + outcome.counts
        pairs.extend(outcome.pairs)
        deviations.extend(outcome.confidence_deviations)
        image_preds = [
            _image_segment(
                np.asarray(segment_coordinates(s, Space.CART)),
                s.cell,
                preds.grid.cell_size,
                s.confidence,
                s.label_probs,
            )
            for s in preds.cell_segments()
        ]
        image_gts = [
            _image_segment(
                np.asarray(segment_coordinates(s, Space.CART)),
                s.cell,
                preds.grid.cell_size,
                s.confidence,
                s.label_probs,
            )
            for s in truth
        ]
        gated.append((image_preds, image_gts))

    rates = retrieval_metrics(counts)
    errors = mae_metrics(pairs, deviations)
    ma = None
    if isinstance(rule, AnchorSet) and any(truth for _, truth in images):
        ma = ma_statistic([truth for _, truth in images], rule, policy)
    label_accuracy = _mean(float(p.pred.label == p.gt.label) for p in pairs)

    report = MetricsReport(
        counts=counts,
        recall=rates.recall,
        precision=rates.precision,
        f1=rates.f1,
        accuracy=rates.accuracy,
        mae_cart=errors.mae_cart,
        mae_mp=errors.mae_mp,
        mae_len=errors.mae_len,
        cf=errors.cf,
        cf_tp=errors.cf_tp,
        ma=ma,
        label_accuracy=label_accuracy,
        threshold=threshold,
        gate_curve=tuple(gate_sweep_images(gated, radii, threshold)),
    )
    LOGGER.info(
        "Evaluated %d images: F1 %.4f, recall %.4f, precision %.4f",
        len(images),
        report.f1,
        report.recall,
        report.precision,
        extra={"counts": counts.to_dict()},
    )
    return report
