"""
Per-Cell Optimal Matching Module

Minimum-cost one-to-one assignment between the P predictors of a cell and its
ground-truth segments, used by dynamic-assignment training and by evaluation.
The solver is scipy's ``linear_sum_assignment`` applied to a square matrix
padded with 2 x the largest entry.
"""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from src.core.custom_classes import SubscriptableDataclass
from src.core.constants import (
    INVALID_COST_MATRIX_ERROR_CODE,
    REPRESENTATION_MISMATCH_ERROR_CODE,
)
from src.services.gridline.exceptions import (
    InvalidCostMatrixError,
    RepresentationMismatchError,
)
from src.services.gridline.geom import (
    CellSegment,
    Space,
    representation_of,
    segment_coordinates,
)


@dataclass(kw_only=True, frozen=True)
class Matching(SubscriptableDataclass):
    """
    A one-to-one matching.

    Attributes:
        pairs (tuple[tuple[int, int], ...]): (predictor, gt) pairs, sorted by
            predictor index.
        total_cost (float): Sum of the matched cost entries.
    """

    pairs: tuple[tuple[int, int], ...] = ()
    total_cost: float = 0.0

    @property
    def assigned(self) -> dict[int, int]:
        """Predictor -> gt map."""
        return dict(self.pairs)


def hungarian(c: np.ndarray | Sequence[Sequence[float]]) -> Matching:
    """
    Minimum total cost matching of a (possibly rectangular) cost matrix.

    Rows are predictors, columns ground-truth segments. The result matches
    min(rows, cols) pairs, listed in ascending row order. Among several
    equal-cost optima the one returned is whichever scipy's
    ``linear_sum_assignment`` finds on the zero-padded square matrix; the
    choice is deterministic for a given matrix but not otherwise canonical.

    Args:
        c (np.ndarray | Sequence[Sequence[float]]): Finite, non-negative costs.

    Returns:
        Matching: Optimal pairs and their total cost.

    Raises:
        InvalidCostMatrixError: NaN or infinite entries, or a matrix that is
            not two-dimensional.

    Examples:
        >>> hungarian([[5, 2, 7]])
        Matching(pairs=((0, 1),), total_cost=2.0)
    """
    cost = np.asarray(c, dtype=float)
    if cost.ndim != 2:
        raise InvalidCostMatrixError(
            f"Cost matrix must be 2-D, got shape {cost.shape}",
            INVALID_COST_MATRIX_ERROR_CODE,
        )
    if not np.all(np.isfinite(cost)):
        raise InvalidCostMatrixError(
            "Cost matrix holds NaN or infinite entries", INVALID_COST_MATRIX_ERROR_CODE
        )
    rows, cols = cost.shape
    if rows == 0 or cols == 0:
        return Matching()

    size = max(rows, cols)
    padding = 2.0 * float(cost.max()) if cost.max() > 0 else 1.0
    square = np.full((size, size), padding)
    square[:rows, :cols] = cost
    row_ind, col_ind = linear_sum_assignment(square)

    pairs = tuple(
        (int(r), int(k)) for r, k in zip(row_ind, col_ind) if r < rows and k < cols
    )
    return Matching(
        pairs=pairs, total_cost=math.fsum(float(cost[r, k]) for r, k in pairs)
    )


def _coordinates(segments: Sequence, representation: Space) -> np.ndarray:
    return np.array(
        [segment_coordinates(s, representation) for s in segments], dtype=float
    ).reshape(len(segments), 4)


def dynamic_assign(preds: Sequence, gts: Sequence) -> Matching:
    """
    Matches a cell's predictions to its ground truth by geometry distance.

    The cost of (i, j) is the Euclidean distance between the geometries in
    the shared representation space; confidence and labels are not part of
    the cost.

    Args:
        preds (Sequence): The P predictions (CellSegment or geometry).
        gts (Sequence): Ground truth of the same cell.

    Returns:
        Matching: The optimal matching; empty when ``gts`` is empty.

    Raises:
        RepresentationMismatchError: Predictions and ground truth use
            different representations.
    """
    if not preds or not gts:
        return Matching()
    representations = {
        representation_of(s.geometry if isinstance(s, CellSegment) else s)
        for s in (*preds, *gts)
    }
    if len(representations) != 1:
        raise RepresentationMismatchError(
            f"Mixed representations {sorted(representations)}",
            REPRESENTATION_MISMATCH_ERROR_CODE,
        )
    representation = representations.pop()
    return hungarian(
        cdist(_coordinates(preds, representation), _coordinates(gts, representation))
    )


def match_coordinates(pred_coords: np.ndarray, gt_coords: np.ndarray) -> Matching:
    """
    Array form of :func:`dynamic_assign` used inside the training loop.

    Args:
        pred_coords (np.ndarray): (P, 4) predicted geometry.
        gt_coords (np.ndarray): (G, 4) ground truth in the same layout.
    """
    if len(pred_coords) == 0 or len(gt_coords) == 0:
        return Matching()
    return hungarian(cdist(pred_coords, gt_coords))
