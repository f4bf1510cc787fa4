"""
Anchor Construction and Static Assignment Module

Anchors are fixed representative coordinates, one per predictor, from which the
head only has to predict a deviation. This module builds them (a uniform
lattice over the feature space, or k-means centroids of training segments) and
statically assigns ground-truth segments of a cell to anchors before training.

Key Features:
    - Uniform anchors in the Cart, MR, MP and Dir feature spaces
    - Deterministic Lloyd k-means with k-means++ seeding and empty cluster
      reseeding
    - Greedy globally-closest-first assignment with dropped (duplicate)
      accounting, plus the per-gt nearest-anchor policy
    - The multiple-assignment (MA) statistic over a dataset
    - JSON (de)serialization validated against anchor_set_schema_definition.json
"""

import math
import logging
import pathlib
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.cluster import kmeans_plusplus

from src.core.custom_classes import SubscriptableDataclass
from src.core.utils import load_file, validate_against_schema, write_json_atomic
from src.core.constants import (
    GRIDLINE_APP_NAME,
    KMEANS_MAX_ITERATIONS,
    KMEANS_TOLERANCE,
    UNIFORM_MR_MAX_DIRECTIONS,
    CELL_BOX_TOLERANCE,
    INVALID_ANCHOR_ERROR_CODE,
    INSUFFICIENT_DATA_ERROR_CODE,
)
from src.services.gridline.exceptions import InsufficientDataError, InvalidAnchorError
from src.services.gridline.geom import (
    CellSegment,
    SPACE_DIMENSIONS,
    Space,
    group_by_cell,
    mr_to_cart_array,
    segment_coordinates,
)

LOGGER = logging.getLogger(GRIDLINE_APP_NAME)

ANCHOR_SET_SCHEMA = "anchor_set_schema_definition.json"

AssignmentPolicy = Literal["greedy", "nearest"]

_SPACE_BOXES = {
    Space.MP: (np.zeros(2), np.ones(2)),
    Space.DIR: (-np.ones(2), np.ones(2)),
    Space.CART: (np.zeros(4), np.ones(4)),
    Space.MR: (np.array([0.0, 0.0, -1.0, -1.0]), np.ones(4)),
}


@dataclass(kw_only=True, frozen=True, eq=False)
class AnchorSet(SubscriptableDataclass):
    """
    Feature-space tag plus one coordinate vector per predictor.

    Attributes:
        space (Space): Feature space of the anchor coordinates.
        anchors (np.ndarray): (P, dim) coordinates, dim = 4 for Cart/MR and 2
            for MP/Dir.

    Raises:
        InvalidAnchorError: Empty set, wrong dimension, or a coordinate outside
            the space's valid box.
    """

    space: Space
    anchors: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "space", Space(self.space))
        anchors = np.atleast_2d(np.asarray(self.anchors, dtype=float))
        dim = SPACE_DIMENSIONS[self.space]
        if anchors.shape[0] < 1 or anchors.shape[1] != dim:
            raise InvalidAnchorError(
                f"Anchor set for '{self.space}' must be (P>=1, {dim}), got {anchors.shape}",
                INVALID_ANCHOR_ERROR_CODE,
            )
        low, high = _SPACE_BOXES[self.space]
        if (
            not np.all(np.isfinite(anchors))
            or np.any(anchors < low - CELL_BOX_TOLERANCE)
            or np.any(anchors > high + CELL_BOX_TOLERANCE)
        ):
            raise InvalidAnchorError(
                f"Anchor coordinates leave the '{self.space}' box",
                INVALID_ANCHOR_ERROR_CODE,
            )
        anchors = np.clip(anchors, low, high)
        anchors.flags.writeable = False
        object.__setattr__(self, "anchors", anchors)

    @property
    def P(self) -> int:  # pylint: disable=invalid-name
        return int(self.anchors.shape[0])

    def base_geometry(self, representation: Space | str) -> np.ndarray:
        """
        Expands the anchors to full (P, 4) segment geometry.

        MP anchors take the displacement (1, 0); Dir anchors take the midpoint
        (0.5, 0.5).

        Args:
            representation (Space | str): Cart or MR layout of the result.

        Returns:
            np.ndarray: (P, 4) geometry the predictors' offsets are added to.
        """
        representation = Space(representation)
        match self.space:
            case Space.CART:
                cart = self.anchors.copy()
                mr = None
            case Space.MR:
                mr = self.anchors.copy()
            case Space.MP:
                mr = np.hstack([self.anchors, np.tile([1.0, 0.0], (self.P, 1))])
            case Space.DIR:
                mr = np.hstack([np.tile([0.5, 0.5], (self.P, 1)), self.anchors])
        if mr is None:
            if representation == Space.CART:
                return cart
            s, e = cart[:, :2], cart[:, 2:]
            return np.hstack([(s + e) / 2.0, e - s])
        return mr if representation == Space.MR else mr_to_cart_array(mr)

    def to_dict(self) -> dict:
        return {
            "space": str(self.space),
            "P": self.P,
            "anchors": self.anchors.tolist(),
        }

    @classmethod
    def from_dict(cls, document: dict) -> "AnchorSet":
        """
        Builds an anchor set from its JSON document.

        Raises:
            jsonschema.ValidationError: Document does not match the schema.
            InvalidAnchorError: ``P`` disagrees with the number of anchors.
        """
        validate_against_schema(document, ANCHOR_SET_SCHEMA)
        if document["P"] != len(document["anchors"]):
            raise InvalidAnchorError(
                f"P={document['P']} but {len(document['anchors'])} anchors listed",
                INVALID_ANCHOR_ERROR_CODE,
            )
        return cls(space=Space(document["space"].lower()), anchors=document["anchors"])


def save_anchor_set(anchor_set: AnchorSet, filepath: str | pathlib.Path) -> pathlib.Path:
    return write_json_atomic(filepath, anchor_set.to_dict())


def load_anchor_set(filepath: str | pathlib.Path) -> AnchorSet:
    return AnchorSet.from_dict(load_file(filepath))


def _lattice_midpoints(count: int) -> np.ndarray:
    cols = math.ceil(math.sqrt(count))
    rows = math.ceil(count / cols)
    centers = [
        ((c + 0.5) / cols, (r + 0.5) / rows) for r in range(rows) for c in range(cols)
    ]
    return np.array(centers[:count], dtype=float)


def _unit_directions(count: int) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(count) / count
    directions = np.column_stack([np.cos(angles), np.sin(angles)])
    directions[np.abs(directions) < 1e-12] = 0.0
    return directions


def _fit_into_cell(mr: np.ndarray) -> np.ndarray:
    """Shortens each displacement so that m +- d/2 stays inside the unit cell."""
    m, d = mr[:, :2], mr[:, 2:]
    half = np.abs(d) / 2.0
    room = np.minimum(m, 1.0 - m)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(half > 0, room / half, np.inf)
    scale = np.minimum(1.0, ratio.min(axis=1, keepdims=True))
    return np.hstack([m, d * scale])


def uniform_anchors(space: Space | str, P: int) -> AnchorSet:  # pylint: disable=invalid-name
    """
    Builds an evenly distributed anchor set.

    - MP: the first P centers of a ceil(sqrt(P))-column lattice, row-major.
    - Dir: unit directions at angles 2*pi*k/P.
    - MR: ceil(P/A) lattice midpoints times A directions (A = min(P, 8)),
      midpoint-major, truncated to P.
    - Cart: the MR lattice as start/end points, displacements shortened to
      keep both endpoints inside the cell.

    Args:
        space (Space | str): Feature space.
        P (int): Number of predictors.

    Returns:
        AnchorSet: Deterministic for a given (space, P).

    Raises:
        InvalidAnchorError: If ``P`` < 1.

    Examples:
        >>> uniform_anchors("dir", 4).anchors.tolist()
        [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]
    """
    space = Space(space)
    if P < 1:
        raise InvalidAnchorError(
            f"At least one anchor is required, got P={P}", INVALID_ANCHOR_ERROR_CODE
        )
    if space == Space.MP:
        return AnchorSet(space=space, anchors=_lattice_midpoints(P))
    if space == Space.DIR:
        return AnchorSet(space=space, anchors=_unit_directions(P))

    directions_count = min(P, UNIFORM_MR_MAX_DIRECTIONS)
    midpoints = _lattice_midpoints(math.ceil(P / directions_count))
    directions = _unit_directions(directions_count)
    mr = np.array(
        [np.concatenate([m, d]) for m in midpoints for d in directions][:P],
        dtype=float,
    )
    if space == Space.MR:
        return AnchorSet(space=space, anchors=mr)
    return AnchorSet(space=space, anchors=mr_to_cart_array(_fit_into_cell(mr)))


@dataclass(kw_only=True, frozen=True, eq=False)
class KMeansResult:
    """
    Outcome of a Lloyd run.

    Attributes:
        centroids (np.ndarray): (k, dim) cluster centers.
        labels (np.ndarray): (n,) cluster index per point.
        inertia_history (tuple[float, ...]): Inertia after seeding and after
            every iteration; non-increasing.
        n_iter (int): Lloyd iterations performed.
    """

    centroids: np.ndarray
    labels: np.ndarray
    inertia_history: tuple[float, ...]
    n_iter: int

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1]


def _assign(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    distances = cdist(points, centroids, metric="sqeuclidean")
    labels = np.argmin(distances, axis=1)
    return labels, distances[np.arange(len(points)), labels]


def lloyd_kmeans(
    points: np.ndarray,
    k: int,
    seed: int,
    max_iterations: int = KMEANS_MAX_ITERATIONS,
    tolerance: float = KMEANS_TOLERANCE,
) -> KMeansResult:
    """
    Deterministic Lloyd k-means seeded with k-means++.

    Iteration stops when the inertia improves by less than ``tolerance`` or
    after ``max_iterations``. A cluster that loses all its points is reseeded
    to the point farthest from its current centroid.

    Args:
        points (np.ndarray): (n, dim) data.
        k (int): Number of clusters.
        seed (int): Seed of the k-means++ draw.

    Returns:
        KMeansResult: Centroids, labels and the inertia trace.

    Raises:
        InsufficientDataError: If k < 1 or there are fewer points than k.
    """
    points = np.asarray(points, dtype=float)
    if k < 1 or len(points) < k:
        raise InsufficientDataError(
            f"k-means needs at least k={k} points, got {len(points)}",
            INSUFFICIENT_DATA_ERROR_CODE,
        )
    centroids, _ = kmeans_plusplus(points, n_clusters=k, random_state=seed)
    labels, sq_distances = _assign(points, centroids)
    history = [float(math.fsum(sq_distances))]

    n_iter = 0
    for n_iter in range(1, max_iterations + 1):
        centroids = centroids.copy()
        taken: set[int] = set()
        for cluster in range(k):
            members = labels == cluster
            if np.any(members):
                centroids[cluster] = points[members].mean(axis=0)
        for cluster in range(k):
            if np.any(labels == cluster):
                continue
            order = np.argsort(-sq_distances, kind="stable")
            farthest = next(int(i) for i in order if int(i) not in taken)
            taken.add(farthest)
            centroids[cluster] = points[farthest]
            LOGGER.debug("Reseeded empty cluster %d to point %d", cluster, farthest)

        labels, sq_distances = _assign(points, centroids)
        history.append(float(math.fsum(sq_distances)))
        if history[-2] - history[-1] < tolerance:
            break

    return KMeansResult(
        centroids=centroids,
        labels=labels,
        inertia_history=tuple(history),
        n_iter=n_iter,
    )


def kmeans_anchors(
    segments: Sequence,
    k: int,
    space: Space | str,
    seed: int,
) -> AnchorSet:
    """
    Clusters training segments into ``k`` anchors in a feature space.

    Args:
        segments (Sequence): CellSegments or segment geometries.
        k (int): Number of anchors (predictors).
        space (Space | str): Feature space to cluster in.
        seed (int): k-means++ seed.

    Returns:
        AnchorSet: The ``k`` centroids.

    Raises:
        InsufficientDataError: Fewer segments than ``k``.
    """
    space = Space(space)
    points = np.array([segment_coordinates(s, space) for s in segments], dtype=float)
    if points.size == 0:
        points = np.empty((0, SPACE_DIMENSIONS[space]))
    result = lloyd_kmeans(points, k, seed)
    LOGGER.info(
        "k-means anchors: space=%s k=%d iterations=%d inertia=%.6g",
        space,
        k,
        result.n_iter,
        result.inertia,
        extra={"space": str(space), "k": k, "n_iter": result.n_iter},
    )
    return AnchorSet(space=space, anchors=result.centroids)


@dataclass(kw_only=True, frozen=True)
class AnchorAssignment(SubscriptableDataclass):
    """
    Static assignment of one cell's ground truth to anchors.

    Attributes:
        assigned (dict[int, int]): Anchor index -> ground-truth index.
        dropped (tuple[int, ...]): Ground-truth indices that got no anchor.
    """

    assigned: dict[int, int]
    dropped: tuple[int, ...] = ()

    @property
    def total(self) -> int:
        return len(self.assigned) + len(self.dropped)

    def pairs(self) -> list[tuple[int, int]]:
        """(predictor, gt) pairs ordered by predictor."""
        return sorted(self.assigned.items())


def _greedy_assignment(distances: np.ndarray) -> dict[int, int]:
    n_gts, n_anchors = distances.shape
    gt_free = np.ones(n_gts, dtype=bool)
    anchor_free = np.ones(n_anchors, dtype=bool)
    assigned: dict[int, int] = {}
    for _ in range(min(n_gts, n_anchors)):
        masked = np.where(gt_free[:, None] & anchor_free[None, :], distances, np.inf)
        gt, anchor = np.unravel_index(int(np.argmin(masked)), masked.shape)
        assigned[int(anchor)] = int(gt)
        gt_free[gt] = False
        anchor_free[anchor] = False
    return assigned


def _nearest_assignment(distances: np.ndarray) -> dict[int, int]:
    assigned: dict[int, int] = {}
    nearest = np.argmin(distances, axis=1)
    for gt in np.argsort(distances[np.arange(len(nearest)), nearest], kind="stable"):
        anchor = int(nearest[gt])
        if anchor not in assigned:
            assigned[anchor] = int(gt)
    return assigned


def assign_to_anchors(
    cell_gts: Sequence,
    a: AnchorSet,
    policy: AssignmentPolicy = "greedy",
) -> AnchorAssignment:
    """
    Statically assigns a cell's ground-truth segments to anchors.

    ``greedy`` repeatedly takes the closest (gt, anchor) pair among unassigned
    gts and free anchors, so a gt only drops out once every anchor is taken.
    ``nearest`` lets each gt compete only for its own closest anchor; the
    closest claimant wins and the others are dropped. Ties go to the lower
    gt index, then the lower anchor index.

    Args:
        cell_gts (Sequence): Segments of one cell (CellSegment or geometry).
        a (AnchorSet): Anchors; distances are measured in ``a.space``.
        policy (AssignmentPolicy, optional): ``greedy`` (default) or ``nearest``.

    Returns:
        AnchorAssignment: Anchor -> gt map plus the dropped gts.

    Examples:
        >>> anchors = uniform_anchors("mp", 1)
        >>> seg = SegmentMR(m=Point2(0.5, 0.5), d=Point2(1, 0))
        >>> assign_to_anchors([seg, seg], anchors)
        AnchorAssignment(assigned={0: 0}, dropped=(1,))
    """
    if not cell_gts:
        return AnchorAssignment(assigned={}, dropped=())
    coords = np.array([segment_coordinates(g, a.space) for g in cell_gts], dtype=float)
    distances = cdist(coords, a.anchors)
    if policy == "greedy":
        assigned = _greedy_assignment(distances)
    elif policy == "nearest":
        assigned = _nearest_assignment(distances)
    else:
        raise InvalidAnchorError(
            f"Unknown assignment policy '{policy}'", INVALID_ANCHOR_ERROR_CODE
        )
    kept = set(assigned.values())
    dropped = tuple(i for i in range(len(cell_gts)) if i not in kept)
    return AnchorAssignment(assigned=assigned, dropped=dropped)


def ma_statistic(
    dataset: Sequence[Sequence[CellSegment]],
    a: AnchorSet,
    policy: AssignmentPolicy = "greedy",
) -> float:
    """
    Average fraction of ground-truth segments dropped by static assignment.

    The dropped/total ratio is computed per image (over images holding at
    least one segment) and then averaged over the dataset.

    Args:
        dataset (Sequence[Sequence[CellSegment]]): Per image, the discretized
            ground truth.
        a (AnchorSet): Anchors.
        policy (AssignmentPolicy, optional): Assignment policy.

    Returns:
        float: MA in [0, 1].

    Raises:
        InsufficientDataError: No image holds a segment.
    """
    ratios = []
    for image_segments in dataset:
        if not image_segments:
            continue
        dropped = sum(
            len(assign_to_anchors(members, a, policy).dropped)
            for members in group_by_cell(image_segments).values()
        )
        ratios.append(dropped / len(image_segments))
    if not ratios:
        raise InsufficientDataError(
            "MA needs at least one ground-truth segment", INSUFFICIENT_DATA_ERROR_CODE
        )
    return math.fsum(ratios) / len(ratios)
