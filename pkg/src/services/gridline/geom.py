"""
Polyline and Cell Geometry Module

This module holds the geometric vocabulary of gridline: image-space polylines,
the cell grid laid over an image, the discretization of polylines into
cell-local line segments and the two segment parameterizations used by the
predictor head.

The module defines the following main components:
    - Point2, Polyline, Grid: image-space primitives (pixels, top-left origin,
      v grows downward)
    - SegmentCart, SegmentMR: cell-local segments as start/end points or as
      midpoint plus displacement, both normalized so a cell side equals 1
    - CellSegment, ImageSegment: a hypothesis (geometry, label distribution,
      confidence) in cell and in image coordinates
    - split_polyline, cart_to_mr, mr_to_cart, cell_to_image, segment_distance

Key Features:
    - Exact splitting at cell borders; cut points are shared by neighbouring
      segments so that re-concatenation reproduces the input
    - Half-open cell ownership ([k, k+1) per axis) for points on borders
    - Vectorized conversions for (..., 4) coordinate arrays used in training

Example:
    grid = Grid(rows=8, cols=8, cell_size=8)
    line = Polyline(points=(Point2(0, 4), Point2(24, 4)), label=0)
    segments = split_polyline(line, grid)  # three border-to-border segments
"""

import math
from enum import StrEnum
from dataclasses import dataclass, field
from typing import Sequence, TypeAlias

import numpy as np

from src.core.custom_classes import SubscriptableDataclass
from src.core.constants import (
    CART_SPACE_LABEL,
    MR_SPACE_LABEL,
    MP_SPACE_LABEL,
    DIR_SPACE_LABEL,
    CELL_BOX_TOLERANCE,
    LABEL_SUM_TOLERANCE,
    POINT_SEPARATION_EPS,
    SLIVER_LENGTH_EPS,
    OUT_OF_BOUNDS_ERROR_CODE,
    OUT_OF_BOUNDS_ERROR_MESSAGE,
    EMPTY_RESULT_ERROR_CODE,
    EMPTY_RESULT_ERROR_MESSAGE,
    INVALID_GEOMETRY_ERROR_CODE,
    INVALID_GEOMETRY_ERROR_MESSAGE,
    CELL_OUT_OF_RANGE_ERROR_CODE,
    CELL_OUT_OF_RANGE_ERROR_MESSAGE,
    REPRESENTATION_MISMATCH_ERROR_CODE,
    SHAPE_MISMATCH_ERROR_CODE,
)
from src.services.gridline.exceptions import (
    EmptyResultError,
    InvalidGeometryError,
    OutOfBoundsError,
    RepresentationMismatchError,
    ShapeMismatchError,
)


class Space(StrEnum):
    """Coordinate spaces in which segments are compared or clustered."""

    CART = CART_SPACE_LABEL
    MR = MR_SPACE_LABEL
    MP = MP_SPACE_LABEL
    DIR = DIR_SPACE_LABEL


REPRESENTATIONS = (Space.CART, Space.MR)
SPACE_DIMENSIONS = {Space.CART: 4, Space.MR: 4, Space.MP: 2, Space.DIR: 2}


@dataclass(frozen=True)
class Point2:
    """A 2-D point; pixels in image space, cell units inside a cell."""

    u: float
    v: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise InvalidGeometryError(
                f"Non-finite point ({self.u}, {self.v})", INVALID_GEOMETRY_ERROR_CODE
            )

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v], dtype=float)


@dataclass(kw_only=True, frozen=True)
class Polyline(SubscriptableDataclass):
    """
    Ordered image-space vertices with an optional category label.

    The vertex order encodes the direction of travel.

    Raises:
        InvalidGeometryError: Fewer than two points, or two consecutive points
            closer than 1e-9 px.
    """

    points: tuple[Point2, ...]
    label: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple(self.points))
        if len(self.points) < 2:
            raise InvalidGeometryError(
                "A polyline needs at least two points", INVALID_GEOMETRY_ERROR_CODE
            )
        arr = self.as_array()
        gaps = np.linalg.norm(np.diff(arr, axis=0), axis=1)
        if np.any(gaps <= POINT_SEPARATION_EPS):
            raise InvalidGeometryError(
                "Consecutive polyline points coincide", INVALID_GEOMETRY_ERROR_CODE
            )

    @classmethod
    def from_array(cls, points: np.ndarray | Sequence, label: int | None = None):
        """Builds a polyline from an (N, 2) array-like of pixel coordinates."""
        return cls(
            points=tuple(Point2(float(u), float(v)) for u, v in np.asarray(points)),
            label=label,
        )

    def as_array(self) -> np.ndarray:
        return np.array([[p.u, p.v] for p in self.points], dtype=float)

    def reversed(self) -> "Polyline":
        return Polyline(points=self.points[::-1], label=self.label)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.as_array(), axis=0), axis=1).sum())


@dataclass(kw_only=True, frozen=True)
class Grid(SubscriptableDataclass):
    """
    The rows x cols cell lattice covering an image of
    (cols * cell_size) x (rows * cell_size) pixels.
    """

    rows: int
    cols: int
    cell_size: int

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1 or self.cell_size < 1:
            raise InvalidGeometryError(
                f"Invalid grid {self.rows}x{self.cols} with cell size {self.cell_size}",
                INVALID_GEOMETRY_ERROR_CODE,
            )

    @classmethod
    def for_image(cls, width: int, height: int, cell_size: int) -> "Grid":
        """
        Builds the grid of an image.

        Raises:
            InvalidGeometryError: Image sides are not multiples of ``cell_size``.
        """
        if width % cell_size or height % cell_size:
            raise InvalidGeometryError(
                f"Image {width}x{height} is not divisible by cell size {cell_size}",
                INVALID_GEOMETRY_ERROR_CODE,
            )
        return cls(rows=height // cell_size, cols=width // cell_size, cell_size=cell_size)

    @property
    def width(self) -> int:
        return self.cols * self.cell_size

    @property
    def height(self) -> int:
        return self.rows * self.cell_size

    def contains_cell(self, cell: tuple[int, int]) -> bool:
        row, col = cell
        return 0 <= row < self.rows and 0 <= col < self.cols


def _check_unit_box(values: np.ndarray, low: float, high: float, what: str) -> np.ndarray:
    if np.any(values < low - CELL_BOX_TOLERANCE) or np.any(
        values > high + CELL_BOX_TOLERANCE
    ):
        raise InvalidGeometryError(
            f"{INVALID_GEOMETRY_ERROR_MESSAGE}: {what}={values.tolist()}",
            INVALID_GEOMETRY_ERROR_CODE,
        )
    return np.clip(values, low, high)


@dataclass(kw_only=True, frozen=True)
class SegmentCart(SubscriptableDataclass):
    """Cell-local segment as an ordered pair of points in [0, 1]^2."""

    s: Point2
    e: Point2

    def __post_init__(self) -> None:
        s = _check_unit_box(self.s.as_array(), 0.0, 1.0, "s")
        e = _check_unit_box(self.e.as_array(), 0.0, 1.0, "e")
        object.__setattr__(self, "s", Point2(*map(float, s)))
        object.__setattr__(self, "e", Point2(*map(float, e)))

    def coords(self) -> np.ndarray:
        """Returns (s_u, s_v, e_u, e_v)."""
        return np.array([self.s.u, self.s.v, self.e.u, self.e.v], dtype=float)


@dataclass(kw_only=True, frozen=True)
class SegmentMR(SubscriptableDataclass):
    """Cell-local segment as midpoint m in [0, 1]^2 and displacement d = e - s."""

    m: Point2
    d: Point2

    def __post_init__(self) -> None:
        m = _check_unit_box(self.m.as_array(), 0.0, 1.0, "m")
        d = _check_unit_box(self.d.as_array(), -1.0, 1.0, "d")
        object.__setattr__(self, "m", Point2(*map(float, m)))
        object.__setattr__(self, "d", Point2(*map(float, d)))

    def coords(self) -> np.ndarray:
        """Returns (m_u, m_v, d_u, d_v)."""
        return np.array([self.m.u, self.m.v, self.d.u, self.d.v], dtype=float)


Geometry: TypeAlias = SegmentCart | SegmentMR


def representation_of(geometry: Geometry) -> Space:
    return Space.CART if isinstance(geometry, SegmentCart) else Space.MR


@dataclass(kw_only=True, frozen=True)
class CellSegment(SubscriptableDataclass):
    """
    One cell-local line hypothesis: geometry, label distribution, confidence.

    Raises:
        InvalidGeometryError: Label probabilities negative or not summing to 1,
            or confidence outside [0, 1].
    """

    geometry: Geometry
    label_probs: tuple[float, ...] = (1.0,)
    confidence: float = 1.0
    cell: tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        probs = tuple(float(p) for p in self.label_probs)
        object.__setattr__(self, "label_probs", probs)
        object.__setattr__(self, "cell", tuple(int(c) for c in self.cell))
        if any(p < 0 for p in probs) or abs(math.fsum(probs) - 1.0) > LABEL_SUM_TOLERANCE:
            raise InvalidGeometryError(
                f"Label distribution {probs} is not a probability vector",
                INVALID_GEOMETRY_ERROR_CODE,
            )
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidGeometryError(
                f"Confidence {self.confidence} outside [0, 1]",
                INVALID_GEOMETRY_ERROR_CODE,
            )

    @property
    def label(self) -> int:
        return int(np.argmax(self.label_probs))


@dataclass(kw_only=True, frozen=True)
class ImageSegment(SubscriptableDataclass):
    """A segment in image pixels, carrying the hypothesis attributes along."""

    start: Point2
    end: Point2
    confidence: float = 1.0
    label_probs: tuple[float, ...] = (1.0,)
    cell: tuple[int, int] | None = None

    def coords(self) -> np.ndarray:
        return np.array(
            [self.start.u, self.start.v, self.end.u, self.end.v], dtype=float
        )

    @property
    def midpoint(self) -> np.ndarray:
        return (self.start.as_array() + self.end.as_array()) / 2.0

    @property
    def direction(self) -> np.ndarray:
        return self.end.as_array() - self.start.as_array()

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.direction))

    @property
    def angle(self) -> float:
        """Directed orientation in (-pi, pi]; v grows downward."""
        du, dv = self.direction
        return math.atan2(dv, du)

    @property
    def label(self) -> int:
        return int(np.argmax(self.label_probs))


def one_hot(label: int | None, num_classes: int) -> tuple[float, ...]:
    """One-hot label distribution; ``None`` maps to category 0."""
    index = 0 if label is None else int(label)
    probs = [0.0] * num_classes
    probs[index] = 1.0
    return tuple(probs)


def cart_to_mr_array(coords: np.ndarray) -> np.ndarray:
    """Vectorized (..., 4) start/end coordinates to midpoint/displacement."""
    coords = np.asarray(coords, dtype=float)
    s, e = coords[..., :2], coords[..., 2:]
    return np.concatenate([(s + e) / 2.0, e - s], axis=-1)


def mr_to_cart_array(coords: np.ndarray) -> np.ndarray:
    """Vectorized (..., 4) midpoint/displacement coordinates to start/end."""
    coords = np.asarray(coords, dtype=float)
    m, d = coords[..., :2], coords[..., 2:]
    return np.concatenate([m - d / 2.0, m + d / 2.0], axis=-1)


def cart_to_mr(c: SegmentCart) -> SegmentMR:
    """
    Converts start/end points to midpoint m = (s + e) / 2 and d = e - s.

    Args:
        c (SegmentCart): A valid cell-local segment.

    Returns:
        SegmentMR: The same segment as midpoint and displacement.

    Examples:
        >>> cart_to_mr(SegmentCart(s=Point2(0, 0), e=Point2(1, 1)))
        SegmentMR(m=Point2(u=0.5, v=0.5), d=Point2(u=1.0, v=1.0))
    """
    mu, mv, du, dv = cart_to_mr_array(c.coords())
    return SegmentMR(m=Point2(mu, mv), d=Point2(du, dv))


def mr_to_cart(r: SegmentMR) -> SegmentCart:
    """
    Converts midpoint/displacement to start s = m - d/2 and end e = m + d/2.

    Endpoints within 1e-9 of the unit box are clamped onto it.

    Raises:
        InvalidGeometryError: An endpoint lies outside [-1e-9, 1 + 1e-9].
    """
    su, sv, eu, ev = mr_to_cart_array(r.coords())
    return SegmentCart(s=Point2(su, sv), e=Point2(eu, ev))


def project_coordinates(
    coords: np.ndarray, representation: Space, space: Space
) -> np.ndarray:
    """
    Expresses (..., 4) coordinates given in ``representation`` in ``space``.

    Args:
        coords (np.ndarray): Coordinates in Cart (s, e) or MR (m, d) layout.
        representation (Space): Layout of ``coords``; Cart or MR.
        space (Space): Target space; Cart and MR give 4 values, MP and Dir 2.

    Returns:
        np.ndarray: Array of shape (..., SPACE_DIMENSIONS[space]).
    """
    coords = np.asarray(coords, dtype=float)
    if representation not in REPRESENTATIONS:
        raise RepresentationMismatchError(
            f"{representation} is not a segment representation",
            REPRESENTATION_MISMATCH_ERROR_CODE,
        )
    mr = coords if representation == Space.MR else cart_to_mr_array(coords)
    match Space(space):
        case Space.MR:
            return mr
        case Space.CART:
            return coords if representation == Space.CART else mr_to_cart_array(coords)
        case Space.MP:
            return mr[..., :2]
        case Space.DIR:
            return mr[..., 2:]


def segment_coordinates(segment, space: Space) -> np.ndarray:
    """
    Coordinates of ``segment`` in ``space``.

    ``segment`` may be a SegmentCart, SegmentMR, CellSegment, or an array that
    is already expressed in ``space``.
    """
    if isinstance(segment, CellSegment):
        segment = segment.geometry
    if isinstance(segment, (SegmentCart, SegmentMR)):
        return project_coordinates(
            segment.coords(), representation_of(segment), Space(space)
        )
    return np.asarray(segment, dtype=float)


def segment_distance(a, b, space: Space | str) -> float:
    """
    Euclidean distance between two segments in a coordinate space.

    Cart compares (s, e), MR compares (m, d), MP the midpoints only and Dir
    the displacements only.

    Args:
        a: First segment (geometry object or coordinates in ``space``).
        b: Second segment.
        space (Space | str): One of cart, mr, mp, dir.

    Returns:
        float: The non-negative distance.

    Examples:
        >>> a = SegmentMR(m=Point2(0.5, 0.5), d=Point2(0.5, 0))
        >>> b = SegmentMR(m=Point2(0.5, 0.5), d=Point2(-0.5, 0))
        >>> segment_distance(a, b, "mp"), segment_distance(a, b, "dir")
        (0.0, 1.0)
    """
    space = Space(space)
    return float(
        np.linalg.norm(segment_coordinates(a, space) - segment_coordinates(b, space))
    )


def _border_crossings(a: np.ndarray, b: np.ndarray, cell_size: int) -> list[np.ndarray]:
    """
    Points where the straight piece a -> b crosses cell borders, ordered from a
    to b. Border coordinates are set exactly; a corner crossing yields a
    single point.
    """
    delta = b - a
    crossings: list[tuple[float, int, float]] = []
    for axis in (0, 1):
        if delta[axis] == 0.0:
            continue
        low, high = sorted((a[axis], b[axis]))
        first = math.floor(low / cell_size) + 1
        last = math.ceil(high / cell_size) - 1
        for k in range(first, last + 1):
            border = float(k * cell_size)
            if low < border < high:
                t = (border - a[axis]) / delta[axis]
                crossings.append((t, axis, border))
    crossings.sort(key=lambda item: item[0])

    points: list[np.ndarray] = []
    last_t = None
    for t, axis, border in crossings:
        if last_t is not None and abs(t - last_t) <= 1e-12:
            points[-1][axis] = border
            continue
        point = a + t * delta
        point[axis] = border
        points.append(point)
        last_t = t
    return points


def split_polyline(
    p: Polyline,
    g: Grid,
    num_classes: int | None = None,
    representation: Space | str = Space.CART,
) -> list[CellSegment]:
    """
    Subdivides a polyline at the cell borders of a grid.

    Every output segment lies in exactly one cell, has confidence 1 and a
    one-hot label. Interior cut points lie on cell borders and are shared by
    the two segments meeting there, so concatenating the outputs in order
    reproduces the polyline. A point on a shared edge belongs to the cell it
    enters; pieces shorter than 1e-6 cell units are dropped.

    Args:
        p (Polyline): The polyline, in pixels.
        g (Grid): The grid laid over the image.
        num_classes (int, optional): Length of the one-hot label vector.
            Defaults to ``label + 1`` (1 for unlabeled polylines).
        representation (Space | str, optional): Cart or MR output geometry.

    Returns:
        list[CellSegment]: Segments in travel order.

    Raises:
        OutOfBoundsError: A vertex lies outside the image covered by ``g``.
        EmptyResultError: Nothing but slivers remained.
    """
    representation = Space(representation)
    points = p.as_array()
    if (
        np.any(points < 0.0)
        or np.any(points[:, 0] > g.width)
        or np.any(points[:, 1] > g.height)
    ):
        raise OutOfBoundsError(
            f"{OUT_OF_BOUNDS_ERROR_MESSAGE}: grid {g.width}x{g.height}",
            OUT_OF_BOUNDS_ERROR_CODE,
        )
    if num_classes is None:
        num_classes = 1 if p.label is None else int(p.label) + 1
    label_probs = one_hot(p.label, num_classes)
    cell_size = g.cell_size

    chain = [points[0]]
    for a, b in zip(points[:-1], points[1:]):
        chain.extend(_border_crossings(a, b, cell_size))
        chain.append(b)

    segments: list[CellSegment] = []
    for start, end in zip(chain[:-1], chain[1:]):
        if np.linalg.norm(end - start) / cell_size < SLIVER_LENGTH_EPS:
            continue
        mid = (start + end) / 2.0
        col = min(int(mid[0] // cell_size), g.cols - 1)
        row = min(int(mid[1] // cell_size), g.rows - 1)
        origin = np.array([col, row], dtype=float) * cell_size
        s = np.clip((start - origin) / cell_size, 0.0, 1.0)
        e = np.clip((end - origin) / cell_size, 0.0, 1.0)
        geometry: Geometry = SegmentCart(s=Point2(*map(float, s)), e=Point2(*map(float, e)))
        if representation == Space.MR:
            geometry = cart_to_mr(geometry)
        segments.append(
            CellSegment(
                geometry=geometry,
                label_probs=label_probs,
                confidence=1.0,
                cell=(row, col),
            )
        )

    if not segments:
        raise EmptyResultError(EMPTY_RESULT_ERROR_MESSAGE, EMPTY_RESULT_ERROR_CODE)
    return segments


def cell_to_image(seg: CellSegment, g: Grid) -> ImageSegment:
    """
    Maps a cell-local segment to image pixels.

    A cell point (u, v) in cell (row, col) becomes
    ((col + u) * cell_size, (row + v) * cell_size).

    Raises:
        OutOfBoundsError: ``seg.cell`` lies outside the grid.

    Examples:
        >>> seg = CellSegment(geometry=SegmentCart(s=Point2(.5, .5), e=Point2(1, .5)), cell=(1, 2))
        >>> cell_to_image(seg, Grid(rows=4, cols=4, cell_size=8)).start
        Point2(u=20.0, v=12.0)
    """
    if not g.contains_cell(seg.cell):
        raise OutOfBoundsError(
            f"{CELL_OUT_OF_RANGE_ERROR_MESSAGE}: {seg.cell}",
            CELL_OUT_OF_RANGE_ERROR_CODE,
        )
    geometry = seg.geometry
    if isinstance(geometry, SegmentMR):
        geometry = mr_to_cart(geometry)
    row, col = seg.cell
    su, sv, eu, ev = geometry.coords()
    size = g.cell_size
    return ImageSegment(
        start=Point2((col + su) * size, (row + sv) * size),
        end=Point2((col + eu) * size, (row + ev) * size),
        confidence=seg.confidence,
        label_probs=seg.label_probs,
        cell=seg.cell,
    )


def group_by_cell(segments: Sequence[CellSegment]) -> dict[tuple[int, int], list[CellSegment]]:
    """Groups segments by their cell, keeping input order inside each cell."""
    cells: dict[tuple[int, int], list[CellSegment]] = {}
    for segment in segments:
        cells.setdefault(segment.cell, []).append(segment)
    return cells


def discretize(
    polylines: Sequence[Polyline],
    g: Grid,
    num_classes: int,
    representation: Space | str = Space.CART,
) -> list[CellSegment]:
    """Splits every polyline of an image and concatenates the results."""
    segments: list[CellSegment] = []
    for polyline in polylines:
        segments.extend(split_polyline(polyline, g, num_classes, representation))
    return segments


@dataclass(kw_only=True, frozen=True, eq=False)
class CellTruth:
    """
    Ground truth of one cell as arrays.

    Attributes:
        cell (tuple[int, int]): (row, col).
        geometry (np.ndarray): (G, 4) coordinates in the training representation.
        labels (np.ndarray): (G,) integer categories.
    """

    cell: tuple[int, int]
    geometry: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)


def cell_truths(
    segments: Sequence[CellSegment], representation: Space | str
) -> list[CellTruth]:
    """
    Packs cell segments into per-cell arrays in ``representation``.

    Args:
        segments (Sequence[CellSegment]): Output of :func:`split_polyline`.
        representation (Space | str): Cart or MR.

    Returns:
        list[CellTruth]: One entry per occupied cell, ordered by (row, col).
    """
    representation = Space(representation)
    truths = []
    for cell, members in sorted(group_by_cell(segments).items()):
        geometry = np.array(
            [segment_coordinates(m, representation) for m in members], dtype=float
        )
        labels = np.array([m.label for m in members], dtype=int)
        truths.append(CellTruth(cell=cell, geometry=geometry, labels=labels))
    return truths


@dataclass(kw_only=True, frozen=True, eq=False)
class PredictionGrid:
    """
    Activated head output of one image: P hypotheses per cell.

    Attributes:
        grid (Grid): The cell lattice.
        representation (Space): Layout of ``geometry`` (Cart or MR).
        geometry (np.ndarray): (rows, cols, P, 4) cell-local geometry.
        labels (np.ndarray): (rows, cols, P, C) label distributions.
        confidence (np.ndarray): (rows, cols, P) confidences.

    Raises:
        ShapeMismatchError: Array shapes disagree with each other or the grid.
    """

    grid: Grid
    representation: Space
    geometry: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    confidence: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "representation", Space(self.representation))
        lead = (self.grid.rows, self.grid.cols)
        if (
            self.geometry.ndim != 4
            or self.geometry.shape[:2] != lead
            or self.geometry.shape[3] != 4
            or self.labels.shape[:3] != self.geometry.shape[:3]
            or self.confidence.shape != self.geometry.shape[:3]
        ):
            raise ShapeMismatchError(
                f"Prediction arrays {self.geometry.shape}/{self.labels.shape}/"
                f"{self.confidence.shape} do not fit grid {lead}",
                SHAPE_MISMATCH_ERROR_CODE,
            )

    @property
    def P(self) -> int:  # pylint: disable=invalid-name
        return int(self.geometry.shape[2])

    @property
    def num_classes(self) -> int:
        return int(self.labels.shape[3])

    @classmethod
    def empty(
        cls, grid: Grid, P: int, num_classes: int, representation: Space | str
    ) -> "PredictionGrid":  # pylint: disable=invalid-name
        """All-zero geometry, uniform labels and zero confidence."""
        return cls(
            grid=grid,
            representation=Space(representation),
            geometry=np.zeros((grid.rows, grid.cols, P, 4)),
            labels=np.full((grid.rows, grid.cols, P, num_classes), 1.0 / num_classes),
            confidence=np.zeros((grid.rows, grid.cols, P)),
        )

    def clamped_cart(self) -> np.ndarray:
        """Geometry as start/end points clipped into the unit cell box."""
        cart = project_coordinates(self.geometry, self.representation, Space.CART)
        return np.clip(cart, 0.0, 1.0)

    def cell_segments(self, threshold: float | None = None) -> list[CellSegment]:
        """
        Hypotheses as CellSegments with clamped Cart geometry.

        Args:
            threshold (float, optional): Keep only confidence > threshold.

        Returns:
            list[CellSegment]: Ordered by (row, col, predictor).
        """
        cart = self.clamped_cart()
        confidence = np.clip(self.confidence, 0.0, 1.0)
        segments = []
        for row, col, k in np.ndindex(*self.confidence.shape):
            if threshold is not None and not self.confidence[row, col, k] > threshold:
                continue
            su, sv, eu, ev = cart[row, col, k]
            probs = np.clip(self.labels[row, col, k], 0.0, None)
            segments.append(
                CellSegment(
                    geometry=SegmentCart(s=Point2(su, sv), e=Point2(eu, ev)),
                    label_probs=tuple(probs / probs.sum()),
                    confidence=float(confidence[row, col, k]),
                    cell=(row, col),
                )
            )
        return segments
