"""
Decoding Module

Turns the confident hypotheses of a prediction into polylines: non-maximum
suppression removes redundant segments, stitching reconnects the cell-local
pieces end-to-start into directed polylines.

Key Features:
    - Greedy confidence-ordered NMS with a midpoint gate and an undirected
      angle gate; keep-max or confidence-weighted averaging
    - Stitching as a greedy matching of segment ends to segment starts by
      smallest turn, each segment used once, cycles broken
    - Pure functions, deterministic for a given input order
"""

import math
import logging
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from src.core.custom_classes import SubscriptableDataclass
from src.core.constants import (
    GRIDLINE_APP_NAME,
    DEFAULT_CELL_SIZE,
    DEFAULT_NMS_ANGLE_EPS,
    DEFAULT_STITCH_ANGLE_EPS,
    DEFAULT_STITCH_JOIN_EPS,
    POINT_SEPARATION_EPS,
    INVALID_CONFIG_ERROR_CODE,
)
from src.services.gridline.exceptions import InvalidConfigError
from src.services.gridline.geom import ImageSegment, Point2, Polyline

LOGGER = logging.getLogger(GRIDLINE_APP_NAME)

NmsMode = Literal["keep-max", "average"]

TURN_TIE_EPS = 1e-9


@dataclass(kw_only=True, frozen=True)
class NmsConfig(SubscriptableDataclass):
    """
    Suppression gates.

    Attributes:
        position_eps (float): Midpoint merge radius in pixels.
        angle_eps (float): Undirected angle gate in radians, in (0, pi].
        mode (NmsMode): ``keep-max`` or ``average``.
    """

    position_eps: float = DEFAULT_CELL_SIZE / 2
    angle_eps: float = DEFAULT_NMS_ANGLE_EPS
    mode: NmsMode = "keep-max"

    def __post_init__(self) -> None:
        if not self.position_eps > 0:
            raise InvalidConfigError(
                f"position_eps must be positive, got {self.position_eps}",
                INVALID_CONFIG_ERROR_CODE,
            )
        if not 0 < self.angle_eps <= math.pi:
            raise InvalidConfigError(
                f"angle_eps must lie in (0, pi], got {self.angle_eps}",
                INVALID_CONFIG_ERROR_CODE,
            )
        if self.mode not in ("keep-max", "average"):
            raise InvalidConfigError(
                f"Unknown NMS mode '{self.mode}'", INVALID_CONFIG_ERROR_CODE
            )

    @classmethod
    def for_cell_size(cls, cell_size: int, **kwargs) -> "NmsConfig":
        return cls(position_eps=cell_size / 2, **kwargs)


@dataclass(kw_only=True, frozen=True)
class StitchConfig(SubscriptableDataclass):
    """
    Continuation gates.

    Attributes:
        join_eps (float): Maximum end-to-start distance in pixels.
        angle_eps (float): Maximum turn between consecutive segments (radians).
    """

    join_eps: float = DEFAULT_STITCH_JOIN_EPS
    angle_eps: float = DEFAULT_STITCH_ANGLE_EPS

    def __post_init__(self) -> None:
        if not self.join_eps > 0 or not 0 < self.angle_eps <= math.pi:
            raise InvalidConfigError(
                f"Invalid stitch gates {self.join_eps}, {self.angle_eps}",
                INVALID_CONFIG_ERROR_CODE,
            )


def undirected_angle(a: ImageSegment, b: ImageSegment) -> float:
    """Angle between the carrier lines of two segments, in [0, pi/2]."""
    difference = abs(a.angle - b.angle) % math.pi
    return min(difference, math.pi - difference)


def turn_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Angle between two direction vectors, in [0, pi]; 0 if either is null."""
    if not np.any(a) or not np.any(b):
        return 0.0
    cross = float(a[0] * b[1] - a[1] * b[0])
    return math.atan2(abs(cross), float(np.dot(a, b)))


def _average(group: list[ImageSegment]) -> ImageSegment:
    leader = group[0]
    oriented = [
        s.coords() if np.dot(s.direction, leader.direction) >= 0
        else s.coords()[[2, 3, 0, 1]]
        for s in group
    ]
    weights = np.array([s.confidence for s in group], dtype=float)
    total = weights.sum()
    if total <= 0.0:
        weights, total = np.ones(len(group)), float(len(group))
    coords = (weights[:, None] * np.array(oriented)).sum(axis=0) / total
    probs = (weights[:, None] * np.array([s.label_probs for s in group])).sum(axis=0) / total
    confidence = float((np.array([s.confidence for s in group]) ** 2).sum() / total)
    return ImageSegment(
        start=Point2(coords[0], coords[1]),
        end=Point2(coords[2], coords[3]),
        confidence=min(max(confidence, 0.0), 1.0),
        label_probs=tuple(float(p) for p in probs / probs.sum()),
        cell=leader.cell,
    )


def nms(segments: Sequence[ImageSegment], cfg: NmsConfig | None = None) -> list[ImageSegment]:
    """
    Greedy non-maximum suppression.

    Segments are visited by descending confidence (input order breaks ties).
    Each segment not yet suppressed is accepted and suppresses every later
    segment whose midpoint lies closer than ``position_eps`` and whose
    undirected angle differs by less than ``angle_eps``. In ``average`` mode
    the accepted segment is replaced by the confidence-weighted mean of its
    group (members oriented like the leader) with confidence sum(c^2)/sum(c).

    Args:
        segments (Sequence[ImageSegment]): Image-space hypotheses.
        cfg (NmsConfig, optional): Gates and mode.

    Returns:
        list[ImageSegment]: Accepted segments, by descending confidence.

    Examples:
        >>> seg = ImageSegment(start=Point2(0, 0), end=Point2(8, 0), confidence=0.9)
        >>> dup = ImageSegment(start=Point2(0, 0), end=Point2(8, 0), confidence=0.6)
        >>> [s.confidence for s in nms([seg, dup])]
        [0.9]
    """
    cfg = cfg or NmsConfig()
    order = sorted(range(len(segments)), key=lambda i: -segments[i].confidence)
    midpoints = np.array([s.midpoint for s in segments]).reshape(len(segments), 2)
    suppressed = np.zeros(len(segments), dtype=bool)

    accepted: list[ImageSegment] = []
    for position, i in enumerate(order):
        if suppressed[i]:
            continue
        group = [segments[i]]
        for j in order[position + 1 :]:
            if suppressed[j]:
                continue
            close = np.linalg.norm(midpoints[i] - midpoints[j]) < cfg.position_eps
            if close and undirected_angle(segments[i], segments[j]) < cfg.angle_eps:
                suppressed[j] = True
                group.append(segments[j])
        accepted.append(group[0] if cfg.mode == "keep-max" else _average(group))

    LOGGER.debug("NMS kept %d of %d segments", len(accepted), len(segments))
    return accepted


class _DisjointSet:
    def __init__(self, size: int) -> None:
        self._parent = list(range(size))

    def find(self, item: int) -> int:
        while self._parent[item] != item:
            self._parent[item] = self._parent[self._parent[item]]
            item = self._parent[item]
        return item

    def union(self, a: int, b: int) -> bool:
        root_a, root_b = self.find(a), self.find(b)
        if root_a == root_b:
            return False
        self._parent[root_b] = root_a
        return True


def stitch_chains(
    segments: Sequence[ImageSegment], cfg: StitchConfig | None = None
) -> list[list[int]]:
    """
    Orders segment indices into directed chains.

    Candidate continuations A -> B need |end(A) - start(B)| < ``join_eps`` and
    a turn below ``angle_eps``. They are accepted greedily by (turn, distance,
    A, B), turns within ``TURN_TIE_EPS`` counting as equal, as long as A has
    no successor, B no predecessor and the link closes no cycle. Chains start
    at segments without predecessor and are returned ordered by their first
    index.
    """
    cfg = cfg or StitchConfig()
    count = len(segments)
    if count == 0:
        return []
    starts = np.array([s.start.as_array() for s in segments])
    ends = np.array([s.end.as_array() for s in segments])
    directions = ends - starts

    candidates = []
    for a in range(count):
        gaps = np.linalg.norm(starts - ends[a], axis=1)
        for b in np.flatnonzero(gaps < cfg.join_eps):
            if b == a:
                continue
            turn = turn_angle(directions[a], directions[b])
            if turn < cfg.angle_eps:
                # turns closer than TURN_TIE_EPS count as ties and fall back to the gap
                candidates.append((round(turn / TURN_TIE_EPS), float(gaps[b]), a, int(b)))
    candidates.sort()

    successor: dict[int, int] = {}
    predecessor: dict[int, int] = {}
    components = _DisjointSet(count)
    for _, _, a, b in candidates:
        if a in successor or b in predecessor or not components.union(a, b):
            continue
        successor[a] = b
        predecessor[b] = a

    chains = []
    for head in range(count):
        if head in predecessor:
            continue
        chain = [head]
        while chain[-1] in successor:
            chain.append(successor[chain[-1]])
        chains.append(chain)
    return chains


def _chain_points(segments: Sequence[ImageSegment], chain: list[int]) -> np.ndarray:
    points = [segments[chain[0]].start.as_array()]
    for a, b in zip(chain, chain[1:]):
        points.append((segments[a].end.as_array() + segments[b].start.as_array()) / 2.0)
    points.append(segments[chain[-1]].end.as_array())
    kept = [points[0]]
    for point in points[1:]:
        if np.linalg.norm(point - kept[-1]) > POINT_SEPARATION_EPS:
            kept.append(point)
    return np.array(kept)


def chain_label(segments: Sequence[ImageSegment], chain: list[int]) -> int:
    """Category with the largest summed probability along a chain."""
    width = max(len(segments[i].label_probs) for i in chain)
    totals = np.zeros(width)
    for i in chain:
        probs = segments[i].label_probs
        totals[: len(probs)] += probs
    return int(np.argmax(totals))


def stitch(
    segments: Sequence[ImageSegment], cfg: StitchConfig | None = None
) -> list[Polyline]:
    """
    Reconnects segments into directed polylines.

    Consecutive segments of a chain are joined at the midpoint of the end of
    one and the start of the next. Chains that collapse to a single point are
    skipped.

    Args:
        segments (Sequence[ImageSegment]): Image-space segments.
        cfg (StitchConfig, optional): Continuation gates.

    Returns:
        list[Polyline]: One polyline per chain, labelled by the chain's
        dominant category.
    """
    return [polyline for polyline, _ in stitch_with_confidence(segments, cfg)]


def stitch_with_confidence(
    segments: Sequence[ImageSegment], cfg: StitchConfig | None = None
) -> list[tuple[Polyline, float]]:
    """:func:`stitch`, pairing each polyline with its mean segment confidence."""
    results = []
    for chain in stitch_chains(segments, cfg):
        points = _chain_points(segments, chain)
        if len(points) < 2:
            continue
        confidence = math.fsum(segments[i].confidence for i in chain) / len(chain)
        results.append(
            (Polyline.from_array(points, label=chain_label(segments, chain)), confidence)
        )
    LOGGER.debug("Stitched %d segments into %d polylines", len(segments), len(results))
    return results
