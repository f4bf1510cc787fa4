"""
Test Oracles Module

Independent reference computations the unit tests compare gridline against:
    - Brute-force minimum-cost assignment over all permutations
    - Central finite differences of scalar functions of arrays
    - Hausdorff distance of polylines through shapely
    - Random polylines and random valid cell segments
"""

import math
import itertools
from typing import Callable

import numpy as np
from shapely.geometry import LineString

from src.services.gridline.geom import Point2, Polyline


def brute_force_min_cost(cost: np.ndarray) -> float:
    """Minimum total cost of a one-to-one assignment of the smaller side."""
    cost = np.asarray(cost, dtype=float)
    if cost.shape[0] > cost.shape[1]:
        cost = cost.T
    rows, cols = cost.shape
    return min(
        math.fsum(float(cost[i, perm[i]]) for i in range(rows))
        for perm in itertools.permutations(range(cols), rows)
    )


def central_difference(func: Callable[[], float], array: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """
    Numerical gradient of ``func`` with respect to ``array``, perturbed in place.

    ``func`` takes no argument and must read ``array`` when called.
    """
    grad = np.zeros_like(array, dtype=float)
    for index in np.ndindex(array.shape):
        original = array[index]
        array[index] = original + h
        plus = func()
        array[index] = original - h
        minus = func()
        array[index] = original
        grad[index] = (plus - minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def hausdorff(a: Polyline | np.ndarray, b: Polyline | np.ndarray) -> float:
    a = a.as_array() if isinstance(a, Polyline) else np.asarray(a)
    b = b.as_array() if isinstance(b, Polyline) else np.asarray(b)
    return float(LineString(a).hausdorff_distance(LineString(b)))


def random_polyline(
    rng: np.random.Generator,
    width: float,
    height: float,
    max_points: int = 5,
    label: int | None = None,
) -> Polyline:
    """A random in-bounds polyline with well separated vertices."""
    count = int(rng.integers(2, max_points + 1))
    points = [rng.uniform([0.5, 0.5], [width - 0.5, height - 0.5])]
    while len(points) < count:
        candidate = rng.uniform([0.5, 0.5], [width - 0.5, height - 0.5])
        if np.linalg.norm(candidate - points[-1]) > 2.0:
            points.append(candidate)
    return Polyline(points=tuple(Point2(float(u), float(v)) for u, v in points), label=label)


def random_cart_coords(rng: np.random.Generator, count: int) -> np.ndarray:
    """(count, 4) random start/end points inside the unit cell."""
    return rng.uniform(0.0, 1.0, size=(count, 4))
