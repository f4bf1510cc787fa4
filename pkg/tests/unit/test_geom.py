"""
Unit tests for the polyline and cell geometry module.

Covers splitting at cell borders, the Cart/MR conversions, the image mapping
and the segment distance in every space.
"""

import itertools

import numpy as np
import pytest

from src.services.gridline.exceptions import (
    EmptyResultError,
    InvalidGeometryError,
    OutOfBoundsError,
)
from src.services.gridline.geom import (
    CellSegment,
    Grid,
    Point2,
    Polyline,
    PredictionGrid,
    SegmentCart,
    SegmentMR,
    Space,
    cart_to_mr,
    cell_to_image,
    cell_truths,
    mr_to_cart,
    project_coordinates,
    segment_distance,
    split_polyline,
)
from tests.utils import hausdorff, random_cart_coords, random_polyline


def _image_chain(segments, grid):
    image = [cell_to_image(s, grid) for s in segments]
    return [image[0].start.as_array()] + [s.end.as_array() for s in image], image


def test_split_horizontal_line_one_segment_per_cell(grid_8px, horizontal_line):
    """
    Test that a line crossing two borders splits into three full-width pieces.

    Test Strategy:
    1. Split (0,4)->(24,4) on 8 px cells
    2. Verify one border-to-border segment in each of the first three cells
    """
    # Act
    segments = split_polyline(horizontal_line, grid_8px)

    # Assert
    assert [s.cell for s in segments] == [(0, 0), (0, 1), (0, 2)]
    for segment in segments:
        assert segment.geometry.coords() == pytest.approx([0.0, 0.5, 1.0, 0.5])
        assert segment.confidence == 1.0
        assert segment.label_probs == (1.0,)


def test_split_segment_inside_one_cell(grid_8px):
    # Arrange
    polyline = Polyline(points=(Point2(9, 10), Point2(14, 13)), label=1)

    # Act
    segments = split_polyline(polyline, grid_8px, num_classes=3)

    # Assert
    assert len(segments) == 1
    assert segments[0].cell == (1, 1)
    coords = segments[0].geometry.coords()
    assert np.all((coords > 0) & (coords < 1))
    assert segments[0].label_probs == (0.0, 1.0, 0.0)


def test_split_point_on_vertical_border_belongs_to_right_cell(grid_8px):
    """
    Test half-open ownership for a line running along a cell border.

    Test Strategy:
    1. Split a vertical line lying on u = 8
    2. Verify both pieces are owned by column 1 with u = 0
    """
    # Arrange
    polyline = Polyline(points=(Point2(8, 0), Point2(8, 16)))

    # Act
    segments = split_polyline(polyline, grid_8px)

    # Assert
    assert [s.cell for s in segments] == [(0, 1), (1, 1)]
    assert all(s.geometry.s.u == 0.0 and s.geometry.e.u == 0.0 for s in segments)


def test_split_diagonal_through_corner_yields_single_cut(grid_8px):
    # Arrange
    polyline = Polyline(points=(Point2(0, 0), Point2(16, 16)))

    # Act
    segments = split_polyline(polyline, grid_8px)

    # Assert
    assert [s.cell for s in segments] == [(0, 0), (1, 1)]
    assert segments[0].geometry.coords() == pytest.approx([0, 0, 1, 1])
    assert segments[1].geometry.coords() == pytest.approx([0, 0, 1, 1])


@pytest.mark.parametrize(
    "points",
    [
        ((0, 0), (33, 4)),
        ((-0.5, 4), (10, 4)),
        ((4, 4), (4, 40)),
    ],
)
def test_split_out_of_bounds_polyline_raises(grid_8px, points):
    # Arrange
    polyline = Polyline.from_array(points)

    # Act & Assert
    with pytest.raises(OutOfBoundsError) as e:
        split_polyline(polyline, grid_8px)
    assert e.value.error_type == "OUT_OF_BOUNDS"


def test_split_sliver_only_polyline_raises_empty_result(grid_8px):
    # Arrange: shorter than 1e-6 cell units but above the vertex separation
    polyline = Polyline(points=(Point2(3, 3), Point2(3 + 1e-8, 3)))

    # Act & Assert
    with pytest.raises(EmptyResultError):
        split_polyline(polyline, grid_8px)


def test_polyline_rejects_coincident_points():
    with pytest.raises(InvalidGeometryError):
        Polyline(points=(Point2(1, 1), Point2(1, 1)))
    with pytest.raises(InvalidGeometryError):
        Polyline(points=(Point2(1, 1),))


def test_split_round_trip_on_random_polylines(rng):
    """
    Test that the split pieces mapped back to pixels reproduce each polyline.

    Test Strategy:
    1. Split 100 random polylines on a 20x20 grid of 8 px cells
    2. Verify consecutive pieces share their cut points
    3. Verify every piece stays inside its own cell
    4. Verify the concatenated chain is within 1e-6 px (Hausdorff) of the input
    """
    # Arrange
    grid = Grid(rows=20, cols=20, cell_size=8)

    for _ in range(100):
        polyline = random_polyline(rng, grid.width, grid.height, max_points=6)

        # Act
        segments = split_polyline(polyline, grid)
        chain, image = _image_chain(segments, grid)

        # Assert
        for previous, current in zip(image[:-1], image[1:]):
            assert np.allclose(previous.end.as_array(), current.start.as_array(), atol=1e-9)
        for segment in segments:
            assert grid.contains_cell(segment.cell)
            coords = segment.geometry.coords()
            assert np.all((coords >= 0.0) & (coords <= 1.0))
        assert np.allclose(chain[0], polyline.points[0].as_array(), atol=1e-9)
        assert np.allclose(chain[-1], polyline.points[-1].as_array(), atol=1e-9)
        assert hausdorff(np.array(chain), polyline) < 1e-6


def test_reversing_polyline_reverses_segments(rng):
    """
    Test direction preservation.

    Test Strategy:
    1. Split a random polyline and its reverse in MR
    2. Verify the reverse pieces come in reverse order with negated d
    """
    # Arrange
    grid = Grid(rows=10, cols=10, cell_size=8)
    polyline = random_polyline(rng, grid.width, grid.height, max_points=4)

    # Act
    forward = split_polyline(polyline, grid, representation="mr")
    backward = split_polyline(polyline.reversed(), grid, representation="mr")

    # Assert
    assert len(forward) == len(backward)
    for a, b in zip(forward, reversed(backward)):
        assert a.cell == b.cell
        assert a.geometry.m.as_array() == pytest.approx(b.geometry.m.as_array(), abs=1e-9)
        assert a.geometry.d.as_array() == pytest.approx(-b.geometry.d.as_array(), abs=1e-9)


@pytest.mark.parametrize(
    "s, e, m, d",
    [
        ((0, 0), (1, 1), (0.5, 0.5), (1, 1)),
        ((0.5, 0.5), (0.5, 0.5), (0.5, 0.5), (0, 0)),
        ((0, 0.5), (1, 0.5), (0.5, 0.5), (1, 0)),
    ],
)
def test_cart_mr_conversion_examples(s, e, m, d):
    # Arrange
    cart = SegmentCart(s=Point2(*s), e=Point2(*e))

    # Act
    mr = cart_to_mr(cart)
    back = mr_to_cart(SegmentMR(m=Point2(*m), d=Point2(*d)))

    # Assert
    assert mr.coords() == pytest.approx([*m, *d])
    assert back.coords() == pytest.approx([*s, *e])


def test_cart_mr_round_trip_on_random_segments(rng):
    for su, sv, eu, ev in random_cart_coords(rng, 1000):
        cart = SegmentCart(s=Point2(su, sv), e=Point2(eu, ev))
        assert mr_to_cart(cart_to_mr(cart)).coords() == pytest.approx(
            cart.coords(), abs=1e-12
        )


def test_mr_to_cart_rejects_endpoint_outside_cell():
    # Arrange
    mr = SegmentMR(m=Point2(0.9, 0.5), d=Point2(1, 0))

    # Act & Assert
    with pytest.raises(InvalidGeometryError) as e:
        mr_to_cart(mr)
    assert e.value.error_type == "INVALID_GEOMETRY"


def test_mr_to_cart_clamps_within_tolerance():
    # Arrange
    mr = SegmentMR(m=Point2(0.5 + 1e-10, 0.5), d=Point2(1.0, 0))

    # Act
    cart = mr_to_cart(mr)

    # Assert
    assert cart.e.u == 1.0
    assert cart.s.u == pytest.approx(1e-10)


@pytest.mark.parametrize(
    "cell, start, cell_size, expected",
    [
        ((0, 0), (0, 0), 32, (0.0, 0.0)),
        ((1, 2), (0.5, 0.5), 8, (20.0, 12.0)),
    ],
)
def test_cell_to_image_examples(cell, start, cell_size, expected):
    # Arrange
    grid = Grid(rows=4, cols=4, cell_size=cell_size)
    segment = CellSegment(
        geometry=SegmentCart(s=Point2(*start), e=Point2(1, 1)), cell=cell
    )

    # Act
    image = cell_to_image(segment, grid)

    # Assert
    assert (image.start.u, image.start.v) == expected


def test_cell_to_image_out_of_range_cell_raises(grid_8px):
    # Arrange
    segment = CellSegment(geometry=SegmentCart(s=Point2(0, 0), e=Point2(1, 1)), cell=(4, 0))

    # Act & Assert
    with pytest.raises(OutOfBoundsError) as e:
        cell_to_image(segment, grid_8px)
    assert e.value.error_type == "CELL_OUT_OF_RANGE"


def test_segment_distance_opposite_directions():
    # Arrange
    a = SegmentMR(m=Point2(0.5, 0.5), d=Point2(1, 0))
    b = SegmentMR(m=Point2(0.5, 0.5), d=Point2(-1, 0))

    # Act & Assert
    assert segment_distance(a, b, "mp") == 0.0
    assert segment_distance(a, b, "dir") == pytest.approx(2.0)
    assert segment_distance(a, a, "cart") == 0.0
    assert segment_distance(a, a, "mr") == 0.0


@pytest.mark.parametrize("space", ["cart", "mr", "mp", "dir"])
def test_segment_distance_is_a_metric(rng, space):
    """
    Test the metric properties of the segment distance.

    Test Strategy:
    1. Draw random triples of Cart segments
    2. Verify symmetry, non-negativity and the triangle inequality
    """
    # Arrange
    segments = [
        SegmentCart(s=Point2(c[0], c[1]), e=Point2(c[2], c[3]))
        for c in random_cart_coords(rng, 30)
    ]

    for a, b, c in itertools.islice(itertools.combinations(segments, 3), 500):
        # Act
        ab = segment_distance(a, b, space)
        bc = segment_distance(b, c, space)
        ac = segment_distance(a, c, space)

        # Assert
        assert ab >= 0.0
        assert ab == pytest.approx(segment_distance(b, a, space))
        assert ac <= ab + bc + 1e-12


def test_project_coordinates_between_spaces():
    # Arrange
    cart = np.array([[0.0, 0.5, 1.0, 0.5]])

    # Act & Assert
    assert project_coordinates(cart, Space.CART, Space.MR) == pytest.approx(
        np.array([[0.5, 0.5, 1.0, 0.0]])
    )
    assert project_coordinates(cart, Space.CART, Space.MP) == pytest.approx(np.array([[0.5, 0.5]]))
    assert project_coordinates(cart, Space.CART, Space.DIR) == pytest.approx(np.array([[1.0, 0.0]]))


def test_cell_truths_groups_and_orders_by_cell(grid_8px):
    # Arrange
    polylines = [
        Polyline(points=(Point2(20, 28), Point2(4, 28)), label=1),
        Polyline(points=(Point2(0, 4), Point2(12, 4)), label=0),
    ]
    segments = [s for p in polylines for s in split_polyline(p, grid_8px, num_classes=2)]

    # Act
    truths = cell_truths(segments, "mr")

    # Assert
    assert [t.cell for t in truths] == [(0, 0), (0, 1), (3, 0), (3, 1), (3, 2)]
    assert truths[2].labels.tolist() == [1]
    assert truths[2].geometry[0] == pytest.approx([0.75, 0.5, -0.5, 0.0])


def test_prediction_grid_cell_segments_threshold_is_strict(grid_8px):
    # Arrange
    prediction = PredictionGrid.empty(grid_8px, 2, 2, "cart")
    confidence = prediction.confidence
    confidence[0, 0, 0] = 0.5
    confidence[1, 2, 1] = 0.75

    # Act
    segments = prediction.cell_segments(threshold=0.5)

    # Assert
    assert [(s.cell, s.confidence) for s in segments] == [((1, 2), 0.75)]
    assert segments[0].label_probs == pytest.approx((0.5, 0.5))
