"""
Unit tests for the anchors module: uniform and k-means anchor sets, static
assignment, the MA statistic and anchor-set persistence.
"""

import itertools
import json
import pathlib
import statistics

import numpy as np
import pytest
from jsonschema import ValidationError

from src.services.gridline.anchors import (
    AnchorSet,
    assign_to_anchors,
    kmeans_anchors,
    lloyd_kmeans,
    load_anchor_set,
    ma_statistic,
    save_anchor_set,
    uniform_anchors,
)
from src.services.gridline.data import SceneConfig, generate
from src.services.gridline.exceptions import InsufficientDataError, InvalidAnchorError
from src.services.gridline.geom import (
    CellSegment,
    Grid,
    Point2,
    SegmentMR,
    discretize,
    segment_distance,
)


def _mr(mu, mv, du, dv, cell=(0, 0)):
    return CellSegment(
        geometry=SegmentMR(m=Point2(mu, mv), d=Point2(du, dv)), cell=cell
    )


def test_uniform_dir_four_gives_cardinal_directions():
    # Act
    anchors = uniform_anchors("dir", 4)

    # Assert
    assert anchors.anchors.tolist() == [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]
    assert anchors.base_geometry("mr")[:, :2].tolist() == [[0.5, 0.5]] * 4


def test_uniform_mp_one_is_cell_center():
    # Act
    anchors = uniform_anchors("mp", 1)

    # Assert
    assert anchors.anchors.tolist() == [[0.5, 0.5]]
    assert anchors.base_geometry("mr").tolist() == [[0.5, 0.5, 1.0, 0.0]]


@pytest.mark.parametrize("space, count", [("mr", 24), ("cart", 24), ("mp", 9), ("dir", 8)])
def test_uniform_anchors_are_distinct_and_deterministic(space, count):
    # Act
    first = uniform_anchors(space, count)
    second = uniform_anchors(space, count)

    # Assert
    assert first.P == count
    assert np.array_equal(first.anchors, second.anchors)
    for a, b in itertools.combinations(first.anchors, 2):
        assert segment_distance(a, b, space) > 0.0


def test_uniform_cart_anchors_fit_inside_cell():
    # Act
    anchors = uniform_anchors("cart", 16)

    # Assert
    assert np.all(anchors.anchors >= 0.0) and np.all(anchors.anchors <= 1.0)


def test_uniform_anchors_reject_zero_predictors():
    with pytest.raises(InvalidAnchorError):
        uniform_anchors("mr", 0)


@pytest.mark.parametrize(
    "space, anchors",
    [
        ("mp", [[0.5, 0.5, 0.0]]),
        ("dir", [[1.5, 0.0]]),
        ("cart", [[0.0, 0.0, 1.0, 1.2]]),
    ],
)
def test_anchor_set_validates_shape_and_box(space, anchors):
    with pytest.raises(InvalidAnchorError) as e:
        AnchorSet(space=space, anchors=anchors)
    assert e.value.error_type == "INVALID_ANCHOR_SET"


def test_kmeans_single_cluster_is_mean(rng):
    # Arrange
    segments = [
        _mr(*rng.uniform(0.3, 0.7, 2), *rng.uniform(-0.5, 0.5, 2)) for _ in range(40)
    ]
    coords = np.array([s.geometry.coords() for s in segments])

    # Act
    anchors = kmeans_anchors(segments, 1, "mr", seed=3)

    # Assert
    assert anchors.anchors[0] == pytest.approx(coords.mean(axis=0), abs=1e-12)


def test_kmeans_recovers_two_separated_blobs(rng):
    """
    Test that two tight, well separated blobs end up as the two centroids.

    Test Strategy:
    1. Draw two blobs of midpoints around (0.2, 0.2) and (0.8, 0.8)
    2. Cluster in MP with k=2
    3. Verify each centroid equals one blob mean within 1e-6
    """
    # Arrange
    blob_a = rng.normal(0.2, 0.01, size=(30, 2))
    blob_b = rng.normal(0.8, 0.01, size=(30, 2))
    segments = [_mr(u, v, 0.1, 0.0) for u, v in np.vstack([blob_a, blob_b])]

    # Act
    anchors = kmeans_anchors(segments, 2, "mp", seed=5)

    # Assert
    centroids = sorted(anchors.anchors.tolist())
    assert centroids[0] == pytest.approx(blob_a.mean(axis=0), abs=1e-6)
    assert centroids[1] == pytest.approx(blob_b.mean(axis=0), abs=1e-6)


def test_lloyd_inertia_is_non_increasing(rng):
    # Arrange
    points = rng.uniform(size=(200, 4))

    # Act
    result = lloyd_kmeans(points, 6, seed=11)

    # Assert
    history = np.array(result.inertia_history)
    assert np.all(np.diff(history) <= 1e-12)
    assert result.n_iter <= 200


def test_kmeans_is_deterministic_for_fixed_seed(rng):
    # Arrange
    points = rng.uniform(size=(100, 2))

    # Act
    first = lloyd_kmeans(points, 4, seed=2)
    second = lloyd_kmeans(points, 4, seed=2)

    # Assert
    assert np.array_equal(first.centroids, second.centroids)


def test_kmeans_with_fewer_points_than_clusters_raises():
    with pytest.raises(InsufficientDataError) as e:
        kmeans_anchors([_mr(0.5, 0.5, 1, 0)], 2, "mr", seed=0)
    assert e.value.error_type == "INSUFFICIENT_DATA"


def test_assign_single_gt_goes_to_nearest_anchor():
    # Arrange
    anchors = uniform_anchors("dir", 4)
    gt = _mr(0.5, 0.5, 0.0, -0.8)

    # Act
    assignment = assign_to_anchors([gt], anchors)

    # Assert
    assert assignment.assigned == {3: 0}
    assert assignment.dropped == ()


def test_assign_identical_gts_with_one_anchor_drops_one():
    # Arrange
    anchors = uniform_anchors("mp", 1)
    gts = [_mr(0.5, 0.5, 1, 0), _mr(0.5, 0.5, 1, 0)]

    # Act
    assignment = assign_to_anchors(gts, anchors)

    # Assert
    assert assignment.assigned == {0: 0}
    assert assignment.dropped == (1,)


@pytest.mark.parametrize("policy", ["greedy", "nearest"])
def test_assignment_partitions_gts(rng, policy):
    """
    Test that assigned and dropped gts partition the input.

    Test Strategy:
    1. Assign random cells of up to 6 gts to 4 MR anchors
    2. Verify no anchor holds two gts and every gt is assigned or dropped
    """
    # Arrange
    anchors = uniform_anchors("mr", 4)

    for _ in range(50):
        count = int(rng.integers(1, 7))
        gts = [_mr(*rng.uniform(0.4, 0.6, 2), *rng.uniform(-0.5, 0.5, 2)) for _ in range(count)]

        # Act
        assignment = assign_to_anchors(gts, anchors, policy)

        # Assert
        kept = list(assignment.assigned.values())
        assert len(kept) == len(set(kept))
        assert sorted(kept + list(assignment.dropped)) == list(range(count))


def test_adding_an_anchor_never_increases_dropped_count(rng):
    # Arrange
    base = uniform_anchors("mp", 4)
    extended = AnchorSet(space="mp", anchors=np.vstack([base.anchors, [[0.1, 0.9]]]))

    for _ in range(50):
        gts = [_mr(*rng.uniform(0.2, 0.8, 2), 0.1, 0.0) for _ in range(int(rng.integers(1, 8)))]

        # Act
        before = assign_to_anchors(gts, base)
        after = assign_to_anchors(gts, extended)

        # Assert
        assert len(after.dropped) <= len(before.dropped)


def test_unknown_assignment_policy_raises():
    with pytest.raises(InvalidAnchorError):
        assign_to_anchors([_mr(0.5, 0.5, 1, 0)], uniform_anchors("mp", 1), "random")


def test_ma_statistic_examples():
    # Arrange
    single = uniform_anchors("mp", 1)
    separate_cells = [[_mr(0.5, 0.5, 1, 0, (0, 0)), _mr(0.5, 0.5, 1, 0, (0, 1))]]
    shared_cell = [[_mr(0.5, 0.5, 1, 0), _mr(0.5, 0.5, 1, 0)]]

    # Act & Assert
    assert ma_statistic(separate_cells, single) == 0.0
    assert ma_statistic(shared_cell, single) == pytest.approx(0.5)


def test_ma_statistic_of_empty_dataset_raises():
    with pytest.raises(InsufficientDataError):
        ma_statistic([], uniform_anchors("mp", 1))


def test_ma_decreases_with_more_anchors_on_synthetic_corpus():
    """
    Test the tendency of larger anchor sets to drop fewer gts.

    Test Strategy:
    1. Discretize a fixed synthetic corpus with crossings on 16 px cells
    2. Compare MA for uniform MR anchors with P=8 and P=24
    """
    # Arrange
    config = SceneConfig(width=64, height=64, straight_lines=(2, 3), crossings=(1, 2), seed=3)
    grid = Grid(rows=4, cols=4, cell_size=16)
    dataset = [
        discretize(scene.truth, grid, config.num_classes, "mr") for scene in generate(config, 10)
    ]

    # Act
    ma_small = ma_statistic(dataset, uniform_anchors("mr", 8))
    ma_large = ma_statistic(dataset, uniform_anchors("mr", 24))

    # Assert
    assert 0.0 <= ma_large <= ma_small <= 1.0


def test_ma_with_kmeans_anchors_shrinks_as_p_grows():
    """
    Test that more k-means MR anchors never drop more gts.

    Test Strategy:
    1. Build three synthetic corpora with crossings, one per seed
    2. Fit k-means MR anchors with P=4, 8 and 24 on each corpus
    3. Verify MA(24) <= MA(8) <= MA(4) on the medians over corpora
    """
    # Arrange
    grid = Grid(rows=4, cols=4, cell_size=16)
    ma = {4: [], 8: [], 24: []}
    for seed in (3, 5, 7):
        config = SceneConfig(
            width=64, height=64, straight_lines=(2, 3), crossings=(1, 2), seed=seed
        )
        dataset = [
            discretize(scene.truth, grid, config.num_classes, "mr")
            for scene in generate(config, 10)
        ]
        segments = list(itertools.chain.from_iterable(dataset))

        # Act
        for p in ma:
            ma[p].append(ma_statistic(dataset, kmeans_anchors(segments, p, "mr", seed=seed)))

    # Assert
    medians = {p: statistics.median(values) for p, values in ma.items()}
    assert 0.0 <= medians[24] <= medians[8] <= medians[4] <= 1.0
    assert all(
        large <= small
        for small, large in zip(ma[4] + ma[8], ma[8] + ma[24])
    )


def test_anchor_set_round_trips_through_json(tmp_path: pathlib.Path):
    # Arrange
    anchors = uniform_anchors("mr", 8)
    filepath = tmp_path / "anchors.json"

    # Act
    save_anchor_set(anchors, filepath)
    loaded = load_anchor_set(filepath)

    # Assert
    document = json.loads(filepath.read_text())
    assert document["space"] == "mr" and document["P"] == 8
    assert loaded.space == anchors.space
    assert np.allclose(loaded.anchors, anchors.anchors)


@pytest.mark.parametrize(
    "document, error",
    [
        ({"space": "mp", "P": 2, "anchors": [[0.5, 0.5]]}, InvalidAnchorError),
        ({"space": "polar", "P": 1, "anchors": [[0.5, 0.5]]}, ValidationError),
        ({"space": "mp", "anchors": [[0.5, 0.5]]}, ValidationError),
    ],
)
def test_anchor_set_from_invalid_document_raises(document, error):
    with pytest.raises(error):
        AnchorSet.from_dict(document)
