"""
Unit tests for the predictor head: forward pass, backpropagation, training
loop and checkpoints.
"""

import json
import pathlib

import numpy as np
import pytest

from src.services.gridline.anchors import uniform_anchors
from src.services.gridline.exceptions import (
    CheckpointError,
    InsufficientDataError,
    InvalidAnchorError,
    InvalidAssignmentError,
    InvalidConfigError,
    ShapeMismatchError,
    TrainingDivergenceError,
)
from src.services.gridline.geom import Grid, Point2, Polyline, cell_truths, discretize
from src.services.gridline.loss import LossWeights
from src.services.gridline.model import (
    EpochRecord,
    HeadConfig,
    ModelParams,
    TrainConfig,
    Trainer,
    TrainingHistory,
    dynamic_cell_assignment,
    extract_patches,
    forward,
    load_checkpoint,
    parameter_gradients,
    predict,
    save_checkpoint,
    train,
)
from tests.utils import central_difference, relative_error

GRID = Grid(rows=2, cols=2, cell_size=4)


def _truths(head):
    polylines = [
        Polyline(points=(Point2(0.5, 1.0), Point2(7.0, 6.5)), label=1),
        Polyline(points=(Point2(1.0, 7.0), Point2(6.0, 5.0)), label=0),
    ]
    segments = discretize(polylines, GRID, head.num_classes, head.representation)
    return {t.cell: t for t in cell_truths(segments, head.representation)}


HEAD_VARIANTS = [
    {},
    {"representation": "cart"},
    {"confidence_activation": "linear"},
    {"geometry_activation": "sigmoid"},
    {"geometry_activation": "sigmoid", "representation": "cart"},
    {"anchors": uniform_anchors("mr", 2)},
    {"geometry_activation": "sigmoid", "anchors": uniform_anchors("mr", 2)},
]


@pytest.mark.parametrize("variant", HEAD_VARIANTS)
def test_parameter_gradients_match_central_differences(rng, variant):
    """
    Test backpropagation through the head against numerical derivatives.

    Test Strategy:
    1. Build a hidden-4 head on a 2x2 grid of 4 px cells with random weights
    2. Fix the dynamic assignment of the initial prediction
    3. Differentiate the image loss numerically for every parameter
    4. Verify the analytic gradient within a relative error of 1e-4
    """
    # Arrange
    head = HeadConfig(cell_size=4, hidden=4, predictors=2, num_classes=2, **variant)
    params = ModelParams.initialize(head, seed=3)
    params.b1 += rng.normal(0.0, 0.1, size=params.b1.shape)
    params.w2 += rng.normal(0.0, 0.3, size=params.w2.shape)
    params.b2 += rng.normal(0.0, 0.3, size=params.b2.shape)
    image = rng.integers(0, 256, size=(GRID.height, GRID.width))
    truths = _truths(head)
    weights = LossWeights(w_geom=1.0, w_conf1=1.5, w_conf0=0.5, w_class=1.0)
    assignment = dynamic_cell_assignment(forward(params, image, GRID), truths)

    def total():
        return parameter_gradients(params, image, GRID, truths, weights, assignment)[0].total

    # Act
    _, analytic = parameter_gradients(params, image, GRID, truths, weights, assignment)

    # Assert
    for name, values in params.arrays().items():
        numeric = central_difference(total, values)
        assert relative_error(analytic[name], numeric) < 1e-4, name


def test_zero_parameters_give_neutral_outputs(tiny_head):
    # Arrange
    params = ModelParams.zeros(tiny_head)
    image = np.full((GRID.height, GRID.width), 200, dtype=np.uint8)

    # Act
    prediction = forward(params, image, GRID)

    # Assert
    assert prediction.geometry.shape == (2, 2, 2, 4)
    assert prediction.labels.shape == (2, 2, 2, 2)
    assert prediction.confidence.shape == (2, 2, 2)
    assert np.all(prediction.confidence == 0.5)
    assert np.allclose(prediction.labels, 0.5)
    assert not prediction.geometry.any()


@pytest.mark.parametrize("threshold, expected", [(0.5, 0), (0.4, 8)])
def test_predict_keeps_confidence_strictly_above_threshold(tiny_head, threshold, expected):
    # Arrange
    params = ModelParams.zeros(tiny_head)
    image = np.zeros((GRID.height, GRID.width), dtype=np.uint8)

    # Act
    segments = predict(params, image, GRID, threshold)

    # Assert
    assert len(segments) == expected


def test_extract_patches_orders_cells_row_major():
    # Arrange
    image = np.zeros((8, 8))
    image[0:4, 4:8] = 255
    image[4:8, 0:4] = 51

    # Act
    patches = extract_patches(image, GRID)

    # Assert
    assert patches.shape == (4, 16)
    assert patches.mean(axis=1).tolist() == pytest.approx([0.0, 1.0, 0.2, 0.0])


def test_forward_rejects_mismatched_shapes(tiny_head):
    # Arrange
    params = ModelParams.zeros(tiny_head)

    # Act & Assert
    with pytest.raises(ShapeMismatchError):
        forward(params, np.zeros((8, 12)), GRID)
    with pytest.raises(ShapeMismatchError):
        forward(params, np.zeros((16, 16)), Grid(rows=2, cols=2, cell_size=8))


@pytest.mark.parametrize(
    "kwargs, error",
    [
        ({"representation": "mp"}, ShapeMismatchError),
        ({"hidden": 0}, ShapeMismatchError),
        ({"geometry_activation": "tanh"}, ShapeMismatchError),
        ({"predictors": 3, "anchors": uniform_anchors("mr", 2)}, InvalidAnchorError),
    ],
)
def test_head_config_validation(kwargs, error):
    with pytest.raises(error):
        HeadConfig(**kwargs)


def test_model_params_reject_wrong_shapes(tiny_head):
    # Arrange
    params = ModelParams.zeros(tiny_head)

    # Act & Assert
    with pytest.raises(ShapeMismatchError):
        ModelParams(config=tiny_head, w1=params.w1.T, b1=params.b1, w2=params.w2, b2=params.b2)


def test_zero_learning_rate_leaves_parameters_unchanged(tiny_head, small_scenes):
    # Arrange
    cfg = TrainConfig(head=tiny_head, learning_rate=0.0, epochs=2, batch_size=2, seed=5)

    # Act
    params, history = train(small_scenes, cfg)

    # Assert
    initial = ModelParams.initialize(tiny_head, seed=5)
    for name, value in params.arrays().items():
        assert np.array_equal(value, initial.arrays()[name])
    assert [r.epoch for r in history.records] == [1, 2]


def test_training_reduces_loss(tiny_head, small_scenes):
    # Arrange
    cfg = TrainConfig(head=tiny_head, learning_rate=0.01, epochs=15, batch_size=1, seed=1)

    # Act
    _, history = train(small_scenes, cfg)

    # Assert
    assert history.records[-1].total < history.records[0].total
    assert all(np.isfinite(r.total) for r in history.records)


def test_training_is_deterministic_across_thread_counts(tiny_head, small_scenes):
    """
    Test that the per-image work split across threads reduces identically.

    Test Strategy:
    1. Train twice with the same seed, once on one thread and once on three
    2. Verify bit-identical parameters
    """
    # Arrange
    single = TrainConfig(head=tiny_head, epochs=3, batch_size=2, seed=9, threads=1)
    threaded = TrainConfig(head=tiny_head, epochs=3, batch_size=2, seed=9, threads=3)

    # Act
    first, _ = train(small_scenes, single)
    second, _ = train(small_scenes, threaded)

    # Assert
    for name in first.arrays():
        assert np.array_equal(first.arrays()[name], second.arrays()[name])


def test_anchor_training_runs_with_validation(small_scenes):
    # Arrange
    head = HeadConfig(cell_size=4, hidden=4, predictors=2, anchors=uniform_anchors("mp", 2))
    cfg = TrainConfig(head=head, assignment="anchors", epochs=2, batch_size=2)

    # Act
    _, history = train(small_scenes[:2], cfg, validation=small_scenes[2:])

    # Assert
    assert all(0.0 <= r.val_f1 <= 1.0 for r in history.records)
    assert history.convergence_epoch in (1, 2)


@pytest.mark.parametrize("assignment", ["dynamic", "anchors"])
def test_non_finite_parameters_raise_training_divergence(small_scenes, assignment):
    # Arrange
    head = HeadConfig(cell_size=4, hidden=4, predictors=2, anchors=uniform_anchors("mr", 2))
    cfg = TrainConfig(head=head, assignment=assignment, epochs=1, batch_size=1)
    trainer = Trainer(small_scenes, cfg)
    trainer.params.b2[:] = np.nan

    # Act & Assert
    with pytest.raises(TrainingDivergenceError) as e:
        trainer.run()
    assert (e.value.epoch, e.value.step) == (1, 0)
    assert e.value.error_type == "TRAINING_DIVERGED"


def test_trainer_rejects_empty_dataset(tiny_head):
    with pytest.raises(InsufficientDataError):
        Trainer([], TrainConfig(head=tiny_head))


@pytest.mark.parametrize(
    "kwargs, error",
    [
        ({"learning_rate": -0.1}, InvalidConfigError),
        ({"epochs": 0}, InvalidConfigError),
        ({"threads": 0}, InvalidConfigError),
        ({"assignment": "static"}, InvalidAssignmentError),
        ({"assignment": "anchors"}, InvalidAnchorError),
    ],
)
def test_train_config_validation(kwargs, error):
    with pytest.raises(error):
        TrainConfig(**kwargs)


@pytest.mark.parametrize(
    "records, expected",
    [
        ([], None),
        ([(1, 3.0, None), (2, 1.0, None), (3, 2.0, None)], 2),
        ([(1, 3.0, 0.2), (2, 1.0, 0.6), (3, 0.5, 0.6)], 2),
    ],
)
def test_convergence_epoch(records, expected):
    # Arrange
    history = TrainingHistory(
        records=[
            EpochRecord(epoch=e, total=t, geom=t, conf=0.0, cls=0.0, val_f1=f)
            for e, t, f in records
        ]
    )

    # Act & Assert
    assert history.convergence_epoch == expected


def test_checkpoint_round_trip(tmp_path: pathlib.Path):
    # Arrange
    head = HeadConfig(
        cell_size=4,
        hidden=3,
        predictors=2,
        num_classes=3,
        representation="cart",
        geometry_activation="sigmoid",
        anchors=uniform_anchors("cart", 2),
    )
    params = ModelParams.initialize(head, seed=21)
    filepath = tmp_path / "model.json"

    # Act
    save_checkpoint(params, filepath, TrainConfig(head=head, assignment="anchors"))
    loaded = load_checkpoint(filepath)

    # Assert
    assert loaded.config == head
    assert np.allclose(loaded.config.anchors.anchors, head.anchors.anchors)
    assert loaded.seed == 21
    for name, value in params.arrays().items():
        assert np.array_equal(loaded.arrays()[name], value)


@pytest.mark.parametrize(
    "document",
    [
        {"format": "gridline-v0", "config": {}, "params": {}},
        {"format": "gridline-v1", "config": {"cell_size": 4}, "params": {}},
        ["not", "a", "checkpoint"],
    ],
)
def test_load_checkpoint_rejects_bad_documents(tmp_path: pathlib.Path, document):
    # Arrange
    filepath = tmp_path / "model.json"
    filepath.write_text(json.dumps(document))

    # Act & Assert
    with pytest.raises(CheckpointError) as e:
        load_checkpoint(filepath)
    assert e.value.error_type == "INVALID_CHECKPOINT"


def test_load_checkpoint_rejects_unreadable_file(tmp_path: pathlib.Path):
    # Arrange
    filepath = tmp_path / "model.json"
    filepath.write_text("{ truncated")

    # Act & Assert
    with pytest.raises(CheckpointError):
        load_checkpoint(filepath)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.json")
