"""
Predictor Head Module

A small per-cell network maps each cell's pixel patch to P hypotheses of
V = 4 geometry + C label + 1 confidence values. The same weights are shared by
all cells. This module holds the head, its output activations, analytic
backpropagation, the mini-batch training loop and checkpoint I/O.

Key Features:
    - One hidden layer with LeakyReLU(0.1); patches scaled to [0, 1]
    - Geometry activation ``linear`` or ``sigmoid`` (MR displacement mapped
      through 2 * sigmoid - 1); anchor mode predicts offsets from the anchors
    - Softmax label block, sigmoid or linear confidence
    - SGD with momentum; dynamic assignment recomputed every step, static
      anchor assignment computed once per sample
    - Per-sample work on a thread pool, reduced in a fixed order
    - Versioned JSON checkpoints (header ``gridline-v1``)
"""

import math
import time
import logging
import pathlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Literal, Mapping, Sequence

import numpy as np
from rich.progress import track
from scipy.special import expit, softmax

from src.core.custom_classes import SubscriptableDataclass
from src.core.utils import load_file, write_json_atomic
from src.core.constants import (
    GRIDLINE_APP_NAME,
    CHECKPOINT_FORMAT_HEADER,
    DEFAULT_BATCH_SIZE,
    DEFAULT_CELL_SIZE,
    DEFAULT_CONFIDENCE_THRESHOLD,
    DEFAULT_EPOCHS,
    DEFAULT_HIDDEN_UNITS,
    DEFAULT_LEARNING_RATE,
    DEFAULT_MOMENTUM,
    DEFAULT_PREDICTORS,
    DEFAULT_SEED,
    LEAKY_RELU_SLOPE,
    LINEAR_ACTIVATION_LABEL,
    SIGMOID_ACTIVATION_LABEL,
    DYNAMIC_ASSIGNMENT_LABEL,
    ANCHOR_ASSIGNMENT_LABEL,
    CHECKPOINT_ERROR_CODE,
    INVALID_ANCHOR_ERROR_CODE,
    INSUFFICIENT_DATA_ERROR_CODE,
    INVALID_ASSIGNMENT_ERROR_CODE,
    INVALID_CONFIG_ERROR_CODE,
    SHAPE_MISMATCH_ERROR_CODE,
    TRAINING_DIVERGENCE_ERROR_CODE,
)
from src.services.gridline.anchors import AnchorSet, AssignmentPolicy, assign_to_anchors
from src.services.gridline.data import AugmentConfig, Scene, augment
from src.services.gridline.exceptions import (
    CheckpointError,
    InsufficientDataError,
    InvalidAnchorError,
    InvalidAssignmentError,
    InvalidConfigError,
    InvalidCostMatrixError,
    ShapeMismatchError,
    TrainingDivergenceError,
)
from src.services.gridline.geom import (
    REPRESENTATIONS,
    CellTruth,
    Grid,
    ImageSegment,
    PredictionGrid,
    Space,
    cell_to_image,
    cell_truths,
    discretize,
    group_by_cell,
)
from src.services.gridline.loss import (
    CellAssignment,
    LossBreakdown,
    LossGradients,
    LossWeights,
    loss_and_gradients,
)
from src.services.gridline.matching import match_coordinates
from src.services.gridline.metrics import OutcomeCounts, classify_outcomes, retrieval_metrics
from src.services.gridline.utils import derive_rng, handle_gridline_exceptions

LOGGER = logging.getLogger(GRIDLINE_APP_NAME)

Activation = Literal["linear", "sigmoid"]
AssignmentMode = Literal["dynamic", "anchors"]
PARAMETER_NAMES = ("w1", "b1", "w2", "b2")


@dataclass(kw_only=True, frozen=True)
class HeadConfig(SubscriptableDataclass):
    """
    Shape and output semantics of the predictor head.

    Attributes:
        cell_size (int): Cell side in pixels; the head reads cell_size^2 inputs.
        hidden (int): Hidden layer width.
        predictors (int): Hypotheses per cell (P).
        num_classes (int): Label categories (C).
        representation (Space): Cart or MR geometry layout.
        geometry_activation (Activation): ``linear`` or ``sigmoid``.
        confidence_activation (Activation): ``linear`` or ``sigmoid``.
        anchors (AnchorSet | None): When set, geometry outputs are offsets
            from the anchors' base geometry.
    """

    cell_size: int = DEFAULT_CELL_SIZE
    hidden: int = DEFAULT_HIDDEN_UNITS
    predictors: int = DEFAULT_PREDICTORS
    num_classes: int = 2
    representation: Space = Space.MR
    geometry_activation: Activation = LINEAR_ACTIVATION_LABEL
    confidence_activation: Activation = SIGMOID_ACTIVATION_LABEL
    anchors: AnchorSet | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "representation", Space(self.representation))
        if self.representation not in REPRESENTATIONS:
            raise ShapeMismatchError(
                f"Head representation must be cart or mr, got {self.representation}",
                SHAPE_MISMATCH_ERROR_CODE,
            )
        if min(self.cell_size, self.hidden, self.predictors, self.num_classes) < 1:
            raise ShapeMismatchError(
                f"Invalid head shape {self.to_dict()}", SHAPE_MISMATCH_ERROR_CODE
            )
        activations = (LINEAR_ACTIVATION_LABEL, SIGMOID_ACTIVATION_LABEL)
        if (
            self.geometry_activation not in activations
            or self.confidence_activation not in activations
        ):
            raise ShapeMismatchError(
                f"Unknown activation {self.geometry_activation}/{self.confidence_activation}",
                SHAPE_MISMATCH_ERROR_CODE,
            )
        if self.anchors is not None and self.anchors.P != self.predictors:
            raise InvalidAnchorError(
                f"{self.anchors.P} anchors for {self.predictors} predictors",
                INVALID_ANCHOR_ERROR_CODE,
            )

    @property
    def values_per_predictor(self) -> int:
        return 4 + self.num_classes + 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "cell_size": self.cell_size,
            "hidden": self.hidden,
            "predictors": self.predictors,
            "num_classes": self.num_classes,
            "representation": str(self.representation),
            "geometry_activation": self.geometry_activation,
            "confidence_activation": self.confidence_activation,
            "anchors": self.anchors.to_dict() if self.anchors is not None else None,
        }

    @classmethod
    def from_dict(cls, document: Mapping[str, Any]) -> "HeadConfig":
        values = dict(document)
        anchors = values.pop("anchors", None)
        return cls(
            **values,
            anchors=AnchorSet.from_dict(anchors) if anchors is not None else None,
        )


@dataclass(kw_only=True, eq=False)
class ModelParams:
    """
    Weights of the head: inputs (cs^2) -> hidden (H) -> outputs (P * V).

    Attributes:
        config (HeadConfig): Head shape and activations.
        w1 (np.ndarray): (cs^2, H) input weights.
        b1 (np.ndarray): (H,) hidden biases.
        w2 (np.ndarray): (H, P * V) output weights.
        b2 (np.ndarray): (P * V,) output biases.
        seed (int): Seed of the initializer.
    """

    config: HeadConfig
    w1: np.ndarray = field(repr=False)
    b1: np.ndarray = field(repr=False)
    w2: np.ndarray = field(repr=False)
    b2: np.ndarray = field(repr=False)
    seed: int = DEFAULT_SEED

    def __post_init__(self) -> None:
        cfg = self.config
        expected = {
            "w1": (cfg.cell_size**2, cfg.hidden),
            "b1": (cfg.hidden,),
            "w2": (cfg.hidden, cfg.predictors * cfg.values_per_predictor),
            "b2": (cfg.predictors * cfg.values_per_predictor,),
        }
        for name, shape in expected.items():
            value = np.asarray(getattr(self, name), dtype=float)
            if value.shape != shape:
                raise ShapeMismatchError(
                    f"Parameter {name} has shape {value.shape}, expected {shape}",
                    SHAPE_MISMATCH_ERROR_CODE,
                )
            setattr(self, name, value)

    @classmethod
    def initialize(cls, config: HeadConfig, seed: int = DEFAULT_SEED) -> "ModelParams":
        """He-scaled normal input weights, small output weights, zero biases."""
        rng = derive_rng(seed, 0)
        inputs = config.cell_size**2
        outputs = config.predictors * config.values_per_predictor
        return cls(
            config=config,
            w1=rng.normal(0.0, math.sqrt(2.0 / inputs), size=(inputs, config.hidden)),
            b1=np.zeros(config.hidden),
            w2=rng.normal(0.0, math.sqrt(1.0 / config.hidden), size=(config.hidden, outputs)) * 0.1,
            b2=np.zeros(outputs),
            seed=seed,
        )

    @classmethod
    def zeros(cls, config: HeadConfig) -> "ModelParams":
        inputs = config.cell_size**2
        outputs = config.predictors * config.values_per_predictor
        return cls(
            config=config,
            w1=np.zeros((inputs, config.hidden)),
            b1=np.zeros(config.hidden),
            w2=np.zeros((config.hidden, outputs)),
            b2=np.zeros(outputs),
        )

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAMETER_NAMES}

    def copy(self) -> "ModelParams":
        return ModelParams(
            config=self.config,
            seed=self.seed,
            **{name: value.copy() for name, value in self.arrays().items()},
        )


@dataclass(kw_only=True, frozen=True, eq=False)
class _ForwardCache:
    patches: np.ndarray
    hidden_pre: np.ndarray
    hidden: np.ndarray
    geometry_slope: np.ndarray
    labels: np.ndarray
    confidence_slope: np.ndarray


def extract_patches(image: np.ndarray, grid: Grid) -> np.ndarray:
    """
    Splits an image into per-cell patches scaled to [0, 1].

    Returns:
        np.ndarray: (rows * cols, cell_size^2), cells in row-major order.

    Raises:
        ShapeMismatchError: The image does not cover the grid exactly.
    """
    image = np.asarray(image)
    if image.shape != (grid.height, grid.width):
        raise ShapeMismatchError(
            f"Image {image.shape} does not match grid {grid.height}x{grid.width}",
            SHAPE_MISMATCH_ERROR_CODE,
        )
    size = grid.cell_size
    patches = image.reshape(grid.rows, size, grid.cols, size).transpose(0, 2, 1, 3)
    return patches.reshape(grid.rows * grid.cols, size * size).astype(float) / 255.0


def _activate_geometry(raw: np.ndarray, config: HeadConfig) -> tuple[np.ndarray, np.ndarray]:
    if config.geometry_activation == LINEAR_ACTIVATION_LABEL:
        values, slope = raw, np.ones_like(raw)
        if config.anchors is not None:
            values = raw + config.anchors.base_geometry(config.representation)
        return values, slope

    squashed = expit(raw)
    derivative = squashed * (1.0 - squashed)
    if config.anchors is not None:
        base = config.anchors.base_geometry(config.representation)
        return base + 2.0 * squashed - 1.0, 2.0 * derivative
    if config.representation == Space.MR:
        scale = np.array([1.0, 1.0, 2.0, 2.0])
        shift = np.array([0.0, 0.0, -1.0, -1.0])
        return scale * squashed + shift, scale * derivative
    return squashed, derivative


def _forward(params: ModelParams, patches: np.ndarray):
    config = params.config
    hidden_pre = patches @ params.w1 + params.b1
    hidden = np.where(hidden_pre > 0.0, hidden_pre, LEAKY_RELU_SLOPE * hidden_pre)
    raw = (hidden @ params.w2 + params.b2).reshape(
        len(patches), config.predictors, config.values_per_predictor
    )

    geometry, geometry_slope = _activate_geometry(raw[..., :4], config)
    labels = softmax(raw[..., 4:-1], axis=-1)
    if config.confidence_activation == SIGMOID_ACTIVATION_LABEL:
        confidence = expit(raw[..., -1])
        confidence_slope = confidence * (1.0 - confidence)
    else:
        confidence = raw[..., -1]
        confidence_slope = np.ones_like(confidence)

    cache = _ForwardCache(
        patches=patches,
        hidden_pre=hidden_pre,
        hidden=hidden,
        geometry_slope=geometry_slope,
        labels=labels,
        confidence_slope=confidence_slope,
    )
    return geometry, labels, confidence, cache


def _to_grid(params: ModelParams, grid: Grid, geometry, labels, confidence) -> PredictionGrid:
    lead = (grid.rows, grid.cols, params.config.predictors)
    return PredictionGrid(
        grid=grid,
        representation=params.config.representation,
        geometry=geometry.reshape(*lead, 4),
        labels=labels.reshape(*lead, params.config.num_classes),
        confidence=confidence.reshape(lead),
    )


def forward(params: ModelParams, image: np.ndarray, grid: Grid) -> PredictionGrid:
    """
    Runs the head over every cell of an image.

    Args:
        params (ModelParams): Head weights.
        image (np.ndarray): (height, width) grayscale raster.
        grid (Grid): Grid with ``params.config.cell_size``.

    Returns:
        PredictionGrid: Activated geometry, labels and confidence.

    Raises:
        ShapeMismatchError: Image or grid inconsistent with the head.
    """
    if grid.cell_size != params.config.cell_size:
        raise ShapeMismatchError(
            f"Grid cell size {grid.cell_size} differs from head cell size "
            f"{params.config.cell_size}",
            SHAPE_MISMATCH_ERROR_CODE,
        )
    geometry, labels, confidence, _ = _forward(params, extract_patches(image, grid))
    return _to_grid(params, grid, geometry, labels, confidence)


def _backward(
    params: ModelParams, cache: _ForwardCache, grads: LossGradients
) -> dict[str, np.ndarray]:
    config = params.config
    cells = len(cache.patches)
    geometry_grad = grads.geometry.reshape(cells, config.predictors, 4)
    label_grad = grads.labels.reshape(cells, config.predictors, config.num_classes)
    confidence_grad = grads.confidence.reshape(cells, config.predictors)

    raw_grad = np.empty((cells, config.predictors, config.values_per_predictor))
    raw_grad[..., :4] = geometry_grad * cache.geometry_slope
    inner = (label_grad * cache.labels).sum(axis=-1, keepdims=True)
    raw_grad[..., 4:-1] = cache.labels * (label_grad - inner)
    raw_grad[..., -1] = confidence_grad * cache.confidence_slope
    raw_grad = raw_grad.reshape(cells, -1)

    hidden_grad = raw_grad @ params.w2.T
    hidden_pre_grad = hidden_grad * np.where(cache.hidden_pre > 0.0, 1.0, LEAKY_RELU_SLOPE)
    return {
        "w1": cache.patches.T @ hidden_pre_grad,
        "b1": hidden_pre_grad.sum(axis=0),
        "w2": cache.hidden.T @ raw_grad,
        "b2": raw_grad.sum(axis=0),
    }


def dynamic_cell_assignment(
    pred: PredictionGrid, truths: Mapping[tuple[int, int], CellTruth]
) -> dict[tuple[int, int], CellAssignment]:
    """Hungarian matching of every occupied cell against the current prediction."""
    return {
        cell: match_coordinates(pred.geometry[cell[0], cell[1]], truth.geometry)
        for cell, truth in truths.items()
    }


def parameter_gradients(
    params: ModelParams,
    image: np.ndarray,
    grid: Grid,
    truths: Mapping[tuple[int, int], CellTruth],
    weights: LossWeights,
    assignment: Mapping[tuple[int, int], CellAssignment] | None = None,
) -> tuple[LossBreakdown, dict[str, np.ndarray]]:
    """
    Loss of one image and its gradient with respect to every parameter.

    Args:
        params (ModelParams): Head weights.
        image (np.ndarray): Raster of the image.
        grid (Grid): Its grid.
        truths (Mapping): Per-cell ground truth in the head's representation.
        weights (LossWeights): Loss weights.
        assignment (Mapping, optional): Fixed per-cell assignment; computed
            by Hungarian matching on the current prediction when omitted.

    Returns:
        tuple[LossBreakdown, dict[str, np.ndarray]]: Loss and gradients
        keyed like :meth:`ModelParams.arrays`.
    """
    geometry, labels, confidence, cache = _forward(params, extract_patches(image, grid))
    pred = _to_grid(params, grid, geometry, labels, confidence)
    if assignment is None:
        assignment = dynamic_cell_assignment(pred, truths)
    breakdown, grads = loss_and_gradients(pred, truths, assignment, weights)
    return breakdown, _backward(params, cache, grads)


def predict_grid(params: ModelParams, image: np.ndarray, grid: Grid) -> PredictionGrid:
    """Alias of :func:`forward` used by the prediction surface."""
    return forward(params, image, grid)


def predict(
    params: ModelParams,
    image: np.ndarray,
    grid: Grid,
    conf_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
) -> list[ImageSegment]:
    """
    Confident hypotheses of an image in pixel coordinates.

    Geometry is clamped into the unit cell box before conversion; only
    hypotheses with confidence strictly above ``conf_threshold`` are kept.

    Returns:
        list[ImageSegment]: Ordered by (row, col, predictor).
    """
    pred = forward(params, image, grid)
    return [cell_to_image(seg, grid) for seg in pred.cell_segments(conf_threshold)]


@dataclass(kw_only=True, frozen=True)
class TrainConfig(SubscriptableDataclass):
    """
    Training run settings.

    Attributes:
        head (HeadConfig): Head shape, representation, activations, anchors.
        assignment (AssignmentMode): ``dynamic`` (Hungarian per step) or
            ``anchors`` (static assignment to ``head.anchors``).
        weights (LossWeights): Loss weights.
        learning_rate (float): SGD step size (0 leaves parameters unchanged).
        momentum (float): SGD momentum.
        epochs (int): Passes over the training set.
        batch_size (int): Images per step.
        seed (int): Seed of initialization, shuffling and augmentation.
        threads (int): Worker threads for per-image gradients.
        augment (AugmentConfig | None): Per-step geometric augmentation.
        anchor_policy (AssignmentPolicy): Static assignment policy.
        threshold (float): Confidence threshold of the validation F1.
    """

    head: HeadConfig = field(default_factory=HeadConfig)
    assignment: AssignmentMode = DYNAMIC_ASSIGNMENT_LABEL
    weights: LossWeights = field(default_factory=LossWeights)
    learning_rate: float = DEFAULT_LEARNING_RATE
    momentum: float = DEFAULT_MOMENTUM
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    seed: int = DEFAULT_SEED
    threads: int = 1
    augment: AugmentConfig | None = None
    anchor_policy: AssignmentPolicy = "greedy"
    threshold: float = DEFAULT_CONFIDENCE_THRESHOLD

    def __post_init__(self) -> None:
        if not math.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise InvalidConfigError(
                f"learning_rate must be >= 0, got {self.learning_rate}",
                INVALID_CONFIG_ERROR_CODE,
            )
        if self.epochs < 1 or self.batch_size < 1 or self.threads < 1:
            raise InvalidConfigError(
                "epochs, batch_size and threads must be positive",
                INVALID_CONFIG_ERROR_CODE,
            )
        if self.assignment not in (DYNAMIC_ASSIGNMENT_LABEL, ANCHOR_ASSIGNMENT_LABEL):
            raise InvalidAssignmentError(
                f"Unknown assignment mode '{self.assignment}'",
                INVALID_ASSIGNMENT_ERROR_CODE,
            )
        if self.assignment == ANCHOR_ASSIGNMENT_LABEL and self.head.anchors is None:
            raise InvalidAnchorError(
                "Anchor assignment requires an anchor set", INVALID_ANCHOR_ERROR_CODE
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "head": self.head.to_dict(),
            "assignment": self.assignment,
            "weights": self.weights.to_dict(),
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "threads": self.threads,
            "augment": self.augment.to_dict() if self.augment is not None else None,
            "anchor_policy": self.anchor_policy,
            "threshold": self.threshold,
        }


@dataclass(kw_only=True, frozen=True)
class EpochRecord(SubscriptableDataclass):
    """Mean per-image loss terms of one epoch, validation F1 and wall time."""

    epoch: int
    total: float
    geom: float
    conf: float
    cls: float
    val_f1: float | None = None
    seconds: float = 0.0


HISTORY_COLUMNS = ("epoch", "total", "geom", "conf", "cls", "val_f1", "seconds")


@dataclass(kw_only=True)
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)

    @property
    def convergence_epoch(self) -> int | None:
        """Epoch of the best validation F1 (first maximum), else of the lowest loss."""
        if not self.records:
            return None
        scored = [r for r in self.records if r.val_f1 is not None]
        if scored:
            return max(scored, key=lambda r: (r.val_f1, -r.epoch)).epoch
        return min(self.records, key=lambda r: (r.total, r.epoch)).epoch

    def rows(self) -> list[list[Any]]:
        return [[record[column] for column in HISTORY_COLUMNS] for record in self.records]


@dataclass(kw_only=True, eq=False)
class _Sample:
    scene: Scene
    grid: Grid
    truths: dict[tuple[int, int], CellTruth]
    assignment: dict[tuple[int, int], CellAssignment] | None


class Trainer:
    """
    Mini-batch gradient descent of the head over a scene dataset.

    Args:
        dataset (Sequence[Scene]): Training scenes.
        cfg (TrainConfig): Run settings.
        validation (Sequence[Scene], optional): Scenes scored after every
            epoch with the validation F1.
        show_progress (bool, optional): Display a rich progress bar.

    Raises:
        InsufficientDataError: Empty training set.

    Example:
        >>> trainer = Trainer(scenes, TrainConfig(epochs=5))
        >>> params, history = trainer.run()
    """

    def __init__(
        self,
        dataset: Sequence[Scene],
        cfg: TrainConfig,
        validation: Sequence[Scene] | None = None,
        show_progress: bool = False,
    ) -> None:
        self._logger: logging.Logger = logging.getLogger(GRIDLINE_APP_NAME)
        if not dataset:
            raise InsufficientDataError(
                "Training needs at least one scene", INSUFFICIENT_DATA_ERROR_CODE
            )
        self._cfg = cfg
        self._show_progress = show_progress
        self._samples: list[_Sample] = [self._prepare(scene) for scene in dataset]
        self._validation: list[_Sample] = [self._prepare(scene) for scene in validation or []]

        self._params = ModelParams.initialize(cfg.head, cfg.seed)
        self._velocity = {
            name: np.zeros_like(value) for name, value in self._params.arrays().items()
        }
        self._history = TrainingHistory()

    def _prepare(self, scene: Scene) -> _Sample:
        head = self._cfg.head
        grid = Grid.for_image(scene.width, scene.height, head.cell_size)
        segments = discretize(scene.truth, grid, head.num_classes, head.representation)
        truths = {truth.cell: truth for truth in cell_truths(segments, head.representation)}
        assignment = None
        if self._cfg.assignment == ANCHOR_ASSIGNMENT_LABEL:
            assignment = {
                cell: assign_to_anchors(members, head.anchors, self._cfg.anchor_policy)
                for cell, members in group_by_cell(segments).items()
            }
        return _Sample(scene=scene, grid=grid, truths=truths, assignment=assignment)

    def _augmented(self, index: int, epoch: int) -> _Sample:
        sample = self._samples[index]
        if self._cfg.augment is None:
            return sample
        scene = augment(
            sample.scene, self._cfg.seed, self._cfg.augment, keys=(epoch, index)
        )
        return self._prepare(scene)

    def _sample_gradients(self, sample: _Sample):
        return parameter_gradients(
            self._params,
            sample.scene.raster,
            sample.grid,
            sample.truths,
            self._cfg.weights,
            sample.assignment,
        )

    def _step(self, samples: list[_Sample], pool, epoch: int, step: int) -> list[LossBreakdown]:
        mapper = pool.map if pool is not None else map
        try:
            results = list(mapper(self._sample_gradients, samples))
        except InvalidCostMatrixError as e:
            # non-finite predictions reach the Hungarian matching first
            raise TrainingDivergenceError(
                f"Predictions are not finite in epoch {epoch}, step {step}",
                TRAINING_DIVERGENCE_ERROR_CODE,
                epoch=epoch,
                step=step,
            ) from e
        breakdowns = [breakdown for breakdown, _ in results]
        if any(not math.isfinite(b.total) for b in breakdowns):
            raise TrainingDivergenceError(
                f"Loss is not finite in epoch {epoch}, step {step}",
                TRAINING_DIVERGENCE_ERROR_CODE,
                epoch=epoch,
                step=step,
            )

        cells = sum(s.grid.rows * s.grid.cols for s in samples)
        for name, value in self._params.arrays().items():
            gradient = sum(grads[name] for _, grads in results) / cells
            self._velocity[name] = (
                self._cfg.momentum * self._velocity[name]
                - self._cfg.learning_rate * gradient
            )
            value += self._velocity[name]
        return breakdowns

    def _validate(self) -> float | None:
        if not self._validation:
            return None
        head = self._cfg.head
        rule = head.anchors if self._cfg.assignment == ANCHOR_ASSIGNMENT_LABEL else DYNAMIC_ASSIGNMENT_LABEL
        counts = OutcomeCounts()
        for sample in self._validation:
            pred = forward(self._params, sample.scene.raster, sample.grid)
            outcome = classify_outcomes(
                pred, sample.truths, rule, self._cfg.threshold, self._cfg.anchor_policy
            )
            counts = counts + outcome.counts
        return retrieval_metrics(counts).f1

    @handle_gridline_exceptions("train")
    def run(self) -> tuple[ModelParams, TrainingHistory]:
        """
        Trains for ``cfg.epochs`` epochs.

        Returns:
            tuple[ModelParams, TrainingHistory]: Final parameters and history.

        Raises:
            TrainingDivergenceError: The loss stopped being finite.
        """
        cfg = self._cfg
        pool = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
        try:
            for epoch in track(
                range(1, cfg.epochs + 1),
                description="Training",
                disable=not self._show_progress,
            ):
                started = time.perf_counter()
                order = derive_rng(cfg.seed, epoch).permutation(len(self._samples))
                breakdowns: list[LossBreakdown] = []
                for step, begin in enumerate(range(0, len(order), cfg.batch_size)):
                    batch = [
                        self._augmented(int(i), epoch)
                        for i in order[begin : begin + cfg.batch_size]
                    ]
                    breakdowns.extend(self._step(batch, pool, epoch, step))
                record = EpochRecord(
                    epoch=epoch,
                    total=math.fsum(b.total for b in breakdowns) / len(breakdowns),
                    geom=math.fsum(b.geom for b in breakdowns) / len(breakdowns),
                    conf=math.fsum(b.conf for b in breakdowns) / len(breakdowns),
                    cls=math.fsum(b.cls for b in breakdowns) / len(breakdowns),
                    val_f1=self._validate(),
                    seconds=time.perf_counter() - started,
                )
                self._history.records.append(record)
                self._logger.debug(
                    "Epoch %d loss %.6f val_f1 %s",
                    epoch,
                    record.total,
                    record.val_f1,
                    extra=record.to_dict(),
                )
        finally:
            if pool is not None:
                pool.shutdown()

        self._logger.info(
            "Training finished after %d epochs (convergence epoch %s)",
            cfg.epochs,
            self._history.convergence_epoch,
        )
        return self._params, self._history

    @property
    def params(self) -> ModelParams:
        return self._params

    @property
    def history(self) -> TrainingHistory:
        return self._history


def train(
    dataset: Sequence[Scene],
    cfg: TrainConfig,
    validation: Sequence[Scene] | None = None,
    show_progress: bool = False,
) -> tuple[ModelParams, TrainingHistory]:
    """Trains a head; see :class:`Trainer`."""
    return Trainer(dataset, cfg, validation, show_progress).run()


def save_checkpoint(
    params: ModelParams,
    filepath: str | pathlib.Path,
    train_config: TrainConfig | None = None,
) -> pathlib.Path:
    """Writes a versioned JSON checkpoint."""
    document = {
        "format": CHECKPOINT_FORMAT_HEADER,
        "config": params.config.to_dict(),
        "train_config": train_config.to_dict() if train_config is not None else None,
        "seed": params.seed,
        "params": {name: value.tolist() for name, value in params.arrays().items()},
    }
    return write_json_atomic(filepath, document)


def load_checkpoint(filepath: str | pathlib.Path) -> ModelParams:
    """
    Reads a checkpoint written by :func:`save_checkpoint`.

    Raises:
        CheckpointError: Unknown header or malformed content.
    """
    try:
        document = load_file(filepath)
    except (OSError, ValueError) as e:
        raise CheckpointError(f"Cannot read checkpoint {filepath}: {e}", CHECKPOINT_ERROR_CODE) from e
    if not isinstance(document, dict) or document.get("format") != CHECKPOINT_FORMAT_HEADER:
        raise CheckpointError(
            f"{filepath} is not a {CHECKPOINT_FORMAT_HEADER} checkpoint",
            CHECKPOINT_ERROR_CODE,
        )
    try:
        return ModelParams(
            config=HeadConfig.from_dict(document["config"]),
            seed=int(document.get("seed", DEFAULT_SEED)),
            **{name: np.asarray(document["params"][name], dtype=float) for name in PARAMETER_NAMES},
        )
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"Malformed checkpoint {filepath}: {e}", CHECKPOINT_ERROR_CODE) from e
