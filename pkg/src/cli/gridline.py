"""
Grid-Discretized Polyline Estimation Tool.

This CLI ties the gridline pipeline together: it generates synthetic datasets,
discretizes annotations, builds anchors, trains the predictor head, predicts
and decodes polylines, evaluates predictions and renders figures.

Modules and Classes Used:
    - RunConfigFileReader: Reads and validates the optional run config file.
    - Trainer: Trains the predictor head.
    - MetricsReport: Aggregated evaluation written as JSON, text and CSV.

Key Features:
    - One subcommand per pipeline stage: gen, discretize, anchors, train,
      predict, nms, stitch, eval, render
    - Flags first, optional ``--config`` file (JSON/YAML) for the rest
    - A run manifest ``<output>.manifest.json`` written atomically next to
      every output, echoing command, configuration, seeds and paths
    - Exit codes: 0 success, 1 runtime error, 2 usage error

Examples:
    gridline gen --output data/train --count 200 --seed 7
    gridline anchors --space dir --p 4 --uniform --output dir4.json
    gridline train --dataset data/train --validation data/val --output model.json
    gridline predict --checkpoint model.json --dataset data/val --output pred.jsonl
    gridline eval --predictions pred.jsonl --truth data/val --output report.json
"""

import sys
import json
import time
import logging
import pathlib
import argparse
import dataclasses
from typing import Any, Callable, Sequence

import jsonschema
from rich.console import Console

from src.core.utils import load_file, setup_logging, write_bytes_atomic, write_json_atomic
from src.core.run_config_reader import RunConfigFileReader
from src.core.constants import (
    GRIDLINE_APP_NAME,
    GRIDLINE_VERSION,
    DEFAULT_BATCH_SIZE,
    DEFAULT_CELL_SIZE,
    DEFAULT_CONFIDENCE_THRESHOLD,
    DEFAULT_EPOCHS,
    DEFAULT_GATE_RADII,
    DEFAULT_HIDDEN_UNITS,
    DEFAULT_LEARNING_RATE,
    DEFAULT_MOMENTUM,
    DEFAULT_NMS_ANGLE_EPS,
    DEFAULT_PREDICTORS,
    DEFAULT_SEED,
    DEFAULT_STITCH_ANGLE_EPS,
    DEFAULT_STITCH_JOIN_EPS,
    POINT_SEPARATION_EPS,
    DYNAMIC_ASSIGNMENT_LABEL,
    ANCHOR_ASSIGNMENT_LABEL,
    LINEAR_ACTIVATION_LABEL,
    SIGMOID_ACTIVATION_LABEL,
    INVALID_ASSIGNMENT_ERROR_CODE,
)
from src.services.gridline.anchors import (
    AnchorSet,
    kmeans_anchors,
    load_anchor_set,
    save_anchor_set,
    uniform_anchors,
)
from src.services.gridline.data import (
    DATASET_ANNOTATIONS_NAME,
    DATASET_MANIFEST_NAME,
    AnnotationRecord,
    AugmentConfig,
    SceneConfig,
    generate,
    load_dataset,
    load_prediction_dump,
    prediction_dump,
    read_annotations,
    read_pgm,
    save_dataset,
    write_annotations,
)
from src.services.gridline.decode import (
    NmsConfig,
    StitchConfig,
    nms,
    stitch_with_confidence,
)
from src.services.gridline.exceptions import GridlineError, InvalidAssignmentError
from src.services.gridline.geom import (
    CellSegment,
    Grid,
    ImageSegment,
    Point2,
    Polyline,
    Space,
    cell_to_image,
    discretize,
    segment_coordinates,
)
from src.services.gridline.loss import LossWeights
from src.services.gridline.metrics import evaluate, grid_from_segments
from src.services.gridline.model import (
    HISTORY_COLUMNS,
    HeadConfig,
    TrainConfig,
    Trainer,
    forward,
    load_checkpoint,
    save_checkpoint,
)
from src.services.gridline.render import render_svg, save_svg

LOGGER = logging.getLogger(GRIDLINE_APP_NAME)

ERROR_CONSOLE = Console(stderr=True)

DEFAULTS: dict[str, Any] = {
    "log_level": None,
    "seed": DEFAULT_SEED,
    "threads": 1,
    "cell_size": DEFAULT_CELL_SIZE,
    "grid": "8x8",
    "count": 10,
    "stroke": 1,
    "representation": "mr",
    "num_classes": None,
    "space": "mr",
    "predictors": DEFAULT_PREDICTORS,
    "hidden": DEFAULT_HIDDEN_UNITS,
    "anchors": DYNAMIC_ASSIGNMENT_LABEL,
    "anchor_policy": "greedy",
    "geometry_activation": LINEAR_ACTIVATION_LABEL,
    "confidence_activation": SIGMOID_ACTIVATION_LABEL,
    "weights": None,
    "epochs": DEFAULT_EPOCHS,
    "lr": DEFAULT_LEARNING_RATE,
    "momentum": DEFAULT_MOMENTUM,
    "batch_size": DEFAULT_BATCH_SIZE,
    "augment": False,
    "threshold": DEFAULT_CONFIDENCE_THRESHOLD,
    "radii": list(DEFAULT_GATE_RADII),
    "position_eps": None,
    "nms_angle_eps": DEFAULT_NMS_ANGLE_EPS,
    "nms_mode": "keep-max",
    "join_eps": DEFAULT_STITCH_JOIN_EPS,
    "stitch_angle_eps": DEFAULT_STITCH_ANGLE_EPS,
    "index": 0,
}


@dataclasses.dataclass(kw_only=True)
class RunManifest:
    """Everything needed to rerun a command: argv, resolved configuration, seeds and paths."""

    command: str
    argv: list[str]
    config: dict[str, Any]
    seeds: dict[str, int]
    inputs: list[str]
    outputs: list[str]
    tool_version: str = GRIDLINE_VERSION
    wall_time_seconds: float = 0.0


def write_run_manifest(output: str | pathlib.Path, manifest: RunManifest) -> pathlib.Path:
    """Writes ``<output>.manifest.json`` atomically."""
    output = pathlib.Path(output)
    target = output.with_name(output.name + ".manifest.json")
    return write_json_atomic(target, dataclasses.asdict(manifest))


def _plain(value: Any) -> Any:
    if isinstance(value, pathlib.Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        rows, cols = (int(part) for part in text.lower().split("x"))
    except ValueError as e:
        raise ValueError(f"--grid expects ROWSxCOLS, got '{text}'") from e
    return rows, cols


def _parse_weights(value: Any) -> LossWeights:
    if value is None:
        return LossWeights()
    if isinstance(value, str):
        return LossWeights.parse(value)
    return LossWeights(w_geom=value[0], w_conf1=value[1], w_conf0=value[2], w_class=value[3])


def _read_records(path: str | pathlib.Path) -> list[AnnotationRecord]:
    path = pathlib.Path(path)
    if path.is_dir():
        manifest = load_file(path / DATASET_MANIFEST_NAME)
        return read_annotations(path / manifest.get("annotations", DATASET_ANNOTATIONS_NAME))
    return read_annotations(path)


def _dataset_rasters(path: str | pathlib.Path) -> list[str]:
    root = pathlib.Path(path)
    manifest = load_file(root / DATASET_MANIFEST_NAME)
    return [str((root / item["raster"]).resolve()) for item in manifest["items"]]


def _num_classes(records: Sequence[AnnotationRecord], requested: int | None) -> int:
    labels = [p.label for r in records for p in r.polylines if p.label is not None]
    found = max(labels) + 1 if labels else 1
    return max(found, requested or 1)


def _record_segments(record: AnnotationRecord, args) -> list[ImageSegment]:
    """Image-space segments of a record: its predictor dump, else its polyline edges."""
    if record.predictors is not None:
        pred = load_prediction_dump(record)
        return [cell_to_image(s, pred.grid) for s in pred.cell_segments(args.threshold)]
    segments = []
    confidences = record.confidences or (1.0,) * len(record.polylines)
    for polyline, confidence in zip(record.polylines, confidences):
        points = polyline.as_array()
        probs = [0.0] * (int(polyline.label or 0) + 1)
        probs[int(polyline.label or 0)] = 1.0
        for start, end in zip(points, points[1:]):
            segments.append(
                ImageSegment(
                    start=Point2(*start),
                    end=Point2(*end),
                    confidence=float(confidence),
                    label_probs=tuple(probs),
                )
            )
    return segments


def _segments_record(record: AnnotationRecord, segments: Sequence[ImageSegment]) -> AnnotationRecord:
    segments = [s for s in segments if s.length > POINT_SEPARATION_EPS]
    return AnnotationRecord(
        width=record.width,
        height=record.height,
        polylines=tuple(
            Polyline(points=(s.start, s.end), label=s.label) for s in segments
        ),
        confidences=tuple(s.confidence for s in segments),
        raster=record.raster,
    )


def _nms_config(args, cell_size: int) -> NmsConfig:
    return NmsConfig(
        position_eps=args.position_eps or cell_size / 2,
        angle_eps=args.nms_angle_eps,
        mode=args.nms_mode,
    )


def _stitch_config(args) -> StitchConfig:
    return StitchConfig(join_eps=args.join_eps, angle_eps=args.stitch_angle_eps)


def execute_gen(args) -> dict[str, Any]:
    """Generates a synthetic dataset directory."""
    rows, cols = _parse_grid(args.grid)
    scene_values = {
        "width": cols * args.cell_size,
        "height": rows * args.cell_size,
        "stroke": args.stroke,
        "seed": args.seed,
        **args.scene,
    }
    cfg = SceneConfig(**scene_values)
    scenes = generate(cfg, args.count)
    save_dataset(args.output, scenes, cfg)
    LOGGER.info("Wrote %d scenes to %s", len(scenes), args.output)
    return {"inputs": [], "seeds": {"scene": cfg.seed}, "config": cfg.to_dict()}


def execute_discretize(args) -> dict[str, Any]:
    """Writes the per-cell segments of every annotated image as JSON lines."""
    records = _read_records(args.annotations)
    num_classes = _num_classes(records, args.num_classes)
    lines = []
    for record in records:
        grid = Grid.for_image(record.width, record.height, args.cell_size)
        segments = discretize(record.polylines, grid, num_classes, args.representation)
        lines.append(
            {
                "image": {"w": record.width, "h": record.height},
                "cell_size": args.cell_size,
                "representation": args.representation,
                "segments": [
                    {
                        "cell": list(s.cell),
                        "geometry": segment_coordinates(s, Space(args.representation)).tolist(),
                        "label": s.label,
                    }
                    for s in segments
                ],
            }
        )
    text = "".join(json.dumps(line) + "\n" for line in lines)
    write_bytes_atomic(args.output, text.encode("utf-8"))
    return {"inputs": [str(args.annotations)], "seeds": {}}


def execute_anchors(args) -> dict[str, Any]:
    """Builds a uniform or k-means anchor set."""
    if args.kmeans:
        if args.dataset is None:
            raise ValueError("--kmeans needs --dataset")
        records = _read_records(args.dataset)
        num_classes = _num_classes(records, args.num_classes)
        segments: list[CellSegment] = []
        for record in records:
            grid = Grid.for_image(record.width, record.height, args.cell_size)
            segments.extend(discretize(record.polylines, grid, num_classes, Space.MR))
        anchor_set = kmeans_anchors(segments, args.predictors, args.space, args.seed)
        inputs = [str(args.dataset)]
    else:
        anchor_set = uniform_anchors(args.space, args.predictors)
        inputs = []
    save_anchor_set(anchor_set, args.output)
    return {"inputs": inputs, "seeds": {"kmeans": args.seed} if args.kmeans else {}}


def _train_config(args, num_classes: int) -> TrainConfig:
    anchors: AnchorSet | None = None
    assignment = DYNAMIC_ASSIGNMENT_LABEL
    if args.anchors != DYNAMIC_ASSIGNMENT_LABEL:
        anchors = load_anchor_set(args.anchors)
        assignment = ANCHOR_ASSIGNMENT_LABEL
    requested = getattr(args, "assignment", None)
    if requested == ANCHOR_ASSIGNMENT_LABEL and anchors is None:
        raise InvalidAssignmentError(
            "assignment 'anchors' requires --anchors FILE",
            INVALID_ASSIGNMENT_ERROR_CODE,
        )
    if requested == DYNAMIC_ASSIGNMENT_LABEL and anchors is not None:
        raise InvalidAssignmentError(
            f"assignment 'dynamic' conflicts with --anchors {args.anchors}",
            INVALID_ASSIGNMENT_ERROR_CODE,
        )
    args.assignment = assignment
    head = HeadConfig(
        cell_size=args.cell_size,
        hidden=args.hidden,
        predictors=args.predictors,
        num_classes=num_classes,
        representation=Space(args.representation),
        geometry_activation=args.geometry_activation,
        confidence_activation=args.confidence_activation,
        anchors=anchors,
    )
    return TrainConfig(
        head=head,
        assignment=assignment,
        weights=_parse_weights(args.weights),
        learning_rate=args.lr,
        momentum=args.momentum,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        threads=args.threads,
        augment=AugmentConfig() if args.augment else None,
        anchor_policy=args.anchor_policy,
        threshold=args.threshold,
    )


def execute_train(args) -> dict[str, Any]:
    """Trains the head; writes the checkpoint and ``<output>.history.csv``."""
    scenes = load_dataset(args.dataset)
    validation = load_dataset(args.validation) if args.validation else None
    labels = [p.label for s in scenes for p in s.truth if p.label is not None]
    num_classes = max([*labels, 0]) + 1 if args.num_classes is None else args.num_classes
    cfg = _train_config(args, num_classes)

    trainer = Trainer(scenes, cfg, validation, show_progress=sys.stderr.isatty())
    params, history = trainer.run()
    save_checkpoint(params, args.output, cfg)

    rows = [",".join(HISTORY_COLUMNS)]
    for row in history.rows():
        rows.append(",".join("" if v is None else str(v) for v in row))
    output = pathlib.Path(args.output)
    write_bytes_atomic(
        output.with_name(output.stem + ".history.csv"), ("\n".join(rows) + "\n").encode("utf-8")
    )
    inputs = [str(args.dataset)] + ([str(args.validation)] if args.validation else [])
    return {
        "inputs": inputs,
        "seeds": {"train": cfg.seed},
        "config": cfg.to_dict(),
        "convergence_epoch": history.convergence_epoch,
    }


def execute_predict(args) -> dict[str, Any]:
    """Predicts, suppresses and stitches; keeps the full predictor dump per image."""
    params = load_checkpoint(args.checkpoint)
    cell_size = params.config.cell_size
    if args.dataset is not None:
        rasters = _dataset_rasters(args.dataset)
    elif args.images:
        rasters = [str(pathlib.Path(p).resolve()) for p in args.images]
    else:
        raise ValueError("predict needs --dataset or --images")

    records = []
    for raster_path in rasters:
        image = read_pgm(raster_path)
        grid = Grid.for_image(image.shape[1], image.shape[0], cell_size)
        pred = forward(params, image, grid)
        segments = [cell_to_image(s, grid) for s in pred.cell_segments(args.threshold)]
        stitched = stitch_with_confidence(nms(segments, _nms_config(args, cell_size)), _stitch_config(args))
        records.append(
            AnnotationRecord(
                width=grid.width,
                height=grid.height,
                polylines=tuple(p for p, _ in stitched),
                confidences=tuple(c for _, c in stitched),
                raster=raster_path,
                predictors=prediction_dump(pred),
            )
        )
    write_annotations(args.output, records)
    return {"inputs": [str(args.checkpoint), *rasters], "seeds": {"model": params.seed}}


def execute_nms(args) -> dict[str, Any]:
    """Suppresses redundant segments; writes them as two-point polylines."""
    records = _read_records(args.input)
    output = []
    for record in records:
        cell_size = int(record.predictors["cell_size"]) if record.predictors else args.cell_size
        kept = nms(_record_segments(record, args), _nms_config(args, cell_size))
        output.append(_segments_record(record, kept))
    write_annotations(args.output, output)
    return {"inputs": [str(args.input)], "seeds": {}}


def execute_stitch(args) -> dict[str, Any]:
    """Stitches segments into polylines."""
    records = _read_records(args.input)
    output = []
    for record in records:
        stitched = stitch_with_confidence(_record_segments(record, args), _stitch_config(args))
        output.append(
            AnnotationRecord(
                width=record.width,
                height=record.height,
                polylines=tuple(p for p, _ in stitched),
                confidences=tuple(c for _, c in stitched),
                raster=record.raster,
            )
        )
    write_annotations(args.output, output)
    return {"inputs": [str(args.input)], "seeds": {}}


def _prediction_grid(record: AnnotationRecord, args, num_classes: int):
    if record.predictors is not None:
        return load_prediction_dump(record)
    grid = Grid.for_image(record.width, record.height, args.cell_size)
    confidences = record.confidences or (1.0,) * len(record.polylines)
    segments = []
    for polyline, confidence in zip(record.polylines, confidences):
        for s in discretize([polyline], grid, num_classes, args.representation):
            segments.append(dataclasses.replace(s, confidence=float(confidence)))
    return grid_from_segments(segments, grid, num_classes, args.representation)


def execute_eval(args) -> dict[str, Any]:
    """Evaluates predictions against truth: report JSON, text table and gate CSV."""
    predictions = _read_records(args.predictions)
    truth = _read_records(args.truth)
    if len(predictions) != len(truth):
        raise ValueError(
            f"{len(predictions)} prediction records for {len(truth)} truth records"
        )
    num_classes = _num_classes([*predictions, *truth], args.num_classes)
    rule: str | AnchorSet = DYNAMIC_ASSIGNMENT_LABEL
    if args.anchors != DYNAMIC_ASSIGNMENT_LABEL:
        rule = load_anchor_set(args.anchors)

    images = []
    for pred_record, truth_record in zip(predictions, truth):
        pred = _prediction_grid(pred_record, args, num_classes)
        classes = max(pred.num_classes, num_classes)
        truth_segments = discretize(
            truth_record.polylines, pred.grid, classes, pred.representation
        ) if truth_record.polylines else []
        images.append((pred, truth_segments))

    report = evaluate(images, rule, args.threshold, args.radii, args.anchor_policy)
    output = pathlib.Path(args.output)
    write_json_atomic(output, report.to_dict())
    text_path = output.with_name(output.stem + ".txt")
    gates_path = output.with_name(output.stem + ".gates.csv")
    write_bytes_atomic(text_path, report.render_text().encode("utf-8"))
    write_bytes_atomic(gates_path, report.gate_csv().encode("utf-8"))
    if not args.quiet:
        report.display()
    return {
        "inputs": [str(args.predictions), str(args.truth)],
        "seeds": {},
        "extra_outputs": [str(text_path), str(gates_path)],
    }


def execute_render(args) -> dict[str, Any]:
    """Renders one annotation record as an SVG colored by orientation."""
    annotations = pathlib.Path(args.annotations)
    records = _read_records(annotations)
    if not 0 <= args.index < len(records):
        raise ValueError(f"Record {args.index} does not exist in {annotations}")
    record = records[args.index]

    raster = None
    raster_path = args.raster or record.raster
    if raster_path is not None:
        raster_path = pathlib.Path(raster_path)
        if not raster_path.is_absolute() and not annotations.is_dir():
            raster_path = annotations.parent / raster_path
        elif not raster_path.is_absolute():
            raster_path = annotations / raster_path
        raster = read_pgm(raster_path)

    segments: list[ImageSegment] = []
    cell_size = args.cell_size
    if record.predictors is not None:
        pred = load_prediction_dump(record)
        cell_size = pred.grid.cell_size
        segments = [cell_to_image(s, pred.grid) for s in pred.cell_segments(args.threshold)]
    drawing = render_svg(
        record.width,
        record.height,
        raster=raster,
        segments=segments,
        polylines=record.polylines,
        cell_size=cell_size,
    )
    save_svg(drawing, args.output)
    return {"inputs": [str(annotations)], "seeds": {}}


EXECUTORS: dict[str, Callable] = {
    "gen": execute_gen,
    "discretize": execute_discretize,
    "anchors": execute_anchors,
    "train": execute_train,
    "predict": execute_predict,
    "nms": execute_nms,
    "stitch": execute_stitch,
    "eval": execute_eval,
    "render": execute_render,
}


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    """
    Add common arguments to subcommand parsers.

    Every value flag defaults to None so that ``--config`` values and then
    :data:`DEFAULTS` can fill it.
    """
    parser.add_argument("--output", "-o", required=True, type=pathlib.Path, help="Output path")
    parser.add_argument("--config", type=pathlib.Path, help="Run config file (.json, .yaml)")
    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help="Logging level (default: GRIDLINE_LOG, else INFO)",
    )
    parser.add_argument("--seed", type=int, help=f"Random seed (default: {DEFAULT_SEED})")
    parser.add_argument("--threads", type=int, help="Worker threads (default: 1)")
    parser.add_argument("--cell-size", type=int, help=f"Cell side in pixels (default: {DEFAULT_CELL_SIZE})")
    parser.add_argument("--threshold", type=float, help="Confidence threshold (default: 0.5)")
    parser.add_argument("--num-classes", type=int, help="Label categories (default: from data)")


def _add_head_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--representation", choices=["cart", "mr"], type=str.lower)
    parser.add_argument("--predictors", "--p", dest="predictors", type=int, help="Predictors per cell (P)")
    parser.add_argument("--anchors", help="Anchor set file, or 'dynamic' (default)")
    parser.add_argument("--anchor-policy", choices=["greedy", "nearest"])


def _add_decode_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--position-eps", type=float, help="NMS midpoint radius px (default: cell_size/2)")
    parser.add_argument("--nms-angle-eps", type=float, help="NMS angle gate in radians")
    parser.add_argument("--nms-mode", choices=["keep-max", "average"])
    parser.add_argument("--join-eps", type=float, help="Stitch join distance px")
    parser.add_argument("--stitch-angle-eps", type=float, help="Stitch maximum turn in radians")


def create_argument_parser() -> argparse.ArgumentParser:
    """
    Create argument parser with one subcommand per pipeline stage.

    Returns:
        argparse.ArgumentParser: Configured argument parser with subcommands
    """
    parser = argparse.ArgumentParser(
        description="Grid-discretized polyline estimation: data, anchors, training, decoding and evaluation",
        prog="gridline",
    )
    parser.add_argument("--version", action="version", version=f"gridline {GRIDLINE_VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    gen = subparsers.add_parser("gen", help="Generate a synthetic dataset directory")
    add_common_arguments(gen)
    gen.add_argument("--grid", help="ROWSxCOLS cells per image (default: 8x8)")
    gen.add_argument("--count", type=int, help="Number of scenes (default: 10)")
    gen.add_argument("--stroke", type=int, help="Stroke width px (default: 1)")

    disc = subparsers.add_parser("discretize", help="Split annotations into per-cell segments")
    add_common_arguments(disc)
    disc.add_argument("--annotations", required=True, type=pathlib.Path)
    disc.add_argument("--representation", choices=["cart", "mr"], type=str.lower)

    anchors = subparsers.add_parser("anchors", help="Build an anchor set")
    add_common_arguments(anchors)
    anchors.add_argument("--space", choices=["cart", "mr", "mp", "dir"], type=str.lower)
    anchors.add_argument("--predictors", "--p", dest="predictors", type=int, help="Number of anchors (P)")
    method = anchors.add_mutually_exclusive_group()
    method.add_argument("--uniform", action="store_true", help="Uniform lattice (default)")
    method.add_argument("--kmeans", action="store_true", help="k-means over --dataset")
    anchors.add_argument("--dataset", type=pathlib.Path, help="Dataset or annotation file for --kmeans")

    train = subparsers.add_parser("train", help="Train the predictor head")
    add_common_arguments(train)
    _add_head_arguments(train)
    train.add_argument("--dataset", required=True, type=pathlib.Path)
    train.add_argument("--validation", type=pathlib.Path)
    train.add_argument(
        "--assignment",
        choices=[DYNAMIC_ASSIGNMENT_LABEL, ANCHOR_ASSIGNMENT_LABEL],
        type=str.lower,
        help="Expected assignment mode; checked against --anchors",
    )
    train.add_argument("--hidden", type=int)
    train.add_argument("--geometry-activation", choices=["linear", "sigmoid"])
    train.add_argument("--confidence-activation", choices=["linear", "sigmoid"])
    train.add_argument("--weights", help="Loss weights wg,wc1,wc0,wcl")
    train.add_argument("--epochs", type=int)
    train.add_argument("--lr", type=float)
    train.add_argument("--momentum", type=float)
    train.add_argument("--batch-size", type=int)
    train.add_argument("--augment", action="store_true", default=None)

    predict = subparsers.add_parser("predict", help="Predict polylines with a checkpoint")
    add_common_arguments(predict)
    _add_decode_arguments(predict)
    predict.add_argument("--checkpoint", required=True, type=pathlib.Path)
    predict.add_argument("--dataset", type=pathlib.Path)
    predict.add_argument("--images", nargs="+", type=pathlib.Path)

    for name, help_text in (("nms", "Suppress redundant segments"), ("stitch", "Stitch segments into polylines")):
        sub = subparsers.add_parser(name, help=help_text)
        add_common_arguments(sub)
        _add_decode_arguments(sub)
        sub.add_argument("--input", required=True, type=pathlib.Path)

    evaluation = subparsers.add_parser("eval", help="Evaluate predictions against truth")
    add_common_arguments(evaluation)
    _add_head_arguments(evaluation)
    evaluation.add_argument("--predictions", required=True, type=pathlib.Path)
    evaluation.add_argument("--truth", required=True, type=pathlib.Path)
    evaluation.add_argument("--radii", nargs="+", type=float, help="Gate radii px")
    evaluation.add_argument("--quiet", action="store_true")

    render = subparsers.add_parser("render", help="Render an annotation record as SVG")
    add_common_arguments(render)
    render.add_argument("--annotations", required=True, type=pathlib.Path)
    render.add_argument("--index", type=int, help="Record index (default: 0)")
    render.add_argument("--raster", type=pathlib.Path)

    return parser


def _resolve_arguments(args: argparse.Namespace) -> argparse.Namespace:
    reader = RunConfigFileReader(args.config)
    args.scene = reader.scene
    reader.merge_into(args)
    for key, value in DEFAULTS.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    return args


def run(argv: Sequence[str] | None = None) -> int:
    """
    Runs one command.

    Args:
        argv (Sequence[str], optional): Arguments without the program name;
            defaults to ``sys.argv[1:]``.

    Returns:
        int: 0 on success, 1 on runtime errors, 2 on usage errors.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = create_argument_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    started = time.perf_counter()
    try:
        setup_logging(args.log_level, command=args.command)
        args = _resolve_arguments(args)
        LOGGER.info("Running %s", args.command)
        details = EXECUTORS[args.command](args)
    except (GridlineError, jsonschema.ValidationError, OSError, ValueError, KeyError) as e:
        LOGGER.error("%s failed: %s", args.command, e)
        ERROR_CONSOLE.print(f"[red]error:[/red] {e}", markup=True, highlight=False)
        return 1

    config = {key: _plain(value) for key, value in vars(args).items() if key != "command"}
    if details.get("config") is not None:
        config["resolved"] = details["config"]
    if "convergence_epoch" in details:
        config["convergence_epoch"] = details["convergence_epoch"]
    manifest = RunManifest(
        command=args.command,
        argv=argv,
        config=config,
        seeds=details.get("seeds", {}),
        inputs=details.get("inputs", []),
        outputs=[str(args.output), *details.get("extra_outputs", [])],
        wall_time_seconds=time.perf_counter() - started,
    )
    write_run_manifest(args.output, manifest)
    LOGGER.info("Finished %s in %.2fs", args.command, manifest.wall_time_seconds)
    return 0


def main() -> None:
    """Console-script entry point."""
    sys.exit(run())


if __name__ == "__main__":
    main()
