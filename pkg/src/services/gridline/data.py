"""
Synthetic Scene and Annotation I/O Module

This module produces the desk-scale dataset the predictor is trained and
evaluated on, and reads and writes every file format gridline exchanges.

Key Features:
    - Seeded scene generation: straight lines, quadratic curves sampled every
      4 px of arc, crossing pairs through a shared interior point, and merges
      sharing a terminal vertex
    - Rasterization with skimage line drawing and disk dilation for wider strokes
    - Geometric augmentation (rotation about the center, crop with resize,
      optional random area fill), applied consistently to raster and truth;
      never mirrors
    - JSON-lines annotations validated per line, binary PGM (P5) rasters and a
      dataset manifest listing (raster, annotation line) pairs

Example:
    scenes = generate(SceneConfig(seed=7), n=200)
    save_dataset("data/train", scenes, SceneConfig(seed=7))
"""

import io
import json
import math
import logging
import pathlib
from dataclasses import dataclass, field
from typing import Any, Sequence

import jsonschema
import numpy as np
import shapely
from PIL import Image, UnidentifiedImageError
from shapely.geometry import LineString, Point
from scipy.ndimage import binary_dilation
from skimage.draw import line as draw_line
from skimage.morphology import disk
from skimage.transform import AffineTransform, warp

from src.core.custom_classes import SubscriptableDataclass
from src.core.utils import (
    load_file,
    validate_against_schema,
    write_bytes_atomic,
    write_json_atomic,
)
from src.core.constants import (
    GRIDLINE_APP_NAME,
    CURVE_ARC_STEP_PX,
    MAX_AUGMENT_ROTATION_DEG,
    POINT_SEPARATION_EPS,
    IMPOSSIBLE_CONSTRAINT_ERROR_CODE,
    ANNOTATION_PARSE_ERROR_CODE,
)
from src.services.gridline.exceptions import (
    AnnotationParseError,
    GridlineError,
    ImpossibleConstraintError,
)
from src.services.gridline.geom import Grid, Point2, Polyline, PredictionGrid, Space
from src.services.gridline.utils import derive_rng

LOGGER = logging.getLogger(GRIDLINE_APP_NAME)

ANNOTATION_SCHEMA = "annotation_schema_definition.json"
DATASET_MANIFEST_SCHEMA = "dataset_manifest_schema_definition.json"
DATASET_MANIFEST_NAME = "manifest.json"
DATASET_ANNOTATIONS_NAME = "annotations.jsonl"


@dataclass(kw_only=True, frozen=True)
class SceneConfig(SubscriptableDataclass):
    """
    Parameters of synthetic scene generation.

    Count ranges are inclusive ``(low, high)`` pairs drawn per scene.

    Raises:
        ImpossibleConstraintError: The configuration cannot produce a scene,
            e.g. a stroke wider than the image or an inverted range.
    """

    width: int = 64
    height: int = 64
    straight_lines: tuple[int, int] = (1, 2)
    curves: tuple[int, int] = (0, 1)
    crossings: tuple[int, int] = (0, 1)
    merges: tuple[int, int] = (0, 1)
    labels: tuple[int, ...] = (0, 1)
    stroke: int = 1
    background: int = 0
    foreground: int = 255
    min_length: float = 16.0
    margin: float = 1.0
    seed: int = 7

    def __post_init__(self) -> None:
        for name in ("straight_lines", "curves", "crossings", "merges", "labels"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        problems = []
        if self.width < 1 or self.height < 1:
            problems.append(f"image size {self.width}x{self.height}")
        if self.stroke < 1 or self.stroke >= min(self.width, self.height):
            problems.append(f"stroke {self.stroke} for a {self.width}x{self.height} image")
        usable = min(self.width, self.height) - 2 * self.margin
        if self.margin < 0 or self.min_length <= 0 or self.min_length > usable:
            problems.append(
                f"minimum length {self.min_length} with margin {self.margin}"
            )
        for name in ("straight_lines", "curves", "crossings", "merges"):
            low, high = getattr(self, name)
            if low < 0 or low > high:
                problems.append(f"{name} range {low}..{high}")
        if not self.labels or any(label < 0 for label in self.labels):
            problems.append(f"labels {self.labels}")
        if not (0 <= self.background <= 255 and 0 <= self.foreground <= 255):
            problems.append("intensities outside 0..255")
        if self.background == self.foreground:
            problems.append("foreground equals background")
        if sum(getattr(self, n)[1] for n in ("straight_lines", "curves", "crossings", "merges")) == 0:
            problems.append("every polyline count range is empty")
        if problems:
            raise ImpossibleConstraintError(
                "Impossible scene configuration: " + "; ".join(problems),
                IMPOSSIBLE_CONSTRAINT_ERROR_CODE,
            )

    @property
    def num_classes(self) -> int:
        return max(self.labels) + 1


@dataclass(kw_only=True, frozen=True, eq=False)
class Scene:
    """
    A grayscale raster with its ground-truth polylines.

    Attributes:
        raster (np.ndarray): (height, width) uint8 image, row-major.
        truth (tuple[Polyline, ...]): In-bounds polylines in pixels.
    """

    raster: np.ndarray = field(repr=False)
    truth: tuple[Polyline, ...] = ()

    @property
    def width(self) -> int:
        return int(self.raster.shape[1])

    @property
    def height(self) -> int:
        return int(self.raster.shape[0])


@dataclass(kw_only=True, frozen=True)
class AugmentConfig(SubscriptableDataclass):
    """
    Parameters of the random geometric augmentation.

    Attributes:
        max_rotation_deg (float): Rotation drawn from [-max, max] degrees.
        min_crop_fraction (float): Crop side drawn from [min, 1] of the image side.
        fill_probability (float): Chance of painting a random rectangle with a
            random intensity into the raster; the truth is left untouched.
    """

    max_rotation_deg: float = MAX_AUGMENT_ROTATION_DEG
    min_crop_fraction: float = 0.8
    fill_probability: float = 0.0


class _SceneBuilder:
    """Draws the polylines of one scene from a dedicated generator."""

    def __init__(self, cfg: SceneConfig, rng: np.random.Generator) -> None:
        self._cfg = cfg
        self._rng = rng
        self._low = np.array([cfg.margin, cfg.margin])
        self._high = np.array([cfg.width - cfg.margin, cfg.height - cfg.margin])

    def _point(self, low=None, high=None) -> np.ndarray:
        low = self._low if low is None else low
        high = self._high if high is None else high
        return self._rng.uniform(low, high)

    def _label(self) -> int:
        return int(self._rng.choice(self._cfg.labels))

    def _count(self, bounds: tuple[int, int]) -> int:
        return int(self._rng.integers(bounds[0], bounds[1] + 1))

    def _distant_pair(self) -> tuple[np.ndarray, np.ndarray]:
        while True:
            a, b = self._point(), self._point()
            if np.linalg.norm(b - a) >= self._cfg.min_length:
                return a, b

    def straight(self) -> Polyline:
        a, b = self._distant_pair()
        return Polyline.from_array([a, b], label=self._label())

    def curve(self) -> Polyline:
        start, end = self._distant_pair()
        control = self._point()
        return Polyline.from_array(
            sample_quadratic_bezier(start, control, end), label=self._label()
        )

    def _ray_length(self, origin: np.ndarray, direction: np.ndarray) -> float:
        limits = []
        for axis in (0, 1):
            if direction[axis] > 1e-12:
                limits.append((self._high[axis] - origin[axis]) / direction[axis])
            elif direction[axis] < -1e-12:
                limits.append((self._low[axis] - origin[axis]) / direction[axis])
        return min(limits)

    def crossing(self) -> list[Polyline]:
        quarter = np.array([self._cfg.width, self._cfg.height]) / 4.0
        center = self._point(np.maximum(self._low, quarter), np.minimum(self._high, 3 * quarter))
        first = self._rng.uniform(0.0, np.pi)
        second = first + self._rng.uniform(np.pi / 6, 5 * np.pi / 6)
        polylines = []
        for angle in (first, second):
            direction = np.array([math.cos(angle), math.sin(angle)])
            if self._rng.random() < 0.5:
                direction = -direction
            back = self._rng.uniform(0.5, 1.0) * self._ray_length(center, -direction)
            ahead = self._rng.uniform(0.5, 1.0) * self._ray_length(center, direction)
            polylines.append(
                Polyline.from_array(
                    [center - back * direction, center, center + ahead * direction],
                    label=self._label(),
                )
            )
        return polylines

    def merge(self) -> list[Polyline]:
        terminal = self._point()
        polylines = []
        for _ in range(2):
            while True:
                start = self._point()
                if np.linalg.norm(terminal - start) >= self._cfg.min_length:
                    break
            polylines.append(Polyline.from_array([start, terminal], label=self._label()))
        return polylines

    def build(self) -> list[Polyline]:
        cfg = self._cfg
        truth: list[Polyline] = []
        truth += [self.straight() for _ in range(self._count(cfg.straight_lines))]
        truth += [self.curve() for _ in range(self._count(cfg.curves))]
        for _ in range(self._count(cfg.crossings)):
            truth += self.crossing()
        for _ in range(self._count(cfg.merges)):
            truth += self.merge()
        if not truth:
            truth.append(self.straight())
        return truth


def sample_quadratic_bezier(
    start: np.ndarray,
    control: np.ndarray,
    end: np.ndarray,
    step: float = CURVE_ARC_STEP_PX,
) -> np.ndarray:
    """
    Samples a quadratic Bezier curve at equal arc-length steps of at most ``step``.

    Returns:
        np.ndarray: (N, 2) vertices starting at ``start`` and ending at ``end``.
    """
    t = np.linspace(0.0, 1.0, 512)[:, None]
    dense = (1 - t) ** 2 * start + 2 * (1 - t) * t * control + t**2 * end
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(dense, axis=0), axis=1))])
    pieces = max(1, math.ceil(arc[-1] / step))
    targets = np.linspace(0.0, arc[-1], pieces + 1)
    samples = np.column_stack(
        [np.interp(targets, arc, dense[:, 0]), np.interp(targets, arc, dense[:, 1])]
    )
    samples[0], samples[-1] = start, end
    return samples


def rasterize(
    truth: Sequence[Polyline],
    size: tuple[int, int],
    stroke: int = 1,
    intensities: tuple[int, int] = (0, 255),
) -> np.ndarray:
    """
    Draws polylines onto a uniform background.

    A pixel (col, row) covers [col, col+1) x [row, row+1). Strokes wider than
    one pixel dilate the 1-px drawing with a disk of radius (stroke - 1) // 2.

    Args:
        truth (Sequence[Polyline]): Polylines in pixels.
        size (tuple[int, int]): (width, height).
        stroke (int, optional): Stroke width in pixels.
        intensities (tuple[int, int], optional): (background, foreground).

    Returns:
        np.ndarray: (height, width) uint8 raster.
    """
    width, height = size
    background, foreground = intensities
    mask = np.zeros((height, width), dtype=bool)
    for polyline in truth:
        points = polyline.as_array()
        cols = np.clip(np.floor(points[:, 0]).astype(int), 0, width - 1)
        rows = np.clip(np.floor(points[:, 1]).astype(int), 0, height - 1)
        for i in range(len(points) - 1):
            rr, cc = draw_line(rows[i], cols[i], rows[i + 1], cols[i + 1])
            mask[rr, cc] = True
    radius = (stroke - 1) // 2
    if radius > 0:
        mask = binary_dilation(mask, structure=disk(radius))
    raster = np.full((height, width), background, dtype=np.uint8)
    raster[mask] = foreground
    return raster


def generate(cfg: SceneConfig, n: int) -> list[Scene]:
    """
    Generates ``n`` scenes; scene ``i`` depends only on (cfg.seed, i).

    Raises:
        ImpossibleConstraintError: Raised by SceneConfig validation.
    """
    scenes = []
    for index in range(n):
        truth = _SceneBuilder(cfg, derive_rng(cfg.seed, index)).build()
        raster = rasterize(
            truth,
            (cfg.width, cfg.height),
            cfg.stroke,
            (cfg.background, cfg.foreground),
        )
        scenes.append(Scene(raster=raster, truth=tuple(truth)))
    LOGGER.debug("Generated %d scenes with seed %d", n, cfg.seed)
    return scenes


def _scene_transform(
    width: int, height: int, rotation_deg: float, crop_box: tuple[float, float, float, float]
) -> np.ndarray:
    """3x3 pixel-coordinate matrix: rotate about the center, then crop and resize."""
    u0, v0, crop_w, crop_h = crop_box
    center = np.array([width / 2.0, height / 2.0])
    theta = math.radians(rotation_deg)
    rotate = AffineTransform(rotation=theta).params
    to_origin = AffineTransform(translation=-center).params
    back = AffineTransform(translation=center).params
    crop = AffineTransform(translation=(-u0, -v0)).params
    resize = AffineTransform(scale=(width / crop_w, height / crop_h)).params
    return resize @ crop @ back @ rotate @ to_origin


def _orient_like(piece: np.ndarray, original: LineString) -> np.ndarray:
    head = original.project(Point(piece[0]))
    tail = original.project(Point(piece[-1]))
    return piece[::-1] if head > tail else piece


def _drop_repeats(points: np.ndarray) -> np.ndarray:
    keep = [0]
    for i in range(1, len(points)):
        if np.linalg.norm(points[i] - points[keep[-1]]) > POINT_SEPARATION_EPS:
            keep.append(i)
    return points[keep]


def _transform_polyline(
    polyline: Polyline, matrix: np.ndarray, width: int, height: int
) -> list[Polyline]:
    moved = AffineTransform(matrix=matrix)(polyline.as_array())
    inside = (
        np.all(moved >= 0.0)
        and np.all(moved[:, 0] <= width)
        and np.all(moved[:, 1] <= height)
    )
    if inside:
        return [Polyline.from_array(_drop_repeats(moved), label=polyline.label)]

    original = LineString(moved)
    clipped = shapely.clip_by_rect(original, 0.0, 0.0, float(width), float(height))
    pieces = []
    for part in getattr(clipped, "geoms", [clipped]):
        if not isinstance(part, LineString) or part.is_empty or part.length < 1e-6:
            continue
        coords = np.asarray(part.coords, dtype=float)[:, :2]
        coords = np.clip(coords, 0.0, [width, height])
        coords = _drop_repeats(_orient_like(coords, original))
        if len(coords) >= 2:
            pieces.append(Polyline.from_array(coords, label=polyline.label))
    return pieces


def transform_scene(
    scene: Scene,
    rotation_deg: float,
    crop_box: tuple[float, float, float, float] | None = None,
    background: int = 0,
) -> Scene:
    """
    Rotates a scene about its center and resizes a crop back to full size.

    The same pixel transform is applied to the raster (nearest neighbour) and
    to the truth; truth leaving the image is clipped to it, keeping direction.
    Positive angles turn +u towards +v (clockwise on screen).

    Args:
        scene (Scene): Input scene.
        rotation_deg (float): Rotation angle in degrees.
        crop_box (tuple, optional): (u0, v0, width, height) of the crop in the
            rotated image. Defaults to the whole image.
        background (int, optional): Value of uncovered raster pixels.

    Returns:
        Scene: The transformed scene.
    """
    width, height = scene.width, scene.height
    crop_box = crop_box or (0.0, 0.0, float(width), float(height))
    if rotation_deg == 0 and tuple(crop_box) == (0.0, 0.0, float(width), float(height)):
        return scene
    matrix = _scene_transform(width, height, rotation_deg, crop_box)

    # skimage samples at pixel centers, which sit at +0.5 in polyline coordinates
    half = AffineTransform(translation=(0.5, 0.5)).params
    pixel_matrix = np.linalg.inv(half) @ matrix @ half
    raster = warp(
        scene.raster,
        AffineTransform(matrix=pixel_matrix).inverse,
        order=0,
        mode="constant",
        cval=background,
        preserve_range=True,
        output_shape=(height, width),
    ).astype(np.uint8)

    truth = []
    for polyline in scene.truth:
        truth.extend(_transform_polyline(polyline, matrix, width, height))
    return Scene(raster=raster, truth=tuple(truth))


def augment(
    scene: Scene,
    seed: int,
    cfg: AugmentConfig | None = None,
    background: int = 0,
    keys: Sequence[int] = (),
) -> Scene:
    """
    Applies a random rotation, crop-with-resize and optional area fill.

    Draws come from ``derive_rng(seed, *keys)``, the same per-item streams
    ``generate`` uses, so each (epoch, sample) gets its own stream.

    Args:
        scene (Scene): Input scene.
        seed (int): Root seed of all random draws.
        cfg (AugmentConfig, optional): Ranges of the draws.
        background (int, optional): Value of uncovered raster pixels.
        keys (Sequence[int], optional): Item coordinates, e.g. (epoch, index).

    Returns:
        Scene: The augmented scene; deterministic per (seed, keys); never
        mirrored.
    """
    cfg = cfg or AugmentConfig()
    rng = derive_rng(seed, *keys)
    rotation = float(rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg))
    fraction = float(rng.uniform(cfg.min_crop_fraction, 1.0))
    crop_w, crop_h = fraction * scene.width, fraction * scene.height
    u0 = float(rng.uniform(0.0, scene.width - crop_w))
    v0 = float(rng.uniform(0.0, scene.height - crop_h))
    result = transform_scene(scene, rotation, (u0, v0, crop_w, crop_h), background)

    if rng.random() < cfg.fill_probability:
        raster = result.raster.copy()
        cols = np.sort(rng.integers(0, scene.width + 1, size=2))
        rows = np.sort(rng.integers(0, scene.height + 1, size=2))
        raster[rows[0] : rows[1], cols[0] : cols[1]] = int(rng.integers(0, 256))
        result = Scene(raster=raster, truth=result.truth)
    return result


@dataclass(kw_only=True, frozen=True, eq=False)
class AnnotationRecord:
    """
    One line of an annotation file.

    Attributes:
        width, height (int): Image size in pixels.
        polylines (tuple[Polyline, ...]): Polylines of the image.
        confidences (tuple[float, ...] | None): Per polyline confidence;
            ``None`` means 1 for every polyline.
        raster (str | None): Path of the raster, relative to the annotation file.
        predictors (dict | None): Full predictor dump written by ``predict``.
    """

    width: int
    height: int
    polylines: tuple[Polyline, ...] = ()
    confidences: tuple[float, ...] | None = None
    raster: str | None = None
    predictors: dict | None = field(default=None, repr=False)

    def to_dict(self) -> dict[str, Any]:
        polylines = []
        for i, polyline in enumerate(self.polylines):
            item: dict[str, Any] = {"points": polyline.as_array().tolist()}
            if polyline.label is not None:
                item["label"] = int(polyline.label)
            if self.confidences is not None:
                item["confidence"] = float(self.confidences[i])
            polylines.append(item)
        document: dict[str, Any] = {
            "image": {"w": self.width, "h": self.height},
            "polylines": polylines,
        }
        if self.raster is not None:
            document["raster"] = self.raster
        if self.predictors is not None:
            document["predictors"] = self.predictors
        return document

    @classmethod
    def from_dict(cls, document: dict) -> "AnnotationRecord":
        polylines, confidences = [], []
        for item in document["polylines"]:
            polylines.append(Polyline.from_array(item["points"], label=item.get("label")))
            confidences.append(float(item.get("confidence", 1.0)))
        has_confidence = any("confidence" in item for item in document["polylines"])
        return cls(
            width=int(document["image"]["w"]),
            height=int(document["image"]["h"]),
            polylines=tuple(polylines),
            confidences=tuple(confidences) if has_confidence else None,
            raster=document.get("raster"),
            predictors=document.get("predictors"),
        )


def read_annotations(filepath: str | pathlib.Path) -> list[AnnotationRecord]:
    """
    Reads a JSON-lines annotation file; blank lines are skipped.

    Raises:
        AnnotationParseError: Malformed JSON, schema violation or invalid
            geometry, naming the 1-based line number.
    """
    records = []
    with open(filepath, "r", encoding="utf-8") as fp:
        for line_number, line in enumerate(fp, start=1):
            if not line.strip():
                continue
            try:
                document = json.loads(line)
                validate_against_schema(document, ANNOTATION_SCHEMA)
                records.append(AnnotationRecord.from_dict(document))
            except (json.JSONDecodeError, jsonschema.ValidationError, GridlineError) as e:
                raise AnnotationParseError(
                    f"{filepath}:{line_number}: {e}",
                    ANNOTATION_PARSE_ERROR_CODE,
                    line_number=line_number,
                ) from e
    return records


def write_annotations(
    filepath: str | pathlib.Path, records: Sequence[AnnotationRecord]
) -> pathlib.Path:
    text = "".join(json.dumps(record.to_dict()) + "\n" for record in records)
    return write_bytes_atomic(filepath, text.encode("utf-8"))


def write_pgm(filepath: str | pathlib.Path, raster: np.ndarray) -> pathlib.Path:
    """Writes an 8-bit grayscale raster as binary PGM (P5)."""
    buffer = io.BytesIO()
    image = Image.fromarray(np.ascontiguousarray(raster, dtype=np.uint8))
    image.save(buffer, format="PPM")
    return write_bytes_atomic(filepath, buffer.getvalue())


def read_pgm(filepath: str | pathlib.Path) -> np.ndarray:
    """
    Reads a PGM raster with 8-bit samples.

    Raises:
        AnnotationParseError: Not a PGM, 16-bit samples or truncated data.
    """
    try:
        with Image.open(filepath) as image:
            if image.format != "PPM" or image.mode != "L":
                raise AnnotationParseError(
                    f"{filepath}: expected 8-bit PGM, got {image.format}/{image.mode}",
                    ANNOTATION_PARSE_ERROR_CODE,
                )
            image.load()
            return np.asarray(image, dtype=np.uint8).copy()
    except (UnidentifiedImageError, ValueError) as e:
        raise AnnotationParseError(
            f"{filepath}: unreadable PGM ({e})", ANNOTATION_PARSE_ERROR_CODE
        ) from e
    except OSError as e:
        if not pathlib.Path(filepath).is_file():
            raise
        raise AnnotationParseError(
            f"{filepath}: unreadable PGM ({e})", ANNOTATION_PARSE_ERROR_CODE
        ) from e


def save_dataset(
    directory: str | pathlib.Path,
    scenes: Sequence[Scene],
    cfg: SceneConfig | None = None,
) -> pathlib.Path:
    """
    Writes scenes as PGM rasters, one annotation file and a manifest.

    Returns:
        pathlib.Path: Path of the manifest.
    """
    directory = pathlib.Path(directory)
    records, items = [], []
    for index, scene in enumerate(scenes):
        raster_name = f"images/scene_{index:05d}.pgm"
        write_pgm(directory / raster_name, scene.raster)
        records.append(
            AnnotationRecord(
                width=scene.width,
                height=scene.height,
                polylines=scene.truth,
                raster=raster_name,
            )
        )
        items.append({"raster": raster_name, "annotation_line": index})
    write_annotations(directory / DATASET_ANNOTATIONS_NAME, records)
    manifest = {
        "annotations": DATASET_ANNOTATIONS_NAME,
        "items": items,
        "scene_config": cfg.to_dict() if cfg is not None else None,
    }
    return write_json_atomic(directory / DATASET_MANIFEST_NAME, manifest)


def load_dataset(path: str | pathlib.Path) -> list[Scene]:
    """
    Loads the scenes of a dataset directory (or its manifest file).

    Raises:
        jsonschema.ValidationError: Malformed manifest.
        AnnotationParseError: Malformed annotation or raster.
    """
    path = pathlib.Path(path)
    manifest_path = path / DATASET_MANIFEST_NAME if path.is_dir() else path
    manifest = load_file(manifest_path)
    validate_against_schema(manifest, DATASET_MANIFEST_SCHEMA)
    root = manifest_path.parent
    records = read_annotations(root / manifest["annotations"])
    scenes = []
    for item in manifest["items"]:
        line = item["annotation_line"]
        if not 0 <= line < len(records):
            raise AnnotationParseError(
                f"{manifest_path}: annotation line {line} does not exist",
                ANNOTATION_PARSE_ERROR_CODE,
            )
        raster = read_pgm(root / item["raster"])
        record = records[line]
        if raster.shape != (record.height, record.width):
            raise AnnotationParseError(
                f"{item['raster']}: raster {raster.shape} disagrees with annotation",
                ANNOTATION_PARSE_ERROR_CODE,
            )
        scenes.append(Scene(raster=raster, truth=record.polylines))
    return scenes


def prediction_dump(pred: PredictionGrid) -> dict[str, Any]:
    """Serializes a full predictor grid for an annotation record."""
    return {
        "cell_size": pred.grid.cell_size,
        "representation": str(pred.representation),
        "P": pred.P,
        "num_classes": pred.num_classes,
        "geometry": pred.geometry.tolist(),
        "labels": pred.labels.tolist(),
        "confidence": pred.confidence.tolist(),
    }


def load_prediction_dump(record: AnnotationRecord) -> PredictionGrid:
    """
    Rebuilds the predictor grid stored in a ``predict`` output record.

    Raises:
        AnnotationParseError: The record carries no predictor dump.
    """
    dump = record.predictors
    if dump is None:
        raise AnnotationParseError(
            "Record holds no predictor dump", ANNOTATION_PARSE_ERROR_CODE
        )
    grid = Grid.for_image(record.width, record.height, int(dump["cell_size"]))
    return PredictionGrid(
        grid=grid,
        representation=Space(dump["representation"]),
        geometry=np.asarray(dump["geometry"], dtype=float),
        labels=np.asarray(dump["labels"], dtype=float),
        confidence=np.asarray(dump["confidence"], dtype=float),
    )
