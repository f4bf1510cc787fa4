"""
Unit tests for scene generation, rasterization, augmentation and the file
formats of the data module.
"""

import json
import pathlib

import numpy as np
import pytest
from PIL import Image

from src.services.gridline.data import (
    AnnotationRecord,
    AugmentConfig,
    Scene,
    SceneConfig,
    augment,
    generate,
    load_dataset,
    load_prediction_dump,
    prediction_dump,
    rasterize,
    read_annotations,
    read_pgm,
    sample_quadratic_bezier,
    save_dataset,
    transform_scene,
    write_annotations,
    write_pgm,
)
from src.services.gridline.exceptions import AnnotationParseError, ImpossibleConstraintError
from src.services.gridline.geom import Grid, Point2, Polyline, PredictionGrid, discretize
from src.services.gridline.utils import derive_rng


def _scenes_equal(first: Scene, second: Scene) -> bool:
    return np.array_equal(first.raster, second.raster) and first.truth == second.truth


def test_generate_zero_scenes_is_empty(small_scene_config):
    assert generate(small_scene_config, 0) == []


def test_generate_is_deterministic(small_scene_config):
    # Act
    first = generate(small_scene_config, 5)
    second = generate(small_scene_config, 5)

    # Assert
    assert all(_scenes_equal(a, b) for a, b in zip(first, second))


def test_scene_depends_only_on_seed_and_index(small_scene_config):
    # Act
    short = generate(small_scene_config, 2)
    long = generate(small_scene_config, 6)

    # Assert
    assert all(_scenes_equal(a, b) for a, b in zip(short, long))


def test_generated_scenes_respect_configuration():
    """
    Test the constraints every generated scene satisfies.

    Test Strategy:
    1. Generate 100 scenes with crossings and merges enabled
    2. Verify raster shape, vertex bounds and labels
    3. Verify every truth polyline splits on a 16 px grid without error
    """
    # Arrange
    cfg = SceneConfig(width=64, height=48, crossings=(0, 1), merges=(0, 1), labels=(0, 2), seed=4)
    grid = Grid.for_image(cfg.width, cfg.height, 16)

    # Act
    scenes = generate(cfg, 100)

    # Assert
    for scene in scenes:
        assert scene.raster.shape == (48, 64)
        assert scene.raster.dtype == np.uint8
        assert len(scene.truth) >= 1
        for polyline in scene.truth:
            points = polyline.as_array()
            assert np.all(points >= cfg.margin - 1e-9)
            assert np.all(points <= np.array([cfg.width, cfg.height]) - cfg.margin + 1e-9)
            assert polyline.label in cfg.labels
        discretize(scene.truth, grid, cfg.num_classes, "mr")


@pytest.mark.parametrize(
    "kwargs",
    [
        {"stroke": 64},
        {"min_length": 100.0},
        {"straight_lines": (3, 1)},
        {"labels": ()},
        {"foreground": 0},
        {"straight_lines": (0, 0), "curves": (0, 0), "crossings": (0, 0), "merges": (0, 0)},
    ],
)
def test_impossible_scene_config_raises(kwargs):
    with pytest.raises(ImpossibleConstraintError) as e:
        SceneConfig(**kwargs)
    assert e.value.error_type == "IMPOSSIBLE_CONSTRAINT"


def test_bezier_samples_keep_endpoints_and_step():
    # Arrange
    start, control, end = np.array([0.0, 0.0]), np.array([20.0, 40.0]), np.array([40.0, 0.0])

    # Act
    samples = sample_quadratic_bezier(start, control, end, step=4.0)

    # Assert
    assert samples[0].tolist() == [0.0, 0.0]
    assert samples[-1].tolist() == [40.0, 0.0]
    assert np.all(np.linalg.norm(np.diff(samples, axis=0), axis=1) <= 4.0 + 1e-9)


def test_rasterize_empty_truth_is_uniform_background():
    # Act
    raster = rasterize([], (8, 6), intensities=(17, 200))

    # Assert
    assert raster.shape == (6, 8)
    assert np.all(raster == 17)


def test_rasterize_horizontal_line_marks_one_row_per_column():
    # Arrange
    line = Polyline(points=(Point2(2.0, 5.5), Point2(20.0, 5.5)))

    # Act
    raster = rasterize([line], (32, 32))

    # Assert
    assert np.count_nonzero(raster[:, 2:21], axis=0).tolist() == [1] * 19
    assert np.all(raster[5, 2:21] == 255)
    assert np.count_nonzero(raster) == 19


def test_rasterize_wider_stroke_dilates():
    # Arrange
    line = Polyline(points=(Point2(4.0, 8.5), Point2(12.0, 8.5)))

    # Act
    thin = rasterize([line], (16, 16), stroke=1)
    wide = rasterize([line], (16, 16), stroke=3)

    # Assert
    assert np.count_nonzero(wide) > np.count_nonzero(thin)
    assert np.all(wide[7:10, 6] == 255)
    assert wide[6, 6] == 0


def test_augment_identity_leaves_scene_unchanged(small_scenes):
    # Arrange
    cfg = AugmentConfig(max_rotation_deg=0.0, min_crop_fraction=1.0, fill_probability=0.0)

    # Act
    augmented = augment(small_scenes[0], seed=3, cfg=cfg)

    # Assert
    assert _scenes_equal(augmented, small_scenes[0])


def test_quarter_turn_rotates_raster_and_truth():
    """
    Test a 90 degree rotation about the image center.

    Test Strategy:
    1. Draw a horizontal line through the center of a 32x32 image
    2. Rotate the scene by 90 degrees
    3. Verify the truth becomes the matching vertical line, pointing down
    4. Verify the raster pixels now form a single column
    """
    # Arrange
    truth = (Polyline(points=(Point2(4.0, 16.0), Point2(28.0, 16.0)), label=1),)
    scene = Scene(raster=rasterize(truth, (32, 32)), truth=truth)

    # Act
    rotated = transform_scene(scene, 90.0)

    # Assert
    (polyline,) = rotated.truth
    assert polyline.as_array() == pytest.approx(np.array([[16.0, 4.0], [16.0, 28.0]]), abs=1e-9)
    assert polyline.label == 1
    rows, cols = np.nonzero(rotated.raster)
    assert set(cols.tolist()) <= {15, 16}
    assert rows.max() - rows.min() >= 20


def test_augment_keeps_truth_in_bounds_and_is_seeded(small_scenes):
    # Arrange
    cfg = AugmentConfig(max_rotation_deg=30.0, min_crop_fraction=0.6, fill_probability=0.5)

    for seed, scene in enumerate(small_scenes * 5):
        # Act
        first = augment(scene, seed, cfg)
        second = augment(scene, seed, cfg)

        # Assert
        assert _scenes_equal(first, second)
        assert first.raster.shape == scene.raster.shape
        for polyline in first.truth:
            points = polyline.as_array()
            assert np.all(points >= 0.0)
            assert np.all(points <= [scene.width, scene.height])


def test_augment_draws_from_per_item_streams(small_scenes):
    """
    Test that augmentation uses the same per-item random streams as generation.

    Test Strategy:
    1. Rotate only, so the first draw fully determines the result
    2. Rebuild the expected scene from derive_rng(seed, epoch, index)
    3. Verify distinct keys give distinct scenes regardless of call order
    """
    # Arrange
    cfg = AugmentConfig(max_rotation_deg=30.0, min_crop_fraction=1.0, fill_probability=0.0)
    scene = small_scenes[0]
    angle = float(derive_rng(7, 2, 5).uniform(-30.0, 30.0))
    expected = transform_scene(scene, angle, (0.0, 0.0, scene.width, scene.height))

    # Act
    later = augment(scene, 7, cfg, keys=(3, 5))
    augmented = augment(scene, 7, cfg, keys=(2, 5))

    # Assert
    assert _scenes_equal(augmented, expected)
    assert _scenes_equal(later, augment(scene, 7, cfg, keys=(3, 5)))
    assert not _scenes_equal(later, augmented)


def test_annotations_round_trip(tmp_path: pathlib.Path):
    # Arrange
    records = [
        AnnotationRecord(
            width=32,
            height=24,
            polylines=(
                Polyline(points=(Point2(0.25, 1.0), Point2(30.5, 20.125)), label=1),
                Polyline(points=(Point2(3.0, 3.0), Point2(9.0, 3.0), Point2(9.0, 12.0))),
            ),
            confidences=(0.75, 0.5),
            raster="images/a.pgm",
        ),
        AnnotationRecord(width=8, height=8),
    ]
    filepath = tmp_path / "annotations.jsonl"

    # Act
    write_annotations(filepath, records)
    loaded = read_annotations(filepath)

    # Assert
    assert [r.to_dict() for r in loaded] == [r.to_dict() for r in records]
    assert loaded[0].polylines[1].label is None
    assert loaded[1].confidences is None


@pytest.mark.parametrize(
    "bad_line",
    [
        '{"image": {"w": 4}, "polylines": []}',
        '{"image": {"w": 4, "h": 4}, "polylines": [{"points": [[0, 0], [0, 0]]}]}',
        "{not json",
    ],
)
def test_read_annotations_reports_line_number(tmp_path: pathlib.Path, bad_line):
    # Arrange
    filepath = tmp_path / "annotations.jsonl"
    good = json.dumps({"image": {"w": 4, "h": 4}, "polylines": []})
    filepath.write_text(f"{good}\n\n{bad_line}\n", encoding="utf-8")

    # Act & Assert
    with pytest.raises(AnnotationParseError) as e:
        read_annotations(filepath)
    assert e.value.line_number == 3
    assert e.value.error_type == "ANNOTATION_PARSE_ERROR"
    assert ":3:" in str(e.value)


def test_pgm_round_trip(tmp_path: pathlib.Path, rng):
    # Arrange
    raster = rng.integers(0, 256, size=(5, 7)).astype(np.uint8)
    filepath = tmp_path / "image.pgm"

    # Act
    write_pgm(filepath, raster)
    loaded = read_pgm(filepath)

    # Assert
    assert filepath.read_bytes().startswith(b"P5\n7 5\n255\n")
    assert np.array_equal(loaded, raster)


def test_read_pgm_skips_header_comments(tmp_path: pathlib.Path):
    # Arrange
    filepath = tmp_path / "image.pgm"
    filepath.write_bytes(b"P5\n# made by hand\n2 2\n255\n" + bytes([0, 64, 128, 255]))

    # Act & Assert
    assert read_pgm(filepath).tolist() == [[0, 64], [128, 255]]


@pytest.mark.parametrize(
    "data",
    [
        b"not an image at all",
        b"P5\n2 2\n65535\n" + bytes(8),
        b"P5\n2 2\n255\n" + bytes(3),
        b"P5\n2",
    ],
)
def test_read_pgm_rejects_unsupported_files(tmp_path: pathlib.Path, data):
    # Arrange
    filepath = tmp_path / "image.pgm"
    filepath.write_bytes(data)

    # Act & Assert
    with pytest.raises(AnnotationParseError):
        read_pgm(filepath)


def test_read_pgm_rejects_other_image_formats(tmp_path: pathlib.Path):
    # Arrange
    filepath = tmp_path / "image.pgm"
    Image.fromarray(np.zeros((2, 2), dtype=np.uint8)).save(filepath, format="PNG")

    # Act & Assert
    with pytest.raises(AnnotationParseError) as e:
        read_pgm(filepath)
    assert e.value.error_type == "ANNOTATION_PARSE_ERROR"


def test_read_pgm_missing_file_is_not_a_parse_error(tmp_path: pathlib.Path):
    with pytest.raises(FileNotFoundError):
        read_pgm(tmp_path / "missing.pgm")


def test_dataset_round_trip(tmp_path: pathlib.Path, small_scene_config, small_scenes):
    """
    Test writing and reading back a generated dataset.

    Test Strategy:
    1. Save the small scenes with their generation config
    2. Verify the manifest lists one raster per scene
    3. Load the directory and compare rasters and truth
    """
    # Act
    manifest_path = save_dataset(tmp_path, small_scenes, small_scene_config)
    loaded = load_dataset(tmp_path)

    # Assert
    manifest = json.loads(manifest_path.read_text())
    assert len(manifest["items"]) == len(small_scenes)
    assert manifest["scene_config"]["seed"] == small_scene_config.seed
    assert all(_scenes_equal(a, b) for a, b in zip(loaded, small_scenes))
    assert len(load_dataset(manifest_path)) == len(small_scenes)


def test_load_dataset_rejects_missing_annotation_line(tmp_path: pathlib.Path, small_scenes):
    # Arrange
    manifest_path = save_dataset(tmp_path, small_scenes[:1])
    manifest = json.loads(manifest_path.read_text())
    manifest["items"][0]["annotation_line"] = 5
    manifest_path.write_text(json.dumps(manifest))

    # Act & Assert
    with pytest.raises(AnnotationParseError):
        load_dataset(tmp_path)


def test_prediction_dump_round_trip(rng):
    # Arrange
    grid = Grid(rows=2, cols=3, cell_size=8)
    prediction = PredictionGrid(
        grid=grid,
        representation="mr",
        geometry=rng.uniform(size=(2, 3, 4, 4)),
        labels=np.full((2, 3, 4, 2), 0.5),
        confidence=rng.uniform(size=(2, 3, 4)),
    )
    record = AnnotationRecord(
        width=grid.width,
        height=grid.height,
        predictors=json.loads(json.dumps(prediction_dump(prediction))),
    )

    # Act
    loaded = load_prediction_dump(record)

    # Assert
    assert loaded.grid == grid
    assert loaded.P == 4
    assert np.array_equal(loaded.geometry, prediction.geometry)
    assert np.array_equal(loaded.confidence, prediction.confidence)


def test_load_prediction_dump_requires_predictors():
    with pytest.raises(AnnotationParseError):
        load_prediction_dump(AnnotationRecord(width=8, height=8))
