"""
Unit tests for the run configuration reader.
"""

import argparse
import json
import pathlib

import pytest
from jsonschema import ValidationError

from src.core.run_config_reader import RunConfigFileReader

VALID_YAML = """
representation: MR
predictors: 8
assignment: Anchors
nms_mode: Keep-Max
radii: [1.0, 4.0]
scene:
  width: 48
  height: 32
  crossings: [0, 2]
"""


@pytest.fixture
def config_file(tmp_path: pathlib.Path) -> pathlib.Path:
    filepath = tmp_path / "ablation.yaml"
    filepath.write_text(VALID_YAML, encoding="utf-8")
    return filepath


def test_reader_loads_and_normalizes_values(config_file):
    """
    Test loading a YAML run config.

    Test Strategy:
        1. Read a config with mixed-case enum values and a scene section
        2. Assert enum values are lower-cased and numbers kept
        3. Assert the scene section is exposed separately
    """
    # Act
    reader = RunConfigFileReader(config_file)

    # Assert
    assert reader.get("representation") == "mr"
    assert reader.get("assignment") == "anchors"
    assert reader.get("nms_mode") == "keep-max"
    assert reader.get("predictors") == 8
    assert reader.get("epochs", 30) == 30
    assert reader.scene == {"width": 48, "height": 32, "crossings": [0, 2]}


def test_reader_without_file_is_empty():
    # Act
    reader = RunConfigFileReader(None)

    # Assert
    assert reader.config == {}
    assert reader.scene == {}


def test_merge_into_keeps_explicit_flags(config_file):
    # Arrange
    args = argparse.Namespace(representation="cart", predictors=None, seed=None)

    # Act
    merged = RunConfigFileReader(config_file).merge_into(args)

    # Assert
    assert merged.representation == "cart"
    assert merged.predictors == 8
    assert merged.radii == [1.0, 4.0]
    assert merged.seed is None


@pytest.mark.parametrize(
    "document",
    [
        {"representation": "polar"},
        {"predictors": 0},
        {"unknown_flag": 1},
        {"scene": {"width": 64, "colour": "red"}},
        {"weights": "1,1,1"},
    ],
)
def test_reader_rejects_invalid_config(tmp_path: pathlib.Path, document):
    # Arrange
    filepath = tmp_path / "config.json"
    filepath.write_text(json.dumps(document), encoding="utf-8")

    # Act & Assert
    with pytest.raises(ValidationError):
        RunConfigFileReader(filepath)


def test_reader_accepts_weights_as_list(tmp_path: pathlib.Path):
    # Arrange
    filepath = tmp_path / "config.json"
    filepath.write_text(json.dumps({"weights": [1, 0.5, 0.5, 2]}), encoding="utf-8")

    # Act & Assert
    assert RunConfigFileReader(filepath).get("weights") == [1, 0.5, 0.5, 2]
