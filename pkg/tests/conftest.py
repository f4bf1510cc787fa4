# pylint: disable=redefined-outer-name, unused-argument
# Disable above pylint flags as pytest fixture definitions
# can lead to these pylint warnings.
"""
Gridline Test Fixtures Module

Shared fixtures for the unit and integration tests:
    - Seeded random generators
    - Small grids and synthetic scenes
    - A tiny predictor head for gradient and training checks
"""

import numpy as np
import pytest

from src.services.gridline.data import SceneConfig, generate
from src.services.gridline.geom import Grid, Point2, Polyline, Space
from src.services.gridline.model import HeadConfig


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240607)


@pytest.fixture
def grid_8px() -> Grid:
    """A 4x4 grid of 8-px cells covering a 32x32 image."""
    return Grid(rows=4, cols=4, cell_size=8)


@pytest.fixture
def horizontal_line() -> Polyline:
    return Polyline(points=(Point2(0, 4), Point2(24, 4)), label=0)


@pytest.fixture
def small_scene_config() -> SceneConfig:
    return SceneConfig(
        width=32,
        height=32,
        straight_lines=(1, 2),
        curves=(0, 1),
        crossings=(0, 0),
        merges=(0, 0),
        labels=(0, 1),
        min_length=8.0,
        seed=11,
    )


@pytest.fixture
def small_scenes(small_scene_config):
    return generate(small_scene_config, 4)


@pytest.fixture
def tiny_head() -> HeadConfig:
    return HeadConfig(
        cell_size=4,
        hidden=4,
        predictors=2,
        num_classes=2,
        representation=Space.MR,
    )
