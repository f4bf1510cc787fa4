"""
Gridline Service Utilities

This module provides the exception-logging decorator wrapped around the long
running gridline entry points, plus the seeding helper that makes every random
draw in the services a deterministic function of user supplied seeds.

Key Features:
    - Uniform logging of typed domain failures with their error code
    - Logging of unexpected numeric failures (floating point errors)
    - Per-item random generators derived from a root seed
"""

import logging
import functools
from typing import Callable, Any

import numpy as np
from src.core.constants import GRIDLINE_APP_NAME
from src.services.gridline.exceptions import GridlineError

LOGGER = logging.getLogger(GRIDLINE_APP_NAME)


def handle_gridline_exceptions(operation: str | None = None) -> Callable:
    """
    A decorator that logs failures of a gridline operation before re-raising.

    Domain errors are logged with their ``error_type`` code; numeric failures
    (``FloatingPointError``, ``ValueError`` raised by numpy/scipy) are logged
    with the operation name. Nothing is swallowed.

    Args:
        operation (str, optional): Name used in log records. Defaults to the
            wrapped function's name.

    Returns:
        Callable: A decorator adding the logging behaviour.

    Examples:
        @handle_gridline_exceptions("train")
        def train(dataset, cfg):
            ...
    """

    def decorator(func: Callable) -> Callable:
        name = operation or func.__name__

        @functools.wraps(func)
        def wrapper(*args, **kwargs) -> Any:
            try:
                return func(*args, **kwargs)
            except GridlineError as e:
                LOGGER.error(
                    "%s failed: %s",
                    name,
                    e,
                    extra={"operation": name, "error_type": e.error_type},
                )
                raise
            except (FloatingPointError, ValueError) as e:
                LOGGER.error(
                    "%s failed with a numeric error: %r",
                    name,
                    e,
                    extra={"operation": name},
                )
                raise

        return wrapper

    return decorator


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """
    Creates a random generator that depends only on ``seed`` and ``keys``.

    Scene ``i`` of a dataset seeded with ``s`` always uses
    ``derive_rng(s, i)``, so items can be produced in any order or in
    parallel without changing their content.

    Args:
        seed (int): Root seed.
        *keys (int): Item coordinates (scene index, epoch, ...).

    Returns:
        np.random.Generator: An independent PCG64 generator.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))
