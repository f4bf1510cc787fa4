"""
Run Configuration Reader Module

This module reads the optional run configuration file accepted by every CLI
command (``--config``), validates it against the bundled JSON schema and merges
it with the command-line flags.

Key Features:
    - YAML or JSON configuration files
    - JSON schema validation (run_config_schema_definition.json)
    - Case-insensitive enum values (representation, space, assignment, ...)
    - Explicit command-line flags take precedence over file values

Warning:
    Flags left at their argparse default of ``None`` count as not given.
"""

import argparse
import pathlib
from typing import Any

from src.core.utils import (
    load_file,
    validate_against_schema,
    convert_specific_keys_to_lowercase,
)

RUN_CONFIG_SCHEMA = "run_config_schema_definition.json"


class RunConfigFileReader:
    """
    A parser for run configuration files with JSON schema validation.

    Args:
        config_filepath (str | pathlib.Path | None): Path to a ``.json``,
            ``.yaml`` or ``.yml`` file, or None for an empty configuration.

    Raises:
        jsonschema.ValidationError: If the file does not conform to the schema.

    Example:
        >>> reader = RunConfigFileReader("ablation.yaml")
        >>> reader.get("representation", "mr")
        'mr'
        >>> args = reader.merge_into(args)
    """

    def __init__(self, config_filepath: str | pathlib.Path | None = None) -> None:
        self._config_filepath = config_filepath
        self._keys_to_lowercase: list[str] = [
            "representation",
            "space",
            "assignment",
            "anchor_policy",
            "geometry_activation",
            "confidence_activation",
            "nms_mode",
        ]
        self._config: dict[str, Any] = {}
        if config_filepath is not None:
            self._load_config_file()
            self._validate_config_file()

    def _load_config_file(self) -> None:
        config_data = load_file(self._config_filepath) or {}
        self._config = convert_specific_keys_to_lowercase(
            config_data, self._keys_to_lowercase
        )

    def _validate_config_file(self) -> None:
        validate_against_schema(self._config, RUN_CONFIG_SCHEMA)

    def get(self, key: str, default: Any = None) -> Any:
        return self._config.get(key, default)

    def merge_into(self, args: argparse.Namespace) -> argparse.Namespace:
        """
        Fills flags that were not given on the command line from the file.

        Args:
            args (argparse.Namespace): Parsed flags; unset flags are ``None``.

        Returns:
            argparse.Namespace: The same namespace, completed.
        """
        for key, value in self._config.items():
            if getattr(args, key, None) is None:
                setattr(args, key, value)
        return args

    @property
    def config(self) -> dict[str, Any]:
        return dict(self._config)

    @property
    def scene(self) -> dict[str, Any]:
        return dict(self._config.get("scene", {}))
