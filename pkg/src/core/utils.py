"""
Utility Functions Module

This module provides a collection of helper functions shared by the gridline
services and the command-line interface. It includes utilities for:
    - Config file loading (YAML and JSON)
    - Key-based value normalization of loaded configs
    - JSON schema validation of documents read from disk
    - Atomic writes for rasters, annotations, reports and run manifests
    - Logging setup driven by a dictConfig file and the GRIDLINE_LOG variable
    - Console and plain-text tables rendered with rich

Key Features:
    - YAML and JSON file loading
    - Recursive lower-casing of enum-like config values
    - Crash-safe writes (temporary file plus rename)
    - Flexible logging configuration
"""

import os
import json
import atexit
import pathlib
import logging
import logging.config
import tempfile
from typing import Any

import yaml
import jsonschema
from rich import box
from rich.table import Table
from rich.console import Console

from src.core.constants import GRIDLINE_LOG_ENV_VAR

SCHEMAS_DIR = pathlib.Path(__file__).resolve().parents[1] / "schemas"

LOG_LEVEL_ALIASES = {
    "error": "ERROR",
    "warning": "WARNING",
    "info": "INFO",
    "debug": "DEBUG",
    "critical": "CRITICAL",
}


def convert_specific_keys_to_lowercase(
    item: dict | None = None, keys_to_lowercase: list | None = None
) -> dict:
    """
    Recursively converts specified dictionary keys' string values to lowercase.

    Run configs accept ``MR``, ``Mr`` or ``mr`` alike; this normalizes the
    enum-like values before schema validation.

    Args:
        item (dict, optional): Dictionary to be processed. Defaults to an empty dict.
        keys_to_lowercase (list, optional): Keys whose string values should be
            lower-cased. Defaults to an empty list.

    Returns:
        dict: A new dictionary with the specified string values lower-cased.

    Examples:
        >>> convert_specific_keys_to_lowercase({"space": "MR", "seed": 7}, ["space"])
        {'space': 'mr', 'seed': 7}
    """
    item = {} if not item else item
    keys_to_lowercase = [] if not keys_to_lowercase else keys_to_lowercase

    def process(key: str | None, value: Any) -> Any:
        if isinstance(value, dict):
            return {k: process(k, v) for k, v in value.items()}
        if isinstance(value, list):
            return [process(key, v) for v in value]
        if key in keys_to_lowercase and isinstance(value, str):
            return value.lower()
        return value

    return process(None, item)


def load_file(filepath: str | pathlib.Path) -> dict:
    """
    Loads and parses YAML or JSON files into a dictionary.

    Args:
        filepath (str | pathlib.Path): Path to the file to be loaded.

    Returns:
        dict: The parsed contents of the file.

    Raises:
        ValueError: If the file format is not supported (.yaml, .yml, or .json).

    Examples:
        >>> load_file('ablation.yaml')
        {'representation': 'mr', 'predictors': 8}
    """
    filepath = str(filepath)
    if filepath.endswith((".yaml", ".yml")):
        with open(filepath, "r", encoding="utf-8") as file:
            return yaml.safe_load(file)
    elif filepath.endswith(".json"):
        with open(filepath, "r", encoding="utf-8") as file:
            return json.load(file)
    else:
        raise ValueError(
            "Unsupported file format. Only .yaml, .yml, and .json are supported."
        )


def validate_against_schema(instance: Any, schema_filename: str) -> None:
    """
    Validates a loaded document against one of the bundled JSON schemas.

    Args:
        instance (Any): The parsed document.
        schema_filename (str): File name inside ``src/schemas``.

    Raises:
        jsonschema.ValidationError: If the document does not conform.
    """
    schema = load_file(SCHEMAS_DIR / schema_filename)
    try:
        jsonschema.validate(instance=instance, schema=schema)
    except jsonschema.ValidationError as e:
        raise jsonschema.ValidationError(f"Validation error: {e.message}")


def write_bytes_atomic(filepath: str | pathlib.Path, data: bytes) -> pathlib.Path:
    """
    Writes ``data`` to ``filepath``, replacing the target atomically.

    The content is written to a temporary file in the destination directory
    and renamed over the target, so readers never observe a partial file.

    Args:
        filepath (str | pathlib.Path): Destination path.
        data (bytes): File content.

    Returns:
        pathlib.Path: The written path.
    """
    target = pathlib.Path(filepath)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(
        prefix=f".{target.name}.", suffix=".tmp", dir=target.parent
    )
    try:
        with os.fdopen(fd, "wb") as fp:
            fp.write(data)
        os.replace(tmp_name, target)
    except BaseException:
        pathlib.Path(tmp_name).unlink(missing_ok=True)
        raise
    return target


def write_json_atomic(filepath: str | pathlib.Path, payload: Any) -> pathlib.Path:
    """Writes ``payload`` as indented JSON through :func:`write_bytes_atomic`."""
    return write_bytes_atomic(
        filepath, (json.dumps(payload, indent=2) + "\n").encode("utf-8")
    )


def resolve_log_level(log_level: str | None = None) -> str:
    """
    Resolves the effective log level.

    Precedence: explicit ``log_level`` argument, then the ``GRIDLINE_LOG``
    environment variable (``error``, ``info`` or ``debug``), then ``INFO``.

    Args:
        log_level (str, optional): Level requested on the command line.

    Returns:
        str: A level name understood by the logging module.
    """
    requested = log_level or os.getenv(GRIDLINE_LOG_ENV_VAR) or "INFO"
    return LOG_LEVEL_ALIASES.get(requested.lower(), "INFO")


def setup_logging(
    log_level: str | None = None,
    command: str = "",
    logging_config_filepath: str = "logging/configs/config.json",
) -> None:
    """
    Configures the logging system based on a JSON configuration file.

    This function sets up logging with the following key operations:
    - Loads logging configuration from a specified JSON file
    - Creates log directories if they don't exist
    - Configures logging levels and handlers
    - Starts a queue listener for asynchronous logging

    Args:
        log_level (str, optional): Logging level to set. Falls back to the
            GRIDLINE_LOG environment variable, then "INFO".
        command (str, optional): Subcommand stamped onto every file record
            by the run_context filter.
        logging_config_filepath (str, optional): Path to the logging configuration
            JSON file. Defaults to "logging/configs/config.json".
    """
    config_file = pathlib.Path(logging_config_filepath)
    if not config_file.is_absolute() and not config_file.exists():
        config_file = (
            pathlib.Path(__file__).resolve().parents[2] / logging_config_filepath
        )
    with open(config_file, encoding="UTF-8") as fp:
        config = json.load(fp)

    # Create logs directory if it doesn't exist
    log_file = pathlib.Path(config["handlers"]["file_json"]["filename"])
    log_file.parent.mkdir(parents=True, exist_ok=True)

    config["loggers"]["root"]["level"] = resolve_log_level(log_level)
    if "run_context" in config.get("filters", {}):
        config["filters"]["run_context"]["command"] = command

    logging.config.dictConfig(config)
    queue_handler = logging.getHandlerByName("queue_handler")
    if queue_handler is not None:
        queue_handler.listener.start()
        atexit.register(queue_handler.listener.stop)


def _build_table(
    table_name: str,
    display_color: str,
    column_names: list[str],
    table_rows: list[list[str]],
    table_padding: int,
) -> Table:
    display_table = Table(
        title=table_name,
        style=display_color,
        box=box.DOUBLE,
        padding=(0, table_padding),
        highlight=True,
    )
    for column_name in column_names:
        display_table.add_column(
            header=column_name, justify="center", style=display_color
        )
    for row in table_rows:
        display_table.add_row(*row)
    return display_table


def create_display_table(
    table_name: str,
    display_color: str,
    column_names: list[str],
    table_rows: list[list[str]],
    table_padding: int = 1,
) -> None:
    """
    Creates and displays a formatted console table using the rich library.

    Args:
        table_name (str): The title to display above the table
        display_color (str): The color to use for the table (e.g., "green", "red")
        column_names (list[str]): List of column headers
        table_rows (list[list[str]]): List of rows, each a list of string values
        table_padding (int, optional): Horizontal padding between cells. Defaults to 1

    Example:
        create_display_table(
            table_name="Evaluation",
            display_color="green",
            column_names=["F1", "Re", "Pr"],
            table_rows=[["0.91", "0.90", "0.92"]],
        )
    """
    Console().print(
        _build_table(
            table_name, display_color, column_names, table_rows, table_padding
        )
    )


def render_display_table(
    table_name: str,
    column_names: list[str],
    table_rows: list[list[str]],
    table_padding: int = 1,
) -> str:
    """
    Renders the same table as :func:`create_display_table` to aligned plain text.

    Args:
        table_name (str): The title to display above the table
        column_names (list[str]): List of column headers
        table_rows (list[list[str]]): List of rows, each a list of string values
        table_padding (int, optional): Horizontal padding between cells. Defaults to 1

    Returns:
        str: The table without color codes, suitable for writing to a file.
    """
    with open(os.devnull, "w", encoding="utf-8") as sink:
        console = Console(record=True, width=160, color_system=None, file=sink)
        console.print(
            _build_table(table_name, "none", column_names, table_rows, table_padding)
        )
        return console.export_text()
