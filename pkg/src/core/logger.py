"""
Structured Logging Module

JSON-lines formatting and run context for every gridline command. Training
epochs, evaluation sweeps and dataset generation all log through the
``gridline`` logger; the rotating file under ``logging/logs`` can then be
filtered by command or epoch after the fact.

Key Features:
    - One JSON document per record with configurable field mapping
    - ``extra=`` attributes (epoch, loss terms, paths) promoted to top level keys
    - numpy scalars and arrays serialized as plain numbers and lists
    - A filter stamping the running subcommand onto every record
"""

import json
import logging
import datetime as dt
from typing import Any, override

import numpy as np

# Attributes every LogRecord carries; anything else arrived through ``extra=``.
LOG_RECORD_BUILTIN_ATTRS = frozenset(vars(logging.makeLogRecord({}))) | {
    "asctime",
    "message",
    "taskName",
}


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


class RunContextFilter(logging.Filter):
    """
    Attach the running subcommand to each record as ``command``.

    Configured from ``logging/configs/config.json``; ``setup_logging`` fills in
    the command name before the configuration is applied.

    Args:
        command (str, optional): Subcommand name, e.g. ``"train"``.
    """

    def __init__(self, command: str = ""):
        super().__init__()
        self.command = command

    @override
    def filter(self, record: logging.LogRecord) -> bool:
        if not hasattr(record, "command"):
            record.command = self.command
        return True


class JsonFormatter(logging.Formatter):
    """
    A logging formatter that serializes log records to JSON lines.

    Args:
        fmt_keys (dict[str, str], optional): Output key to record attribute
            mapping. Defaults to an empty dictionary.

    Examples:
        >>> handler = logging.StreamHandler()
        >>> handler.setFormatter(JsonFormatter(fmt_keys={"level": "levelname"}))
        >>> logging.getLogger("gridline").addHandler(handler)
        >>> logging.getLogger("gridline").info("epoch done", extra={"epoch": 3})
        # {"level": "INFO", "message": "epoch done", "timestamp": "...", "epoch": 3}
    """

    def __init__(self, *, fmt_keys: dict[str, str] | None = None):
        super().__init__()
        self.fmt_keys = dict(fmt_keys or {})

    @override
    def format(self, record: logging.LogRecord) -> str:
        return json.dumps(self.to_dict(record), default=_json_default)

    def to_dict(self, record: logging.LogRecord) -> dict[str, Any]:
        """
        Build the document written for one record.

        Mapped ``fmt_keys`` come first, then the message and UTC timestamp,
        exception and stack text when present, and finally every ``extra=``
        attribute.

        Args:
            record (logging.LogRecord): The log record to process.

        Returns:
            dict[str, Any]: The JSON-ready document.
        """
        computed = {
            "message": record.getMessage(),
            "timestamp": dt.datetime.fromtimestamp(
                record.created, tz=dt.timezone.utc
            ).isoformat(),
        }
        if record.exc_info:
            computed["exc_info"] = self.formatException(record.exc_info)
        if record.stack_info:
            computed["stack_info"] = self.formatStack(record.stack_info)

        document = {}
        for key, attribute in self.fmt_keys.items():
            if attribute in computed:
                document[key] = computed.pop(attribute)
            else:
                document[key] = getattr(record, attribute, None)
        document.update(computed)
        document.update(
            (key, value)
            for key, value in vars(record).items()
            if key not in LOG_RECORD_BUILTIN_ATTRS
        )
        return document
