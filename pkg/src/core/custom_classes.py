"""
Module containing custom classes to be used throughout the solution.
"""

from dataclasses import asdict, fields
from typing import Any

import numpy as np


class SubscriptableDataclass:
    """
    A base class that makes dataclasses subscriptable and convertible to dictionaries.

    Provides dictionary-like access to dataclass fields and conversion to a
    JSON friendly dictionary: numpy arrays become nested lists, numpy scalars
    become Python scalars and tuples become lists.
    """

    def __getitem__(self, key: str) -> Any:
        """
        Enables dictionary-style access to dataclass fields.

        Args:
            key (str): The field name to access

        Returns:
            Any: The value of the requested field
        """
        if key not in {f.name for f in fields(self)}:
            raise KeyError(key)
        return getattr(self, key)

    def to_dict(self) -> dict[str, Any]:
        """
        Converts the dataclass instance to a JSON compatible dictionary.

        Returns:
            dict[str, Any]: Dictionary representation of the dataclass
        """
        return _to_plain(asdict(self))


def _to_plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value
