"""General Utility Functions."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Dict, List, Protocol, Union, runtime_checkable

import numpy as np

__all__ = ["config_hash", "convert_to_json_safe", "dumps_report", "round_significant"]

# Every float leaving the lab is printed with this many significant digits.
SIGNIFICANT_DIGITS: int = 12


# ---------------------------------------------------------------------------
# Type definitions
# ---------------------------------------------------------------------------

JsonSafeType = Union[
    None,
    str,
    int,
    bool,
    float,
    Dict[str, "JsonSafeType"],
    List["JsonSafeType"],
]
"""The set of types that are natively representable in JSON."""


@runtime_checkable
class PydanticLike(Protocol):
    """Protocol for objects that expose a Pydantic-style ``model_dump`` method."""

    def model_dump(self) -> Dict[str, "JsonInputType"]: ...  # noqa: E704


JsonInputType = Union[
    None,
    str,
    int,
    bool,
    float,
    np.generic,
    np.ndarray,
    Path,
    Dict[str, "JsonInputType"],
    List["JsonInputType"],
    PydanticLike,
]
"""All types accepted as input to :func:`convert_to_json_safe`."""


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


def round_significant(value: float, digits: int = SIGNIFICANT_DIGITS) -> float:
    """Round *value* to *digits* significant digits."""
    return float(f"{value:.{digits}g}")


def convert_to_json_safe(data: JsonInputType) -> JsonSafeType:
    """Recursively convert a data structure to JSON-safe types.

    Handles:
    - numpy scalars and arrays -> Python scalars and nested lists
    - ``float`` NaN / Inf -> ``None``; finite floats rounded to 12 significant digits
    - ``Path`` -> POSIX string
    - Nested dicts, lists and tuples
    - Pydantic models (via ``.model_dump()``)
    """
    if data is None:
        return None

    # bool MUST be checked before int because bool is a subclass of int.
    if isinstance(data, (bool, np.bool_)):
        return bool(data)

    if isinstance(data, str):
        return data

    if isinstance(data, (int, np.integer)):
        return int(data)

    if isinstance(data, (float, np.floating)):
        value = float(data)
        if math.isnan(value) or math.isinf(value):
            return None
        return round_significant(value)

    if isinstance(data, np.ndarray):
        return convert_to_json_safe(data.tolist())

    if isinstance(data, Path):
        return data.as_posix()

    if isinstance(data, dict):
        return {str(key): convert_to_json_safe(value) for key, value in data.items()}

    if isinstance(data, (list, tuple)):
        return [convert_to_json_safe(item) for item in data]

    if isinstance(data, PydanticLike):
        return convert_to_json_safe(data.model_dump())

    return str(data)


def dumps_report(data: JsonInputType) -> str:
    """Serialize *data* to deterministic JSON text (sorted keys, trailing newline)."""
    return json.dumps(convert_to_json_safe(data), sort_keys=True, indent=2) + "\n"


def config_hash(document: JsonInputType) -> str:
    """SHA-256 of the canonical JSON form of *document* (sorted keys, compact)."""
    canonical = json.dumps(
        convert_to_json_safe(document), sort_keys=True, separators=(",", ":")
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
