"""Shared utility functions and models for the FairDG lab.

This package provides convenience re-exports so that consumers can import
directly from ``app.utils`` (e.g. ``from app.utils import config_hash``)
while full absolute imports remain supported.
"""

from app.utils.audit import RunEvent, log_run_event
from app.utils.general import (
    config_hash,
    convert_to_json_safe,
    dumps_report,
    round_significant,
)
from app.utils.math_utils import (
    as_distribution,
    as_finite_matrix,
    as_label_vector,
    as_probability_table,
    validate_finite,
)

__all__ = [
    "RunEvent",
    "as_distribution",
    "as_finite_matrix",
    "as_label_vector",
    "as_probability_table",
    "config_hash",
    "convert_to_json_safe",
    "dumps_report",
    "log_run_event",
    "round_significant",
    "validate_finite",
]
