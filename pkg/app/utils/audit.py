"""
Structured Run-Event Logging Utility.

Every artifact written, checkpoint saved, hyper-parameter chosen or
configuration override applied is logged as one structured JSON object.
Provides a Pydantic-validated model and a single function for consistent
run-trail entries.
"""

from __future__ import annotations

import json
from datetime import datetime, timezone
from typing import Optional, Union

from pydantic import BaseModel, Field

from app.logger import StructuredLogger

__all__ = ["RunEvent", "log_run_event"]

# Flat scalars only; nested structures belong in the artifact itself.
DetailValue = Union[str, int, float, bool, None]


class RunEvent(BaseModel):
    """Schema-validated representation of a single run-trail entry."""

    timestamp: str
    action: str
    artifact: str
    run_id: str
    details: dict[str, DetailValue] = Field(default_factory=dict)


def log_run_event(
    logger: StructuredLogger,
    action: str,
    artifact: str,
    run_id: str,
    details: Optional[dict[str, DetailValue]] = None,
) -> RunEvent:
    """Log a structured JSON run event and return the validated record.

    Args:
        logger: The logger instance to write to.
        action: What happened (e.g. ``"WRITE"``, ``"CHECKPOINT"``,
            ``"SELECT_GAMMA"``, ``"RAISE_CAP"``).
        artifact: What the event concerns (a file path or a setting name).
        run_id: Config hash of the run the event belongs to.
        details: Optional additional context.
    """
    event = RunEvent(
        timestamp=datetime.now(timezone.utc).isoformat(),
        action=action,
        artifact=artifact,
        run_id=run_id,
        details=details or {},
    )
    logger.info("RUN: %s", json.dumps(event.model_dump(), default=str))
    return event
