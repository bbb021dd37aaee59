"""
Base Service Class.

Long-running lab workflows share one logger and one ``LabConfig``.
Both arrive through the constructor so tests can inject in-memory
loggers and explicit settings.
"""

from __future__ import annotations

from app.config import LabConfig
from app.logger import StructuredLogger


class BaseService:
    """Holds the injected logger and process settings."""

    def __init__(self, logger: StructuredLogger, config: LabConfig) -> None:
        self._logger: StructuredLogger = logger
        self._config: LabConfig = config

    @property
    def config(self) -> LabConfig:
        return self._config
