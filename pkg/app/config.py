"""
Application Configuration.

Pydantic Settings model for the FairDG lab.  Process-level settings
(parallelism, logging, numerical tolerances) are loaded from environment
variables and ``.env`` files.  Experiment knobs live in the experiment
JSON document instead (see ``app.models.experiment_models``).
"""

from __future__ import annotations

import logging
import os
import threading
from pathlib import Path
from typing import Optional

from pydantic import Field, model_validator
from pydantic_settings import BaseSettings


class LabConfig(BaseSettings):
    """Central configuration loaded from environment variables and defaults."""

    # --- Parallelism ---
    FAIRDG_THREADS: int = Field(default=1, ge=1)

    # --- Logging ---
    LOG_LEVEL: str = "INFO"
    LOG_CONSOLE_LEVEL: str = "WARNING"
    LOG_FILE: str = ""
    LOG_MAX_BYTES: int = 5_242_880  # 5 MB
    LOG_BACKUP_COUNT: int = 3

    # --- Numerical tolerances ---
    BOUND_TOLERANCE: float = 1e-9
    CHAIN_RULE_TOLERANCE: float = Field(default=1e-10, ge=0.0)
    MI_CLAMP: float = Field(default=1e-12, ge=0.0)
    DCOR_SMOOTHING_EPS: float = Field(default=1e-12, ge=0.0)

    # --- Guards ---
    MAX_JOINT_CELLS: int = Field(default=1_000_000, ge=1)
    GRAD_CHECK_MAX_PARAMS: int = Field(default=10_000, ge=1)

    # --- Outputs ---
    DEFAULT_OUTPUT_DIR: str = "runs"

    model_config = {"env_file": ".env", "env_file_encoding": "utf-8", "extra": "ignore"}

    @model_validator(mode="after")
    def _warn_suspicious_values(self) -> "LabConfig":
        """Log configuration problems that do not justify refusing to start."""
        _log = logging.getLogger("app.config")

        if not Path(".env").exists():
            _log.debug("No .env file found; configuration comes from the environment or defaults.")

        cpu_count = os.cpu_count() or 1
        if self.FAIRDG_THREADS > cpu_count:
            _log.warning(
                "FAIRDG_THREADS=%d exceeds the %d available CPUs; threads will contend.",
                self.FAIRDG_THREADS,
                cpu_count,
            )

        if self.DCOR_SMOOTHING_EPS <= 0:
            _log.warning(
                "DCOR_SMOOTHING_EPS=%g is not positive; distance gradients are undefined "
                "at coincident points.",
                self.DCOR_SMOOTHING_EPS,
            )

        return self


# ---------------------------------------------------------------------------
# Module-level singleton factory
# ---------------------------------------------------------------------------

_config_instance: Optional[LabConfig] = None
_config_lock: threading.Lock = threading.Lock()


def get_config() -> LabConfig:
    """Return a cached ``LabConfig`` singleton.

    Uses a check-lock-check pattern so the fast path takes no lock.
    Prefer passing a ``LabConfig`` explicitly in new code.
    """
    global _config_instance
    if _config_instance is None:
        with _config_lock:
            if _config_instance is None:
                _config_instance = LabConfig()
    return _config_instance


def reset_config() -> None:
    """Drop the cached singleton so the next ``get_config()`` re-reads the environment."""
    global _config_instance
    with _config_lock:
        _config_instance = None
