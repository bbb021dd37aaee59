"""
FairDG Lab Entry Point.

Bootstraps configuration, logging and the service container, then hands
control to the command-line interface.  Every subsystem is wired here;
no module-level globals beyond the configuration singleton.

Usage::

    python main.py verify-bounds --instances 1000 --seed 7
    python main.py sweep --config experiment.json --output-dir runs/sweep
"""

from __future__ import annotations

import sys

from app.cli import run
from app.config import get_config
from app.logger import StructuredLogger, get_logger
from app.services import create_services


def main() -> int:
    """Wire dependencies and run one CLI invocation."""
    logger: StructuredLogger = get_logger("fairdg")

    # ------------------------------------------------------------------
    # 1. Configuration (from .env / environment variables)
    # ------------------------------------------------------------------
    config = get_config()

    # ------------------------------------------------------------------
    # 2. Service Container (single composition root)
    # ------------------------------------------------------------------
    services = create_services(config=config, logger=logger)

    # ------------------------------------------------------------------
    # 3. Command-line dispatch
    # ------------------------------------------------------------------
    return run(sys.argv[1:], services=services)


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        sys.exit(130)
