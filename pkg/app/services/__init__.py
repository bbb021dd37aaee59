"""
Lab Services Package.

Stateless numerical modules (prob_core, bounds, dependence, fairness,
pareto, nn) are plain functions.  The two long-running workflows, the
randomized bound harness and the trainer, are ``BaseService`` classes
that receive their logger and configuration by constructor injection.

The ``create_services()`` factory wires them together and returns a typed
dict that the CLI consumes without knowing the dependency graph.
"""

from __future__ import annotations

from typing import Optional, TypedDict

from app.config import LabConfig, get_config
from app.logger import StructuredLogger, get_logger
from app.services.bound_harness import BoundHarnessService
from app.services.trainer import TrainerService


class ServiceContainer(TypedDict):
    """Typed container for the lab services and their shared dependencies."""

    logger: StructuredLogger
    config: LabConfig
    bound_harness: BoundHarnessService
    trainer: TrainerService


def create_services(
    config: Optional[LabConfig] = None,
    logger: Optional[StructuredLogger] = None,
) -> ServiceContainer:
    """
    Wire every service to one logger and one configuration.

    Args:
        config: Process settings; defaults to the ``get_config()`` singleton.
        logger: Shared logger; defaults to ``get_logger("fairdg")``.

    Returns:
        ServiceContainer mapping service names to fully-wired instances.
    """
    config = config or get_config()
    logger = logger or get_logger("fairdg")

    return ServiceContainer(
        logger=logger,
        config=config,
        bound_harness=BoundHarnessService(logger=logger, config=config),
        trainer=TrainerService(logger=logger, config=config),
    )
