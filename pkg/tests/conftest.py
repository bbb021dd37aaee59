"""Shared fixtures and the ``slow`` marker gate."""

from __future__ import annotations

import io
from typing import Iterator

import numpy as np
import pytest

from app.config import LabConfig, reset_config
from app.logger import StructuredLogger
from app.models.experiment_models import SynthConfig, TrainConfig


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run end-to-end trend checks"
    )


def pytest_configure(config: pytest.Config) -> None:
    config.addinivalue_line("markers", "slow: end-to-end checks that take minutes")


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def lab_config() -> LabConfig:
    return LabConfig(FAIRDG_THREADS=1, LOG_FILE="")


@pytest.fixture
def log_stream() -> io.StringIO:
    return io.StringIO()


@pytest.fixture
def logger(log_stream: io.StringIO, request: pytest.FixtureRequest) -> Iterator[StructuredLogger]:
    """A logger writing every record to an in-memory stream."""
    log = StructuredLogger(
        name=f"test.{request.node.name}",
        level="DEBUG",
        console_level="DEBUG",
        stream=log_stream,
        log_file="",
    )
    yield log
    log.detach_files()
    for handler in list(log.logger.handlers):
        log.logger.removeHandler(handler)


@pytest.fixture(autouse=True)
def _fresh_config() -> Iterator[None]:
    reset_config()
    yield
    reset_config()


@pytest.fixture
def tiny_synth() -> SynthConfig:
    return SynthConfig(
        n_per_domain=120,
        feature_dim=4,
        n_labels=2,
        n_groups=2,
        n_source_domains=2,
        domain_shift_strength=0.5,
        group_bias_strength=0.3,
        seed=3,
    )


@pytest.fixture
def tiny_train() -> TrainConfig:
    return TrainConfig(
        stage1_epochs=3,
        stage2_epochs=2,
        batch_size=32,
        learning_rate=0.05,
        lambda_grid=[0.0, 0.5],
        gamma_grid=[1.0, 2.0],
        gamma=1.0,
        encoder_hidden=[6],
        z_e_dim=4,
        z_d_dim=3,
        z_g_dim=3,
        seed=5,
    )
