"""
Experiment Models.

Configuration of synthetic data and training (read from the experiment
JSON document), the CLI invocation, and the result envelopes produced by
the trainer.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import get_config
from app.errors import InputValidationError
from app.models.batch_models import SampleBatch
from app.models.enums import (
    Activation,
    FairnessMetric,
    InvarianceSource,
    OutputFormat,
    Subcommand,
    SweepMode,
)
from app.models.nn_models import EncoderStack
from app.models.pareto_models import FrontConfig, TradeoffPoint

__all__ = [
    "AblationEntry",
    "AblationReport",
    "CliConfig",
    "EpochRecord",
    "ExperimentConfig",
    "GammaScore",
    "GammaTuning",
    "SourceCountEntry",
    "Stage1Result",
    "Stage2Result",
    "SweepRecord",
    "SweepResult",
    "SynthConfig",
    "SyntheticData",
    "TrainConfig",
    "TrendReport",
    "TrendSeed",
]

UINT64_MAX: int = 2**64 - 1


def _default_lambda_grid() -> list[float]:
    return [round(i * 0.01, 2) for i in range(100)]


class SynthConfig(BaseModel):
    """Synthetic FairDG instance: S source domains, one validation and one target domain.

    Domain ids are 0..S−1 for sources, S for validation and S+1 for target.
    """

    model_config = ConfigDict(frozen=True)

    n_per_domain: int = Field(default=3000, ge=10)
    feature_dim: int = Field(default=8, ge=2)
    n_labels: int = Field(default=3, ge=2)
    n_groups: int = Field(default=3, ge=2)
    n_source_domains: int = Field(default=3, ge=2)
    domain_shift_strength: float = Field(default=1.0, ge=0.0)
    group_bias_strength: float = Field(default=0.4, ge=0.0, lt=1.0)
    class_separation: float = Field(default=2.5, gt=0.0)
    group_signal: float = Field(default=1.5, ge=0.0)
    noise_std: float = Field(default=1.0, gt=0.0)
    noisy_target_labels: bool = False
    seed: int = Field(default=0, ge=0, le=UINT64_MAX)

    @property
    def n_domains(self) -> int:
        return self.n_source_domains + 2

    @property
    def validation_domain(self) -> int:
        return self.n_source_domains

    @property
    def target_domain(self) -> int:
        return self.n_source_domains + 1


class TrainConfig(BaseModel):
    """Two-stage training and sweep settings."""

    model_config = ConfigDict(frozen=True)

    stage1_epochs: int = Field(default=30, ge=1)
    stage1_target_accuracy: float = Field(default=0.99, gt=0.0, le=1.0)
    stage2_epochs: int = Field(default=20, ge=1)
    batch_size: int = Field(default=128, ge=4)
    learning_rate: float = Field(default=0.05, gt=0.0)
    lambda_grid: list[float] = Field(default_factory=_default_lambda_grid)
    gamma_grid: list[float] = Field(default_factory=lambda: [1.0, 2.0, 4.0, 7.0, 10.0])
    gamma: Optional[float] = Field(default=None, ge=0.0)
    mode: SweepMode = SweepMode.LOSS_CONDITIONAL
    invariance_source: InvarianceSource = InvarianceSource.REPRESENTATION
    encoder_hidden: list[int] = Field(default_factory=lambda: [32])
    z_e_dim: int = Field(default=16, ge=1)
    z_d_dim: int = Field(default=8, ge=1)
    z_g_dim: int = Field(default=8, ge=1)
    activation: Activation = Activation.TANH
    cap: float = Field(default=1.0, gt=0.0)
    smoothing_eps: float = Field(default_factory=lambda: get_config().DCOR_SMOOTHING_EPS, ge=0.0)
    best_epoch_selection: bool = False
    seed: int = Field(default=0, ge=0, le=UINT64_MAX)

    @field_validator("lambda_grid")
    @classmethod
    def _check_lambda_grid(cls, grid: list[float]) -> list[float]:
        if len(grid) < 2:
            raise InputValidationError("lambda_grid needs at least two values.")
        if any(not (0.0 <= lam < 1.0) for lam in grid):
            raise InputValidationError("lambda values must lie in [0, 1).")
        if len(set(grid)) != len(grid):
            raise InputValidationError("lambda_grid values must be distinct.")
        return sorted(grid)

    @field_validator("gamma_grid")
    @classmethod
    def _check_gamma_grid(cls, grid: list[float]) -> list[float]:
        if not grid or any(g < 0 for g in grid):
            raise InputValidationError("gamma_grid must be a non-empty list of values >= 0.")
        return grid


class ExperimentConfig(BaseModel):
    """The experiment JSON document."""

    model_config = ConfigDict(frozen=True)

    synth: SynthConfig = Field(default_factory=SynthConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    front: FrontConfig = Field(default_factory=FrontConfig)
    seeds: list[int] = Field(default_factory=lambda: list(range(10)))
    source_counts: list[int] = Field(default_factory=lambda: [2, 3])

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExperimentConfig":
        try:
            document = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputValidationError(f"{path}: invalid JSON ({exc.msg}).") from exc
        return cls.model_validate(document)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Same experiment with data and training seeds replaced."""
        return self.model_copy(
            update={
                "synth": self.synth.model_copy(update={"seed": seed}),
                "train": self.train.model_copy(update={"seed": seed}),
            }
        )


class CliConfig(BaseModel):
    """One CLI invocation."""

    model_config = ConfigDict(frozen=True)

    subcommand: Subcommand
    config_path: Optional[Path] = None
    output_dir: Path = Path("runs")
    seed: int = Field(default=0, ge=0, le=UINT64_MAX)
    format: OutputFormat = OutputFormat.JSON


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

class SyntheticData(BaseModel):
    """Per-domain batches indexed by domain id."""

    model_config = ConfigDict(frozen=True)

    domains: list[SampleBatch]
    n_labels: int
    n_groups: int
    n_source_domains: int

    @model_validator(mode="after")
    def _check_layout(self) -> "SyntheticData":
        if len(self.domains) != self.n_source_domains + 2:
            raise InputValidationError("expected S source domains plus validation and target.")
        return self

    @property
    def source(self) -> SampleBatch:
        return SampleBatch.concat(self.domains[: self.n_source_domains])

    @property
    def validation(self) -> SampleBatch:
        return self.domains[self.n_source_domains]

    @property
    def target(self) -> SampleBatch:
        return self.domains[self.n_source_domains + 1]


class Stage1Result(BaseModel):
    """Stage-1 encoders (frozen) and their training accuracy."""

    model_config = ConfigDict(frozen=True)

    stack: EncoderStack
    domain_accuracy: Optional[float] = None
    group_accuracy: Optional[float] = None
    domain_converged: bool = True
    group_converged: bool = True


class EpochRecord(BaseModel):
    epoch: int
    objective: float
    val_accuracy: float
    val_eod: Optional[float] = None
    val_eo: Optional[float] = None
    val_objective: Optional[float] = None


class Stage2Result(BaseModel):
    """Trained stack with its per-epoch training curve."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    stack: EncoderStack
    lam: Optional[float] = Field(default=None, alias="lambda")
    gamma: float
    best_epoch: int = 0
    curve: list[EpochRecord]


class SweepRecord(BaseModel):
    """Metrics of one λ on one evaluation domain."""

    model_config = ConfigDict(populate_by_name=True)

    lam: float = Field(alias="lambda")
    accuracy: float
    eod: float
    eo: float
    fairness_penalty: Optional[float] = None

    def point(self, metric: FairnessMetric) -> TradeoffPoint:
        v = self.eod if metric == FairnessMetric.EOD else self.eo
        return TradeoffPoint(v=v, u=self.accuracy, lam=self.lam)


class SweepResult(BaseModel):
    """Target and validation metrics over the λ grid."""

    mode: SweepMode
    gamma: float
    target: list[SweepRecord]
    validation: list[SweepRecord]

    def points(self, metric: FairnessMetric, split: str = "target") -> list[TradeoffPoint]:
        records = self.target if split == "target" else self.validation
        return [r.point(metric) for r in records]

    def csv_rows(self) -> list[dict[str, Any]]:
        """Rows of the sweep CSV: lambda, V_eod, V_eo, U."""
        return [
            {"lambda": r.lam, "V_eod": r.eod, "V_eo": r.eo, "U": r.accuracy} for r in self.target
        ]


class GammaScore(BaseModel):
    gamma: float
    validation_hvi: float


class GammaTuning(BaseModel):
    best_gamma: float
    scores: list[GammaScore]


class AblationEntry(BaseModel):
    """Target-domain front quality of one method variant."""

    name: str
    gamma: float
    hvi_eod: float
    hvi_eo: float
    selected_lambda: float
    selected_accuracy: float
    selected_eod: float
    selected_eo: float


class AblationReport(BaseModel):
    entries: list[AblationEntry]

    def by_name(self, name: str) -> AblationEntry:
        for entry in self.entries:
            if entry.name == name:
                return entry
        raise KeyError(name)


class SourceCountEntry(BaseModel):
    n_sources: int
    hvi_eod: float
    hvi_eo: float


class TrendSeed(BaseModel):
    seed: int
    spearman_lambda_eod: float
    hvi_full: float
    hvi_gamma0: float


class TrendReport(BaseModel):
    """Per-seed trend statistics and how many seeds show each expected direction."""

    seeds: list[TrendSeed]
    negative_spearman_count: int
    full_beats_gamma0_count: int
