from __future__ import annotations

"""
Data Models Package.

Re-exports the Pydantic models for short imports:
    from app.models import FiniteJoint, Channel, BoundReport
    from app.models import TradeoffPoint, FrontConfig, EncoderStack
    from app.models import SynthConfig, TrainConfig, ExperimentConfig
"""

from app.models.batch_models import (
    ConditionalDcorResult,
    EvalBatch,
    FairnessReport,
    PartitionLabels,
    RepBatch,
    SampleBatch,
)
from app.models.bound_models import BoundedLoss, BoundReport
from app.models.enums import (
    Activation,
    DependenceMetric,
    FairnessMetric,
    InvarianceSource,
    LossKind,
    OutputFormat,
    Subcommand,
    SweepMode,
)
from app.models.experiment_models import (
    CliConfig,
    ExperimentConfig,
    SweepResult,
    SynthConfig,
    SyntheticData,
    TrainConfig,
)
from app.models.nn_models import EncoderStack, MLPParams, ObjectiveConfig
from app.models.pareto_models import FrontBounds, FrontConfig, FrontReport, TradeoffPoint
from app.models.probability import Channel, FiniteJoint

__all__ = [
    "Activation",
    "BoundReport",
    "BoundedLoss",
    "Channel",
    "CliConfig",
    "ConditionalDcorResult",
    "DependenceMetric",
    "EncoderStack",
    "EvalBatch",
    "ExperimentConfig",
    "FairnessMetric",
    "FairnessReport",
    "FiniteJoint",
    "FrontBounds",
    "FrontConfig",
    "FrontReport",
    "InvarianceSource",
    "LossKind",
    "MLPParams",
    "ObjectiveConfig",
    "OutputFormat",
    "PartitionLabels",
    "RepBatch",
    "SampleBatch",
    "Subcommand",
    "SweepMode",
    "SweepResult",
    "SynthConfig",
    "SyntheticData",
    "TrainConfig",
    "TradeoffPoint",
]
