"""
Shared Enumerations for FairDG Lab Models.

All string enumerations for type-safe field constraints.
StrEnum values compare equal to their string equivalents, so values
read from JSON configs (``"loss_conditional"``) validate directly.
"""

from __future__ import annotations

import sys

if sys.version_info >= (3, 11):
    from enum import StrEnum
else:  # Python 3.10 compatibility: same semantics as enum.StrEnum
    from enum import Enum

    class StrEnum(str, Enum):
        def __str__(self) -> str:
            return str(self.value)

        def __format__(self, format_spec: str) -> str:
            return str(self.value).__format__(format_spec)


class LossKind(StrEnum):
    """Bounded losses accepted by the risk computations."""

    BOUNDED_CROSS_ENTROPY = "bounded_cross_entropy"
    ZERO_ONE = "zero_one"


class Activation(StrEnum):
    """Hidden-layer non-linearity of an MLP."""

    TANH = "tanh"
    RELU = "relu"


class SweepMode(StrEnum):
    """How the λ grid is covered.

    ``PER_LAMBDA`` trains one stage-2 model per grid value.
    ``LOSS_CONDITIONAL`` trains a single model that receives λ as an
    extra encoder input and evaluates it at every grid value.
    """

    PER_LAMBDA = "per_lambda"
    LOSS_CONDITIONAL = "loss_conditional"


class InvarianceSource(StrEnum):
    """What the encoder representation is decorrelated from.

    ``REPRESENTATION`` uses the frozen stage-1 encodings Z_D and Z_G.
    ``ONE_HOT`` uses one-hot domain and group labels directly.
    """

    REPRESENTATION = "representation"
    ONE_HOT = "one_hot"


class DependenceMetric(StrEnum):
    """Dependence estimator exposed by the ``dcor`` subcommand."""

    DCOR = "dcor"
    HSIC = "hsic"


class FairnessMetric(StrEnum):
    """Fairness violation used as the V axis of a trade-off front."""

    EOD = "eod"
    EO = "eo"


class NetworkName(StrEnum):
    """The four networks of an encoder stack."""

    ENCODER = "encoder"
    CLASSIFIER = "classifier"
    DOMAIN_ENCODER = "domain_encoder"
    GROUP_ENCODER = "group_encoder"


class Subcommand(StrEnum):
    """CLI subcommands."""

    VERIFY_BOUNDS = "verify-bounds"
    DCOR = "dcor"
    FAIRNESS = "fairness"
    PARETO = "pareto"
    TRAIN = "train"
    SWEEP = "sweep"
    REPORT = "report"


class OutputFormat(StrEnum):
    """Primary output format of a CLI run."""

    JSON = "json"
    CSV = "csv"
