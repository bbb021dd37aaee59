"""
Network Parameter Models.

Dense MLP parameters and gradients, the four-network encoder stack with
its freezing flags, and the configuration and value breakdown of the
training objective.  Checkpoints are versioned JSON documents holding
layer dimensions and flat weight arrays.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import get_config
from app.errors import InputValidationError
from app.models.enums import Activation, InvarianceSource, NetworkName

__all__ = [
    "CHECKPOINT_FORMAT_VERSION",
    "EncoderStack",
    "MLPGrads",
    "MLPParams",
    "ObjectiveBreakdown",
    "ObjectiveConfig",
    "StackGrads",
]

CHECKPOINT_FORMAT_VERSION: int = 1


def _as_float_arrays(value: Any) -> list[np.ndarray]:
    if not isinstance(value, (list, tuple)):
        raise InputValidationError("expected a list of arrays.")
    return [np.array(v, dtype=np.float64) for v in value]


class MLPGrads(BaseModel):
    """Per-layer gradients, shaped like the parameters they belong to."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def flatten(self) -> np.ndarray:
        parts = [a.ravel() for pair in zip(self.weights, self.biases) for a in pair]
        return np.concatenate(parts) if parts else np.zeros(0)


class MLPParams(BaseModel):
    """Weights ``W[l]`` of shape (in, out) and biases ``b[l]`` of shape (out,).

    Hidden layers use *activation*; the output layer is linear.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: Activation = Activation.TANH

    @field_validator("weights", "biases", mode="before")
    @classmethod
    def _as_arrays(cls, value: Any) -> list[np.ndarray]:
        return _as_float_arrays(value)

    @model_validator(mode="after")
    def _check_shapes(self) -> "MLPParams":
        dims = self.layer_dims
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise InputValidationError(f"layer_dims must list at least two positive sizes, got {dims}.")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise InputValidationError("one weight matrix and one bias per layer are required.")
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[layer], dims[layer + 1]) or b.shape != (dims[layer + 1],):
                raise InputValidationError(
                    f"layer {layer}: expected W {(dims[layer], dims[layer + 1])} and "
                    f"b {(dims[layer + 1],)}, got {w.shape} and {b.shape}."
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise InputValidationError(f"layer {layer} has non-finite parameters.")
        return self

    @property
    def n_params(self) -> int:
        return int(sum(w.size + b.size for w, b in zip(self.weights, self.biases)))

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    def flatten(self) -> np.ndarray:
        """Parameters as one vector, layer by layer, weights before biases."""
        return MLPGrads(weights=self.weights, biases=self.biases).flatten()

    def with_flat(self, flat: np.ndarray) -> "MLPParams":
        """Copy with parameters taken from a vector laid out like :meth:`flatten`."""
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params:
            raise InputValidationError(f"expected {self.n_params} values, got {flat.size}.")
        weights, biases, offset = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(flat[offset : offset + w.size].reshape(w.shape))
            offset += w.size
            biases.append(flat[offset : offset + b.size].copy())
            offset += b.size
        return MLPParams(
            layer_dims=self.layer_dims, weights=weights, biases=biases, activation=self.activation
        )

    def sgd_step(self, grads: MLPGrads, lr: float) -> "MLPParams":
        """Plain gradient step W ← W − lr·∇W."""
        return MLPParams(
            layer_dims=self.layer_dims,
            weights=[w - lr * gw for w, gw in zip(self.weights, grads.weights)],
            biases=[b - lr * gb for b, gb in zip(self.biases, grads.biases)],
            activation=self.activation,
        )

    def zero_grads(self) -> MLPGrads:
        return MLPGrads(
            weights=[np.zeros_like(w) for w in self.weights],
            biases=[np.zeros_like(b) for b in self.biases],
        )

    # -- Serialization ---------------------------------------------------------

    def to_json(self) -> dict[str, Any]:
        return {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "layer_dims": list(self.layer_dims),
            "activation": str(self.activation),
            "weights": np.concatenate([w.ravel() for w in self.weights]).tolist(),
            "biases": np.concatenate([b.ravel() for b in self.biases]).tolist(),
        }

    @classmethod
    def from_json(cls, document: dict[str, Any]) -> "MLPParams":
        try:
            version = int(document["format_version"])
            dims = tuple(int(d) for d in document["layer_dims"])
            activation = Activation(document["activation"])
            flat_w = np.asarray(document["weights"], dtype=np.float64)
            flat_b = np.asarray(document["biases"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputValidationError(f"malformed MLP checkpoint: {exc}") from exc
        if version != CHECKPOINT_FORMAT_VERSION:
            raise InputValidationError(f"unsupported checkpoint format_version {version}.")
        shapes = list(zip(dims[:-1], dims[1:]))
        if flat_w.size != sum(i * o for i, o in shapes) or flat_b.size != sum(o for _, o in shapes):
            raise InputValidationError("checkpoint arrays do not match layer_dims.")
        weights, biases, w_off, b_off = [], [], 0, 0
        for fan_in, fan_out in shapes:
            weights.append(flat_w[w_off : w_off + fan_in * fan_out].reshape(fan_in, fan_out))
            biases.append(flat_b[b_off : b_off + fan_out])
            w_off += fan_in * fan_out
            b_off += fan_out
        return cls(layer_dims=dims, weights=weights, biases=biases, activation=activation)


class StackGrads(BaseModel):
    """Gradients of every network in a stack; frozen networks hold zeros."""

    model_config = ConfigDict(frozen=True)

    encoder: MLPGrads
    classifier: MLPGrads
    domain_encoder: Optional[MLPGrads] = None
    group_encoder: Optional[MLPGrads] = None

    def trainable_flat(self) -> np.ndarray:
        """Encoder then classifier gradients as one vector."""
        return np.concatenate([self.encoder.flatten(), self.classifier.flatten()])


class EncoderStack(BaseModel):
    """Encoder θ_E, classifier θ_C and the stage-1 domain/group encoders θ_D, θ_G.

    The domain and group encoders are absent when the invariance terms
    use one-hot labels.  With *lambda_conditioned* the encoder receives λ
    as one extra input column.
    """

    model_config = ConfigDict(frozen=True)

    encoder: MLPParams
    classifier: MLPParams
    domain_encoder: Optional[MLPParams] = None
    group_encoder: Optional[MLPParams] = None
    domain_frozen: bool = False
    group_frozen: bool = False
    lambda_conditioned: bool = False

    @model_validator(mode="after")
    def _check_wiring(self) -> "EncoderStack":
        if self.encoder.out_dim != self.classifier.in_dim:
            raise InputValidationError("classifier input must match the encoder output.")
        feature_dim = self.feature_dim
        for name, net in (
            (NetworkName.DOMAIN_ENCODER, self.domain_encoder),
            (NetworkName.GROUP_ENCODER, self.group_encoder),
        ):
            if net is not None and net.in_dim != feature_dim:
                raise InputValidationError(f"{name} must take the {feature_dim} raw features.")
        return self

    @property
    def feature_dim(self) -> int:
        return self.encoder.in_dim - (1 if self.lambda_conditioned else 0)

    @property
    def n_labels(self) -> int:
        return self.classifier.out_dim

    @property
    def trainable_params(self) -> int:
        return self.encoder.n_params + self.classifier.n_params

    def with_trainable_flat(self, flat: np.ndarray) -> "EncoderStack":
        """Copy with encoder and classifier parameters taken from one vector."""
        split = self.encoder.n_params
        return self.model_copy(
            update={
                "encoder": self.encoder.with_flat(flat[:split]),
                "classifier": self.classifier.with_flat(flat[split:]),
            }
        )

    def frozen_stage1(self) -> "EncoderStack":
        return self.model_copy(update={"domain_frozen": True, "group_frozen": True})

    # -- Serialization ---------------------------------------------------------

    def to_json(self) -> dict[str, Any]:
        return {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "encoder": self.encoder.to_json(),
            "classifier": self.classifier.to_json(),
            "domain_encoder": self.domain_encoder.to_json() if self.domain_encoder else None,
            "group_encoder": self.group_encoder.to_json() if self.group_encoder else None,
            "domain_frozen": self.domain_frozen,
            "group_frozen": self.group_frozen,
            "lambda_conditioned": self.lambda_conditioned,
        }

    @classmethod
    def from_json(cls, document: Union[str, dict[str, Any]]) -> "EncoderStack":
        data = json.loads(document) if isinstance(document, str) else document
        if int(data.get("format_version", -1)) != CHECKPOINT_FORMAT_VERSION:
            raise InputValidationError("unsupported encoder stack checkpoint version.")
        try:
            return cls(
                encoder=MLPParams.from_json(data["encoder"]),
                classifier=MLPParams.from_json(data["classifier"]),
                domain_encoder=(
                    MLPParams.from_json(data["domain_encoder"]) if data.get("domain_encoder") else None
                ),
                group_encoder=(
                    MLPParams.from_json(data["group_encoder"]) if data.get("group_encoder") else None
                ),
                domain_frozen=bool(data["domain_frozen"]),
                group_frozen=bool(data["group_frozen"]),
                lambda_conditioned=bool(data["lambda_conditioned"]),
            )
        except KeyError as exc:
            raise InputValidationError(f"encoder stack checkpoint is missing {exc}.") from exc

    def save(self, path: Union[str, Path]) -> Path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps(self.to_json()) + "\n", encoding="utf-8")
        return target

    @classmethod
    def load(cls, path: Union[str, Path]) -> "EncoderStack":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


class ObjectiveConfig(BaseModel):
    """Weights of the training objective.

    total = (1 − λ)·mean bounded CE + λ·dCor(Z_G, Z_E | y, d) + γ·dCor(Z_D, Z_E | y)
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lam: float = Field(default=0.0, ge=0.0, lt=1.0, alias="lambda")
    gamma: float = Field(default=0.0, ge=0.0)
    cap: float = Field(default=1.0, gt=0.0)
    smoothing_eps: float = Field(default_factory=lambda: get_config().DCOR_SMOOTHING_EPS, ge=0.0)
    invariance_source: InvarianceSource = InvarianceSource.REPRESENTATION


class ObjectiveBreakdown(BaseModel):
    """Objective value and its three weighted terms."""

    total: float
    utility: float
    fairness: float
    invariance: float
    ce_mean: float
    dcor_group: float
    dcor_domain: float
    cap_effective: float
