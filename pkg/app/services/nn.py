"""
Differentiable Training Stack.

Hand-written forward and backward passes for dense MLPs, the bounded
softmax cross-entropy, a distance correlation on smoothed distances with
its exact gradient, and the full training objective with central
finite-difference validation.

Layout conventions:
    - Batches are row matrices (n, features); weights are (in, out).
    - The encoder sees λ as an extra last column when the stack is
      λ-conditioned; the domain and group encoders see raw features.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray

from app.config import get_config
from app.errors import ConfigurationError, ContractError, DegenerateBatchError, InputValidationError
from app.models.batch_models import PartitionLabels, SampleBatch
from app.models.enums import Activation, InvarianceSource
from app.models.nn_models import (
    EncoderStack,
    MLPGrads,
    MLPParams,
    ObjectiveBreakdown,
    ObjectiveConfig,
    StackGrads,
)

__all__ = [
    "backward",
    "backward_mlp",
    "bounded_cross_entropy",
    "bounded_softmax",
    "effective_cap",
    "encode",
    "forward_mlp",
    "grad_check",
    "init_mlp",
    "objective_value",
    "predict_logits",
    "smoothed_conditional_dcor",
]

# Trace of one forward pass: (layer inputs, pre-activations).
Trace = tuple[list[NDArray[np.float64]], list[NDArray[np.float64]]]

# Denominator of the relative error in grad_check.
_REL_ERR_FLOOR: float = 1e-3


# --- 1. MLP ---

def init_mlp(
    layer_dims: list[int] | tuple[int, ...],
    activation: Activation,
    rng: np.random.Generator,
) -> MLPParams:
    """Uniform ±sqrt(6 / (fan_in + fan_out)) weights and zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLPParams(layer_dims=dims, weights=weights, biases=biases, activation=activation)


def _act(z: NDArray[np.float64], kind: Activation) -> NDArray[np.float64]:
    return np.tanh(z) if kind == Activation.TANH else np.maximum(z, 0.0)


def _dact(z: NDArray[np.float64], kind: Activation) -> NDArray[np.float64]:
    if kind == Activation.TANH:
        return 1.0 - np.tanh(z) ** 2
    return (z > 0).astype(np.float64)


def forward_mlp(p: MLPParams, x: NDArray[np.float64]) -> tuple[NDArray[np.float64], Trace]:
    """Affine + activation stack with a linear output layer."""
    h = np.asarray(x, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != p.in_dim:
        raise InputValidationError(f"expected input of shape (n, {p.in_dim}), got {h.shape}.")
    inputs: list[NDArray[np.float64]] = []
    pre: list[NDArray[np.float64]] = []
    last = len(p.weights) - 1
    for layer, (w, b) in enumerate(zip(p.weights, p.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        h = z if layer == last else _act(z, p.activation)
    return h, (inputs, pre)


def backward_mlp(
    p: MLPParams, trace: Trace, d_out: NDArray[np.float64]
) -> tuple[MLPGrads, NDArray[np.float64]]:
    """Gradients of a scalar with respect to parameters and input, given d/d(output)."""
    inputs, pre = trace
    dz = d_out
    last = len(p.weights) - 1
    grads_w: list[NDArray[np.float64]] = [np.zeros(0)] * len(p.weights)
    grads_b: list[NDArray[np.float64]] = [np.zeros(0)] * len(p.weights)
    for layer in range(last, -1, -1):
        if layer != last:
            dz = dz * _dact(pre[layer], p.activation)
        grads_w[layer] = inputs[layer].T @ dz
        grads_b[layer] = dz.sum(axis=0)
        dz = dz @ p.weights[layer].T
    return MLPGrads(weights=grads_w, biases=grads_b), dz


# --- 2. Bounded cross-entropy ---

def effective_cap(cap: float, n_labels: int) -> float:
    """*cap* if e^{−C}·|Y| < 1, otherwise ln(2|Y|)."""
    if 1.0 - math.exp(-cap) * n_labels > 0.0:
        return cap
    return math.log(2.0 * n_labels)


def _floor_and_scale(cap: float, n_labels: int) -> tuple[float, float]:
    floor = math.exp(-cap)
    scale = 1.0 - floor * n_labels
    if scale <= 0.0:
        raise ConfigurationError(
            f"cap C={cap:g} needs e^(-C)·|Y| < 1 for |Y|={n_labels}; "
            f"raise C to at least ln(2|Y|) = {math.log(2 * n_labels):.6g}."
        )
    return floor, scale


def _softmax(logits: NDArray[np.float64]) -> NDArray[np.float64]:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def bounded_softmax(logits: NDArray[np.float64], cap: float) -> NDArray[np.float64]:
    """p̂ = softmax·(1 − e^{−C}|Y|) + e^{−C}; every entry ≥ e^{−C}."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise InputValidationError("logits must be finite.")
    floor, scale = _floor_and_scale(cap, z.shape[-1])
    return _softmax(z) * scale + floor


def bounded_cross_entropy(
    logits: NDArray[np.float64], y: NDArray[np.int64], cap: float
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Per-row loss −ln p̂_y ∈ [0, C] and its gradient with respect to the logits."""
    n, k = logits.shape
    floor, scale = _floor_and_scale(cap, k)
    p = _softmax(logits)
    rows = np.arange(n)
    p_y = p[rows, y]
    p_hat_y = p_y * scale + floor
    loss = -np.log(p_hat_y)
    onehot = np.zeros_like(p)
    onehot[rows, y] = 1.0
    grad = -(scale * p_y / p_hat_y)[:, None] * (onehot - p)
    return loss, grad


# --- 3. Smoothed conditional distance correlation ---

def _smoothed_distances(z: NDArray[np.float64], eps: float) -> NDArray[np.float64]:
    diff = z[:, None, :] - z[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1) + eps)
    np.fill_diagonal(dist, 0.0)
    return dist


def _center(m: NDArray[np.float64]) -> NDArray[np.float64]:
    return m - m.mean(axis=0)[None, :] - m.mean(axis=1)[:, None] + m.mean()


def _constant_in_cells(values: NDArray[np.float64], cells: list[NDArray[np.int64]]) -> bool:
    return all(not np.any(values[rows] != values[rows][0]) for rows in cells)


def smoothed_conditional_dcor(
    p: NDArray[np.float64],
    z: NDArray[np.float64],
    labels: PartitionLabels,
    eps: float,
) -> tuple[float, NDArray[np.float64]]:
    """dCor(P, Z | cells) on distances sqrt(‖·‖² + ε) and its gradient in *z*.

    Off-diagonal distances are smoothed; the diagonal stays 0.  The value is
    0 with a zero gradient when either batch is constant within every cell.
    """
    cells = [rows for rows in labels.cells() if rows.size >= 2]
    if not cells:
        raise DegenerateBatchError("every partition cell of the batch has fewer than two rows.")
    a_cells, b_cells, dist_cells = [], [], []
    s_ab = s_aa = s_bb = 0.0
    for rows in cells:
        a = _center(_smoothed_distances(p[rows], eps))
        dist_b = _smoothed_distances(z[rows], eps)
        b = _center(dist_b)
        s_ab += float((a * b).sum())
        s_aa += float((a * a).sum())
        s_bb += float((b * b).sum())
        a_cells.append(a)
        b_cells.append(b)
        dist_cells.append(dist_b)

    grad = np.zeros_like(z)
    constant = _constant_in_cells(p, cells) or _constant_in_cells(z, cells)
    if constant or s_aa <= 0.0 or s_bb <= 0.0:
        return 0.0, grad
    denom = math.sqrt(s_aa * s_bb)
    ratio = s_ab / denom
    if ratio <= 0.0:
        return 0.0, grad
    if ratio >= 1.0:
        return 1.0, grad
    value = math.sqrt(ratio)
    d_ratio = 1.0 / (2.0 * value)
    for rows, a, b, dist_b in zip(cells, a_cells, b_cells, dist_cells):
        g_centered = a / denom - ratio * b / s_bb
        g_dist = _center(g_centered)
        weights = np.divide(g_dist, dist_b, out=np.zeros_like(g_dist), where=dist_b > 0)
        zc = z[rows]
        grad[rows] = d_ratio * 2.0 * (weights.sum(axis=1)[:, None] * zc - weights @ zc)
    return value, grad


# --- 4. Objective ---

def _encoder_input(stack: EncoderStack, x: NDArray[np.float64], lam: float) -> NDArray[np.float64]:
    if not stack.lambda_conditioned:
        return x
    return np.hstack([x, np.full((x.shape[0], 1), lam)])


def encode(stack: EncoderStack, x: NDArray[np.float64], lam: float = 0.0) -> NDArray[np.float64]:
    """Z_E for raw features *x* (λ appended when the stack is λ-conditioned)."""
    return forward_mlp(stack.encoder, _encoder_input(stack, x, lam))[0]


def predict_logits(stack: EncoderStack, x: NDArray[np.float64], lam: float = 0.0) -> NDArray[np.float64]:
    return forward_mlp(stack.classifier, encode(stack, x, lam))[0]


def _one_hot(ids: NDArray[np.int64]) -> NDArray[np.float64]:
    out = np.zeros((ids.size, int(ids.max()) + 1 if ids.size else 1))
    out[np.arange(ids.size), ids] = 1.0
    return out


def _invariance_inputs(
    stack: EncoderStack, batch: SampleBatch, cfg: ObjectiveConfig
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """(P_G, P_D): frozen stage-1 encodings, or one-hot group and domain ids."""
    if cfg.invariance_source == InvarianceSource.ONE_HOT:
        return _one_hot(batch.g), _one_hot(batch.d)
    if stack.group_encoder is None or stack.domain_encoder is None:
        raise ContractError("representation invariance needs trained domain and group encoders.")
    if not (stack.group_frozen and stack.domain_frozen):
        raise ContractError("domain and group encoders must be frozen before stage 2.")
    p_g = forward_mlp(stack.group_encoder, batch.x)[0]
    p_d = forward_mlp(stack.domain_encoder, batch.x)[0]
    return p_g, p_d


def _evaluate(
    stack: EncoderStack, batch: SampleBatch, cfg: ObjectiveConfig, with_grads: bool
) -> tuple[ObjectiveBreakdown, Optional[StackGrads]]:
    if batch.x.shape[1] != stack.feature_dim:
        raise InputValidationError(
            f"batch has {batch.x.shape[1]} features, the stack expects {stack.feature_dim}."
        )
    n = batch.n
    cap = effective_cap(cfg.cap, stack.n_labels)
    x_in = _encoder_input(stack, batch.x, cfg.lam)
    z_e, enc_trace = forward_mlp(stack.encoder, x_in)
    logits, clf_trace = forward_mlp(stack.classifier, z_e)
    ce, d_logits = bounded_cross_entropy(logits, batch.y, cap)
    ce_mean = float(ce.mean())

    dz_reg = np.zeros_like(z_e)
    dcor_group = dcor_domain = 0.0
    if cfg.lam > 0.0 or cfg.gamma > 0.0:
        p_g, p_d = _invariance_inputs(stack, batch, cfg)
        if cfg.lam > 0.0:
            dcor_group, grad_g = smoothed_conditional_dcor(
                p_g, z_e, PartitionLabels(y=batch.y, d=batch.d), cfg.smoothing_eps
            )
            dz_reg += cfg.lam * grad_g
        if cfg.gamma > 0.0:
            dcor_domain, grad_d = smoothed_conditional_dcor(
                p_d, z_e, PartitionLabels(y=batch.y), cfg.smoothing_eps
            )
            dz_reg += cfg.gamma * grad_d

    utility = (1.0 - cfg.lam) * ce_mean
    fairness = cfg.lam * dcor_group
    invariance = cfg.gamma * dcor_domain
    breakdown = ObjectiveBreakdown(
        total=utility + fairness + invariance,
        utility=utility,
        fairness=fairness,
        invariance=invariance,
        ce_mean=ce_mean,
        dcor_group=dcor_group,
        dcor_domain=dcor_domain,
        cap_effective=cap,
    )
    if not with_grads:
        return breakdown, None

    clf_grads, dz_clf = backward_mlp(stack.classifier, clf_trace, (1.0 - cfg.lam) / n * d_logits)
    enc_grads, _ = backward_mlp(stack.encoder, enc_trace, dz_clf + dz_reg)
    grads = StackGrads(
        encoder=enc_grads,
        classifier=clf_grads,
        domain_encoder=stack.domain_encoder.zero_grads() if stack.domain_encoder else None,
        group_encoder=stack.group_encoder.zero_grads() if stack.group_encoder else None,
    )
    return breakdown, grads


def objective_value(stack: EncoderStack, batch: SampleBatch, cfg: ObjectiveConfig) -> ObjectiveBreakdown:
    """Training objective and its weighted terms on one batch."""
    return _evaluate(stack, batch, cfg, with_grads=False)[0]


def backward(
    stack: EncoderStack, batch: SampleBatch, cfg: ObjectiveConfig
) -> tuple[ObjectiveBreakdown, StackGrads]:
    """Objective value plus exact gradients; frozen networks get zero gradients."""
    breakdown, grads = _evaluate(stack, batch, cfg, with_grads=True)
    assert grads is not None
    return breakdown, grads


# --- 5. Gradient check ---

def _central_differences(
    f: Callable[[NDArray[np.float64]], float], theta: NDArray[np.float64], h: float
) -> NDArray[np.float64]:
    grad = np.zeros_like(theta)
    step = np.zeros_like(theta)
    for i in range(theta.size):
        step[i] = h
        grad[i] = (f(theta + step) - f(theta - step)) / (2.0 * h)
        step[i] = 0.0
    return grad


def grad_check(
    stack: EncoderStack,
    batch: SampleBatch,
    cfg: ObjectiveConfig,
    h: float = 1e-5,
    max_params: Optional[int] = None,
) -> float:
    """Max relative error of :func:`backward` against central differences.

    Relative error per coordinate is |a − f| / max(|a|, |f|, 1e-3).  Stacks with
    more than *max_params* trainable parameters (default ``GRAD_CHECK_MAX_PARAMS``)
    are refused.
    """
    limit = get_config().GRAD_CHECK_MAX_PARAMS if max_params is None else max_params
    if stack.trainable_params > limit:
        raise ContractError(
            f"grad_check is limited to {limit} parameters, "
            f"the stack has {stack.trainable_params}."
        )
    _, grads = backward(stack, batch, cfg)
    analytic = grads.trainable_flat()
    theta = np.concatenate([stack.encoder.flatten(), stack.classifier.flatten()])

    def total(vec: NDArray[np.float64]) -> float:
        return objective_value(stack.with_trainable_flat(vec), batch, cfg).total

    numeric = _central_differences(total, theta, h)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), _REL_ERR_FLOOR)
    return float(np.max(np.abs(analytic - numeric) / scale)) if theta.size else 0.0
