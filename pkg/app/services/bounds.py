"""
Executable Risk and Fairness Bounds.

Exact-enumeration checks of the target-risk bound, the target-EOD bound,
the risk/information inequality, the chain-rule inequalities and the
four supporting lemmas.  Every check returns a ``BoundReport`` with the
per-term decomposition (terms sum to rhs) and the slack rhs − lhs.

Conventions:
    - Tables produced by ``push_channel`` are indexed (ŷ, y, d, g).
    - "Source law" means the joint conditioned on D ∈ D_S, keeping
      the source-domain slices only.
    - Ŷ is the label sampled from the channel row, except in the
      risk/information inequality, where f̂(X) is the row itself.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from app.config import get_config
from app.errors import (
    ConfigurationError,
    ContractError,
    DegenerateConditioningError,
    InputValidationError,
)
from app.models.bound_models import (
    BoundedLoss,
    BoundReport,
    Lemma1Instance,
    Lemma2Instance,
    Lemma3Instance,
    Lemma4Instance,
    LemmaInstance,
)
from app.models.enums import LossKind
from app.models.probability import Channel, FiniteJoint
from app.services.fairness import eod_from_conditionals
from app.services.prob_core import (
    cmi_of,
    condition_on_domains,
    conditional_entropy,
    mi_of,
    mutual_information,
    push_channel,
    tv_distance,
)
from app.utils.math_utils import as_distribution, as_probability_table

__all__ = [
    "eod_violation_exact",
    "expected_risk",
    "loss_matrix",
    "verify_lemma",
    "verify_theorem1",
    "verify_theorem2",
    "verify_theorem3",
    "verify_theorem4",
]

# Tolerance on internally produced tables (sums of products).
_TABLE_TOL: float = 1e-9


# ---------------------------------------------------------------------------
# Losses and risks
# ---------------------------------------------------------------------------

def loss_matrix(loss: BoundedLoss, n_labels: int) -> NDArray[np.float64]:
    """Loss L[ŷ, y] for hard predictions.

    The bounded cross-entropy of a hard prediction is the loss of the
    one-hot distribution after flooring at e^{−C}: C when ŷ ≠ y and
    −ln(1 − e^{−C}(|Y| − 1)) when ŷ = y.
    """
    if loss.kind == LossKind.ZERO_ONE:
        return 1.0 - np.eye(n_labels)
    floor = math.exp(-loss.cap)
    if 1.0 - floor * n_labels <= 0.0:
        raise ConfigurationError(
            f"cap C={loss.cap:g} is too small for |Y|={n_labels}: need e^(-C)·|Y| < 1."
        )
    matrix = np.full((n_labels, n_labels), loss.cap)
    np.fill_diagonal(matrix, -math.log(1.0 - floor * (n_labels - 1)))
    return matrix


def _check_joint4(joint4: NDArray[np.float64]) -> NDArray[np.float64]:
    table = as_probability_table(joint4, 4, "joint4", tol=_TABLE_TOL)
    if table.shape[0] != table.shape[1]:
        raise InputValidationError("joint4 must share the label space between ŷ and y.")
    return table


def expected_risk(
    joint4: NDArray[np.float64], loss: BoundedLoss, domain_filter: Sequence[int]
) -> float:
    """E[L(Ŷ, Y) | D ∈ domain_filter] under a (ŷ, y, d, g) table."""
    table = _check_joint4(joint4)
    conditioned = condition_on_domains(table, domain_filter)
    matrix = loss_matrix(loss, table.shape[1])
    risk = float(np.einsum("hydg,hy->", conditioned, matrix))
    return min(max(risk, 0.0), loss.cap)


def _conditionals_given_yg(
    table_hyg: NDArray[np.float64],
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """p(ŷ | y, g) indexed [y, g, ŷ] from a (ŷ, y, g) table, plus the present mask."""
    mass = table_hyg.sum(axis=0)
    present = mass > 0
    cond = np.divide(
        np.transpose(table_hyg, (1, 2, 0)),
        mass[:, :, None],
        out=np.zeros((table_hyg.shape[1], table_hyg.shape[2], table_hyg.shape[0])),
        where=present[:, :, None],
    )
    return cond, present


def eod_violation_exact(
    joint4: NDArray[np.float64], domain_filter: Sequence[int]
) -> float:
    """Exact EOD violation of the law conditioned on D ∈ domain_filter."""
    return _eod_exact(joint4, domain_filter)[0]


def _eod_exact(
    joint4: NDArray[np.float64], domain_filter: Sequence[int]
) -> tuple[float, int, int]:
    table = _check_joint4(joint4)
    conditioned = condition_on_domains(table, domain_filter).sum(axis=2)
    cond, present = _conditionals_given_yg(conditioned)
    value, used, skipped = eod_from_conditionals(cond, present)
    if used == 0:
        raise DegenerateConditioningError("every (y, g) pair has an empty side.")
    return min(1.0, value), used, skipped


# ---------------------------------------------------------------------------
# Theorems
# ---------------------------------------------------------------------------

def _argmax_channel(ch: Channel) -> Channel:
    labels = np.argmax(ch.cond_probs, axis=1)
    return Channel.from_labels(labels.tolist(), ch.n_y)


def verify_theorem1(
    joint: FiniteJoint, ch: Channel, loss: BoundedLoss, seed: Optional[int] = None
) -> BoundReport:
    """Target risk ≤ source risk + C·TV(target, source mixture) + (√2C/2)·√I(D_S; Ŷ, Y)."""
    sources = list(joint.source_domains)
    target = [joint.target_domain]
    j4 = push_channel(joint, ch)

    lhs = expected_risk(j4, loss, target)
    source_risk = expected_risk(j4, loss, sources)

    p_xy_target = condition_on_domains(joint.probs, target).sum(axis=(2, 3))
    p_xy_mixture = condition_on_domains(joint.probs, sources).sum(axis=(2, 3))
    shift = loss.cap * tv_distance(p_xy_target.ravel(), p_xy_mixture.ravel())

    source4 = condition_on_domains(j4, sources)
    info = mi_of(source4, [2], [0, 1])
    info_term = (math.sqrt(2.0) * loss.cap / 2.0) * math.sqrt(info)

    argmax4 = condition_on_domains(push_channel(joint, _argmax_channel(ch)), sources)
    return BoundReport.build(
        name="theorem1",
        lhs=lhs,
        terms={
            "source_risk": source_risk,
            "distribution_shift": shift,
            "domain_information": info_term,
        },
        seed=seed,
        metadata={
            "prediction_convention": "sampled",
            "loss_kind": str(loss.kind),
            "cap": loss.cap,
            "mi_domain_prediction_label": info,
            "mi_domain_prediction_label_argmax": mi_of(argmax4, [2], [0, 1]),
        },
    )


def verify_theorem2(
    joint: FiniteJoint, ch: Channel, seed: Optional[int] = None
) -> BoundReport:
    """Target EOD ≤ group-information term + shift term + domain-information term.

    The reported (stated) form uses m = min_{y,g} p(y, g) under the source
    mixture and per-(y, g) mixture weights p(d | y, g).  The metadata adds
    the variant with unconditional weights p(d) in the shift term and a
    conservative rhs with m' = min_{d,y,g} p(y, g | d), which holds for
    every instance.
    """
    sources = list(joint.source_domains)
    target = [joint.target_domain]
    n_y, n_g = joint.n_y, joint.n_g
    j4 = push_channel(joint, ch)

    lhs, _, skipped_pairs = _eod_exact(j4, target)

    source = condition_on_domains(joint.probs, sources)  # (x, y, ds, g)
    p_yg = source.sum(axis=(0, 2))
    m = float(p_yg.min())
    if m <= 0.0:
        raise DegenerateConditioningError(
            "min p(y, g) over the source mixture is zero; the bound is undefined."
        )
    p_d = source.sum(axis=(0, 1, 3))
    p_ydg = source.sum(axis=0)  # (y, ds, g)
    live = p_d > 0.0
    m_conservative = float((p_ydg[:, live, :] / p_d[None, live, None]).min())

    source4 = condition_on_domains(j4, sources)
    info_group = cmi_of(source4, [3], [0], [1, 2])
    info_domain = cmi_of(source4, [2], [0], [1, 3])
    scale = n_y * n_g
    term1 = math.sqrt(2.0 * info_group) / (scale * m)
    term3 = math.sqrt(2.0 * info_domain) / (scale * m)

    target_x = condition_on_domains(joint.probs, target)[:, :, 0, :]  # (x, y, g)
    tv_sum = 0.0
    tv_sum_unconditional = 0.0
    unconditional_defined = True
    for y in range(n_y):
        for g in range(n_g):
            t_mass = float(target_x[:, y, g].sum())
            if t_mass <= 0.0:
                continue
            p_target = target_x[:, y, g] / t_mass
            cell = source[:, y, :, g]  # (x, ds)
            p_mixture = cell.sum(axis=1) / p_yg[y, g]
            tv_sum += tv_distance(p_target, p_mixture)
            per_domain_mass = cell.sum(axis=0)
            if np.any(per_domain_mass <= 0.0):
                unconditional_defined = False
                continue
            p_unconditional = (cell / per_domain_mass[None, :]) @ p_d
            tv_sum_unconditional += tv_distance(p_target, p_unconditional)
    term2 = (2.0 / scale) * tv_sum

    # Some source domain misses a (y, g) cell: the conservative form is vacuous.
    rhs_conservative: Optional[float] = None
    if m_conservative > 0.0:
        rhs_conservative = (term1 + term3) * (m / m_conservative) + term2
    return BoundReport.build(
        name="theorem2",
        lhs=lhs,
        terms={
            "group_information": term1,
            "distribution_shift": term2,
            "domain_information": term3,
        },
        seed=seed,
        metadata={
            "prediction_convention": "sampled",
            "min_p_yg": m,
            "min_p_yg_given_d": m_conservative,
            "cmi_group": info_group,
            "cmi_domain": info_domain,
            "skipped_target_pairs": skipped_pairs,
            "distribution_shift_unconditional_weights": (
                (2.0 / scale) * tv_sum_unconditional if unconditional_defined else None
            ),
            "conservative_defined": rhs_conservative is not None,
            "rhs_conservative": rhs_conservative,
            "slack_conservative": None if rhs_conservative is None else rhs_conservative - lhs,
        },
    )


def verify_theorem3(
    joint: FiniteJoint,
    ch: Channel,
    loss: Optional[BoundedLoss] = None,
    seed: Optional[int] = None,
) -> BoundReport:
    """H(Y | D_S) ≤ I(f̂(X); Y | D_S) + R_{D_S} with cross-entropy risk.

    f̂(X) is the predicted distribution: inputs with identical channel
    rows are one value.  R_{D_S} is the unbounded cross-entropy of those
    rows.  The sampled-label variant I(Ŷ; Y | D_S) is reported in the
    metadata; it is not a valid lower bound in general.
    """
    if loss is not None and loss.kind != LossKind.BOUNDED_CROSS_ENTROPY:
        raise ContractError("the risk/information inequality requires a cross-entropy loss.")
    if ch.n_x != joint.n_x or ch.n_y != joint.n_y:
        raise InputValidationError("channel shape must be (|X|, |Y|) of the joint.")

    sources = list(joint.source_domains)
    source = condition_on_domains(joint.probs, sources)
    p_xyd = source.sum(axis=3)  # (x, y, ds)
    p_xy = p_xyd.sum(axis=2)

    rows = ch.cond_probs
    if np.any((p_xy > 0) & (rows <= 0)):
        raise ContractError("the channel assigns zero probability to an observed label.")
    log_rows = np.log(np.where(rows > 0, rows, 1.0))
    risk = float(-(p_xy * log_rows).sum())

    _, row_class = np.unique(rows, axis=0, return_inverse=True)
    row_class = np.asarray(row_class).reshape(-1)
    by_row = np.zeros((int(row_class.max()) + 1, joint.n_y, len(sources)))
    np.add.at(by_row, row_class, p_xyd)
    info = cmi_of(by_row, [0], [1], [2])

    cond_entropy = conditional_entropy(p_xyd.sum(axis=0))  # table [y, ds]

    sampled = cmi_of(condition_on_domains(push_channel(joint, ch), sources), [0], [1], [2])
    metadata: dict[str, float | str | None] = {
        "prediction_convention": "distribution",
        "sampled_mi": sampled,
        "sampled_slack": sampled + risk - cond_entropy,
    }
    if loss is not None:
        floor = math.exp(-loss.cap)
        bounded = rows * (1.0 - floor * joint.n_y) + floor
        bounded_risk = float(-(p_xy * np.log(bounded)).sum())
        metadata["bounded_risk"] = bounded_risk
        metadata["bounded_slack"] = info + bounded_risk - cond_entropy

    return BoundReport.build(
        name="theorem3",
        lhs=cond_entropy,
        terms={"conditional_information": info, "source_risk": risk},
        seed=seed,
        metadata=metadata,
    )


def verify_theorem4(
    joint: FiniteJoint,
    ch: Channel,
    seed: Optional[int] = None,
    chain_rule_tol: Optional[float] = None,
) -> list[BoundReport]:
    """The three chain-rule inequalities under the source law, with identity residuals.

    *chain_rule_tol* defaults to ``CHAIN_RULE_TOLERANCE`` from the process settings.
    """
    tol = get_config().CHAIN_RULE_TOLERANCE if chain_rule_tol is None else chain_rule_tol
    source4 = condition_on_domains(push_channel(joint, ch), list(joint.source_domains))
    # axes: 0 = ŷ, 1 = y, 2 = d, 3 = g
    d_given_yg = cmi_of(source4, [2], [0], [1, 3])
    d_given_y = cmi_of(source4, [2], [0], [1])
    g_given_yd = cmi_of(source4, [3], [0], [1, 2])
    g_given_y = cmi_of(source4, [3], [0], [1])
    pred_label = mi_of(source4, [0], [1])
    pred_label_given_d = cmi_of(source4, [0], [1], [2])
    pred_domain = mi_of(source4, [0], [2])
    pred_dg_given_y = cmi_of(source4, [0], [2, 3], [1])
    pred_yd = mi_of(source4, [0], [1, 2])

    residuals = {
        "residual_dg_via_d": pred_dg_given_y - (d_given_y + g_given_yd),
        "residual_dg_via_g": pred_dg_given_y - (g_given_y + d_given_yg),
        "residual_yd_via_d": pred_yd - (pred_domain + pred_label_given_d),
        "residual_yd_via_y": pred_yd - (pred_label + d_given_y),
        "residual_rearranged": pred_label - pred_label_given_d + d_given_y - pred_domain,
    }
    chain_rules_hold = all(abs(r) <= tol for r in residuals.values())
    metadata: dict[str, float | bool] = {
        **residuals,
        "chain_rule_tolerance": tol,
        "chain_rules_hold": chain_rules_hold,
    }

    return [
        BoundReport.build(
            name="theorem4_eq4",
            lhs=d_given_yg,
            terms={"domain_given_label": d_given_y, "group_given_label_domain": g_given_yd},
            seed=seed,
            metadata=dict(metadata),
        ),
        BoundReport.build(
            name="theorem4_eq5",
            lhs=pred_label_given_d,
            terms={"prediction_label": pred_label, "domain_given_label": d_given_y},
            seed=seed,
            metadata=dict(metadata),
        ),
        BoundReport.build(
            name="theorem4_eq6",
            lhs=g_given_y,
            terms={"domain_given_label": d_given_y, "group_given_label_domain": g_given_yd},
            seed=seed,
            metadata=dict(metadata),
        ),
    ]


# ---------------------------------------------------------------------------
# Lemmas
# ---------------------------------------------------------------------------

def _lemma1(inst: Lemma1Instance) -> tuple[float, dict[str, float]]:
    p = as_distribution(inst.p, "p")
    q = as_distribution(inst.q, "q")
    f = np.asarray(inst.f, dtype=np.float64)
    if not (f.shape == p.shape == q.shape):
        raise InputValidationError("f, p and q must share one finite space.")
    if np.any(f < 0) or np.any(f > inst.cap):
        raise InputValidationError("f must take values in [0, cap].")
    lhs = float(f @ p - f @ q)
    return lhs, {"cap_tv": inst.cap * tv_distance(p, q)}


def _lemma2(inst: Lemma2Instance) -> tuple[float, dict[str, float]]:
    joint = as_probability_table(inst.joint, 2, "joint")
    p_x = joint.sum(axis=1)
    p_y = joint.sum(axis=0)
    lhs = 0.0
    for x in np.flatnonzero(p_x > 0):
        lhs += p_x[x] * 0.5 * float(np.abs(joint[x] / p_x[x] - p_y).sum())
    return lhs, {"sqrt_half_mi": math.sqrt(mutual_information(joint) / 2.0)}


def _lemma3(inst: Lemma3Instance) -> tuple[float, dict[str, float]]:
    lhs = tv_distance(inst.p_j, inst.p_j_prime) - tv_distance(inst.p_i, inst.p_i_prime)
    return lhs, {
        "tv_j_i": tv_distance(inst.p_j, inst.p_i),
        "tv_jprime_iprime": tv_distance(inst.p_j_prime, inst.p_i_prime),
    }


def _lemma4(inst: Lemma4Instance) -> tuple[float, dict[str, float]]:
    joint = as_probability_table(inst.joint, 4, "joint")  # (x, y, d, g)
    p_xdg = joint.sum(axis=1)
    p_ydg = joint.sum(axis=0)
    p_dg = p_ydg.sum(axis=0)
    lhs = 0.0
    for x, d, g in zip(*np.nonzero(p_xdg > 0)):
        posterior = joint[x, :, d, g] / p_xdg[x, d, g]
        reference = p_ydg[:, d, g] / p_dg[d, g]
        lhs += p_xdg[x, d, g] * 0.5 * float(np.abs(posterior - reference).sum())
    return lhs, {"sqrt_half_cmi": math.sqrt(cmi_of(joint, [0], [1], [2, 3]) / 2.0)}


_LEMMAS = {
    1: (Lemma1Instance, _lemma1),
    2: (Lemma2Instance, _lemma2),
    3: (Lemma3Instance, _lemma3),
    4: (Lemma4Instance, _lemma4),
}


def verify_lemma(k: int, instance: LemmaInstance, seed: Optional[int] = None) -> BoundReport:
    """Check lemma *k* (1..4) on a matching instance."""
    if k not in _LEMMAS:
        raise InputValidationError(f"lemma index must be 1..4, got {k}.")
    expected, check = _LEMMAS[k]
    if not isinstance(instance, expected):
        raise InputValidationError(
            f"lemma {k} expects {expected.__name__}, got {type(instance).__name__}."
        )
    lhs, terms = check(instance)
    return BoundReport.build(name=f"lemma{k}", lhs=lhs, terms=terms, seed=seed)
