"""
Synthetic FairDG Data.

Class-conditional Gaussian features with per-domain mean shifts and a
group signal, plus group-skewed label noise on the training and
validation domains.

Feature layout: the first ⌈k/2⌉ coordinates carry the class means, the
rest carry the group offsets, and domain shifts act on all coordinates.
With zero label noise the group is therefore independent of the class
evidence and the Bayes rule has no equalized-odds violation.
"""

from __future__ import annotations

import numpy as np
from scipy import stats

from app.models.batch_models import SampleBatch
from app.models.experiment_models import SynthConfig, SyntheticData

__all__ = ["generate_synthetic", "group_flip_probability"]


def group_flip_probability(cfg: SynthConfig, g: np.ndarray) -> np.ndarray:
    """P(label replaced by class 0 | g) = bias·(1 − g/(|G| − 1)); group 0 is the most affected."""
    return cfg.group_bias_strength * (1.0 - g / (cfg.n_groups - 1))


def generate_synthetic(cfg: SynthConfig) -> SyntheticData:
    """Seed-deterministic per-domain batches for *cfg*."""
    rng = np.random.default_rng(cfg.seed)
    k = cfg.feature_dim
    class_dims = (k + 1) // 2

    class_means = np.zeros((cfg.n_labels, k))
    class_means[:, :class_dims] = cfg.class_separation * stats.norm.rvs(
        size=(cfg.n_labels, class_dims), random_state=rng
    )
    group_offsets = np.zeros((cfg.n_groups, k))
    if k > class_dims:
        group_offsets[:, class_dims:] = cfg.group_signal * stats.norm.rvs(
            size=(cfg.n_groups, k - class_dims), random_state=rng
        )
    directions = stats.norm.rvs(size=(cfg.n_domains, k), random_state=rng)
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    domain_shifts = cfg.domain_shift_strength * directions

    domains = []
    for d in range(cfg.n_domains):
        n = cfg.n_per_domain
        y = rng.integers(0, cfg.n_labels, size=n)
        g = rng.integers(0, cfg.n_groups, size=n)
        noise = cfg.noise_std * stats.norm.rvs(size=(n, k), random_state=rng)
        x = class_means[y] + group_offsets[g] + domain_shifts[d] + noise

        flips = stats.bernoulli.rvs(group_flip_probability(cfg, g), random_state=rng).astype(bool)
        noisy = d != cfg.target_domain or cfg.noisy_target_labels
        y_observed = np.where(flips & noisy, 0, y)
        domains.append(SampleBatch(x=x, y=y_observed, d=np.full(n, d), g=g))

    return SyntheticData(
        domains=domains,
        n_labels=cfg.n_labels,
        n_groups=cfg.n_groups,
        n_source_domains=cfg.n_source_domains,
    )
