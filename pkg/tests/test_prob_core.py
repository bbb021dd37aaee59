"""Exact information-theoretic quantities on small tables."""

from __future__ import annotations

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.config import reset_config
from app.errors import ContractError, DegenerateConditioningError, InputValidationError
from app.models.probability import Channel, FiniteJoint
from app.services.prob_core import (
    _clamp_mi,
    cmi_of,
    condition_on_domains,
    conditional_entropy,
    conditional_mutual_information,
    entropy,
    kl_divergence,
    marginal,
    mi_of,
    mutual_information,
    push_channel,
    tv_distance,
)


def _random_joint(rng: np.random.Generator, sizes=(3, 2, 3, 2)) -> FiniteJoint:
    probs = rng.dirichlet(np.ones(int(np.prod(sizes)))).reshape(sizes)
    return FiniteJoint(probs=probs, source_domains=(0, 1), target_domain=sizes[2] - 1)


class TestTotalVariation:
    def test_disjoint_supports(self):
        assert tv_distance([1, 0], [0, 1]) == 1.0

    def test_identical(self):
        assert tv_distance([0.3, 0.7], [0.3, 0.7]) == 0.0

    def test_half_l1(self):
        assert tv_distance([0.5, 0.5], [0.9, 0.1]) == pytest.approx(0.4, abs=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(InputValidationError):
            tv_distance([0.5, 0.5], [1.0, 0.0, 0.0])

    def test_not_normalized(self):
        with pytest.raises(InputValidationError):
            tv_distance([0.5, 0.6], [0.5, 0.5])

    def test_negative_entry(self):
        with pytest.raises(InputValidationError):
            tv_distance([1.2, -0.2], [0.5, 0.5])

    def test_triangle_inequality(self, rng):
        for _ in range(200):
            p, q, r = rng.dirichlet(np.ones(6), size=3)
            assert tv_distance(p, r) <= tv_distance(p, q) + tv_distance(q, r) + 1e-15

    def test_pinsker(self, rng):
        """TV(p, q) ≤ sqrt(KL(p‖q) / 2)."""
        for _ in range(200):
            p, q = rng.dirichlet(np.full(5, 0.5), size=2)
            assert tv_distance(p, q) <= math.sqrt(kl_divergence(p, q) / 2.0) + 1e-12


class TestEntropies:
    def test_uniform_entropy(self):
        assert entropy([0.25] * 4) == pytest.approx(math.log(4), abs=1e-15)

    def test_zero_mass_convention(self):
        assert entropy([1.0, 0.0]) == 0.0

    def test_conditional_entropy_independent(self):
        joint = np.outer([0.2, 0.8], [0.5, 0.5])  # [a, c]
        expected = -(0.2 * math.log(0.2) + 0.8 * math.log(0.8))
        assert conditional_entropy(joint) == pytest.approx(expected, abs=1e-12)

    def test_kl_nonnegative_and_zero_on_self(self, rng):
        p = rng.dirichlet(np.ones(5))
        q = rng.dirichlet(np.ones(5))
        assert kl_divergence(p, q) >= 0.0
        assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-15)

    def test_kl_requires_support(self):
        with pytest.raises(InputValidationError):
            kl_divergence([0.5, 0.5], [1.0, 0.0])


class TestMutualInformation:
    def test_product_law_is_zero(self):
        joint = np.outer([0.3, 0.7], [0.1, 0.4, 0.5])
        assert mutual_information(joint) == pytest.approx(0.0, abs=1e-15)

    def test_perfectly_dependent_bits(self):
        joint = np.array([[0.5, 0.0], [0.0, 0.5]])
        assert mutual_information(joint) == pytest.approx(math.log(2), abs=1e-12)

    def test_mi_equals_kl_to_product(self, rng):
        joint = rng.dirichlet(np.ones(12)).reshape(3, 4)
        product = np.outer(joint.sum(axis=1), joint.sum(axis=0))
        assert mutual_information(joint) == pytest.approx(
            kl_divergence(joint.ravel(), product.ravel()), abs=1e-12
        )

    def test_cmi_is_average_of_slices(self, rng):
        joint = rng.dirichlet(np.ones(18)).reshape(3, 2, 3)
        p_c = joint.sum(axis=(0, 1))
        expected = sum(
            p_c[c] * mutual_information(joint[:, :, c] / p_c[c]) for c in range(3)
        )
        assert conditional_mutual_information(joint) == pytest.approx(expected, abs=1e-12)

    def test_chain_rule(self, rng):
        """I(A; B, C) = I(A; C) + I(A; B | C)."""
        table = rng.dirichlet(np.ones(24)).reshape(2, 3, 4)
        lhs = mi_of(table, [0], [1, 2])
        rhs = mi_of(table, [0], [2]) + cmi_of(table, [0], [1], [2])
        assert lhs == pytest.approx(rhs, abs=1e-10)

    def test_overlapping_groups_rejected(self, rng):
        table = rng.dirichlet(np.ones(8)).reshape(2, 2, 2)
        with pytest.raises(InputValidationError):
            mi_of(table, [0, 1], [1])

    def test_rejects_wrong_rank(self):
        with pytest.raises(InputValidationError):
            mutual_information(np.array([0.5, 0.5]))


class TestRoundOffClamp:
    def test_tiny_negative_becomes_zero(self):
        assert _clamp_mi(-5e-13) == 0.0
        assert _clamp_mi(0.25) == 0.25

    def test_large_negative_is_a_contract_error(self):
        with pytest.raises(ContractError):
            _clamp_mi(-1e-6)

    def test_clamp_comes_from_settings(self, monkeypatch):
        monkeypatch.setenv("MI_CLAMP", "1e-5")
        assert _clamp_mi(-1e-6) == 0.0


class TestTablePlumbing:
    def test_marginal_reorders_axes(self, rng):
        table = rng.dirichlet(np.ones(24)).reshape(2, 3, 4)
        out = marginal(table, [2, 0])
        assert out.shape == (4, 2)
        assert_allclose(out, table.sum(axis=1).T)

    def test_condition_on_domains_normalizes(self, rng):
        joint = _random_joint(rng)
        conditioned = condition_on_domains(joint.probs, [0, 1])
        assert conditioned.shape[2] == 2
        assert conditioned.sum() == pytest.approx(1.0, abs=1e-12)

    def test_empty_domain_filter(self, rng):
        with pytest.raises(DegenerateConditioningError):
            condition_on_domains(_random_joint(rng).probs, [])

    def test_zero_mass_domain(self):
        probs = np.zeros((1, 1, 3, 1))
        probs[0, 0, 0, 0] = 0.5
        probs[0, 0, 1, 0] = 0.5
        with pytest.raises(DegenerateConditioningError):
            condition_on_domains(probs, [2])


class TestPushChannel:
    def test_identity_channel_copies_x(self, rng):
        joint = _random_joint(rng, sizes=(2, 2, 3, 2))
        pushed = push_channel(joint, Channel.identity(2))
        assert_allclose(pushed, joint.probs, atol=1e-15)

    def test_constant_channel_concentrates(self, rng):
        joint = _random_joint(rng)
        pushed = push_channel(joint, Channel.constant(3, 2, label=1))
        assert pushed[0].sum() == 0.0
        assert_allclose(pushed[1], joint.probs.sum(axis=0))

    def test_data_processing(self, rng):
        """I(D; Ŷ) ≤ I(D; X) and I(G; Ŷ | Y) ≤ I(G; X | Y) for any channel."""
        for _ in range(50):
            joint = _random_joint(rng)
            ch = Channel(cond_probs=rng.dirichlet(np.ones(4), size=joint.n_x))
            pushed = push_channel(joint, ch)
            assert mi_of(pushed, [2], [0]) <= mi_of(joint.probs, [2], [0]) + 1e-12
            assert cmi_of(pushed, [3], [0], [1]) <= cmi_of(joint.probs, [3], [0], [1]) + 1e-12

    def test_row_count_mismatch(self, rng):
        with pytest.raises(InputValidationError):
            push_channel(_random_joint(rng), Channel.identity(2))


class TestFiniteJoint:
    def test_json_round_trip_exact(self, rng):
        joint = _random_joint(rng)
        restored = FiniteJoint.from_json(joint.to_json())
        assert np.array_equal(restored.probs, joint.probs)
        assert restored.source_domains == joint.source_domains

    def test_target_must_not_be_source(self, rng):
        probs = rng.dirichlet(np.ones(12)).reshape(1, 2, 3, 2)
        with pytest.raises(InputValidationError):
            FiniteJoint(probs=probs, source_domains=(0, 1), target_domain=1)

    def test_needs_two_sources(self, rng):
        probs = rng.dirichlet(np.ones(12)).reshape(1, 2, 3, 2)
        with pytest.raises(InputValidationError):
            FiniteJoint(probs=probs, source_domains=(0,), target_domain=2)

    def test_cell_limit_comes_from_settings(self, monkeypatch, rng):
        probs = rng.dirichlet(np.ones(24)).reshape(2, 2, 3, 2)
        FiniteJoint(probs=probs, source_domains=(0, 1), target_domain=2)
        monkeypatch.setenv("MAX_JOINT_CELLS", "10")
        reset_config()
        with pytest.raises(InputValidationError):
            FiniteJoint(probs=probs, source_domains=(0, 1), target_domain=2)

    def test_unnormalized(self):
        with pytest.raises(InputValidationError):
            FiniteJoint(probs=np.full((1, 1, 3, 1), 0.3), source_domains=(0, 1), target_domain=2)

    def test_malformed_document(self):
        with pytest.raises(InputValidationError):
            FiniteJoint.from_json({"sizes": [1, 1, 3, 1], "probs": [1.0]})

    def test_channel_rows_must_sum_to_one(self):
        with pytest.raises(InputValidationError):
            Channel(cond_probs=[[0.5, 0.6]])
