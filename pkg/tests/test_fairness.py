"""Equalized-odds and equal-opportunity violations."""

from __future__ import annotations

import numpy as np
import pytest

from app.errors import DegenerateEvaluationError, InputValidationError
from app.models.batch_models import EvalBatch
from app.services.bounds import eod_violation_exact
from app.services.fairness import (
    accuracy,
    argmax_predictions,
    conditional_pred_dists,
    eo,
    eod,
    fairness_report,
    pair_normalizer,
)


def _biased_batch() -> EvalBatch:
    """Group 0 is always right; group 1 always gets label 0."""
    y_true = np.array([0, 1, 0, 1, 0, 1, 0, 1])
    g = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    y_pred = np.where(g == 0, y_true, 0)
    return EvalBatch(y_true=y_true, y_pred=y_pred, g=g)


class TestNormalizer:
    def test_binary(self):
        assert pair_normalizer(2, 2) == 0.5

    def test_three_groups(self):
        assert pair_normalizer(3, 3) == pytest.approx(1 / 9)

    def test_single_group(self):
        assert pair_normalizer(4, 1) == 0.0


class TestViolations:
    def test_perfect_predictor_is_fair(self, rng):
        y = rng.integers(0, 3, size=60)
        g = rng.integers(0, 2, size=60)
        batch = EvalBatch(y_true=y, y_pred=y, g=g, n_labels=3, n_groups=2)
        assert eod(batch) == 0.0
        assert eo(batch) == 0.0
        assert accuracy(batch) == 1.0

    def test_biased_predictor(self):
        batch = _biased_batch()
        assert eod(batch) == pytest.approx(0.5)
        assert eo(batch) == pytest.approx(0.5)
        assert accuracy(batch) == pytest.approx(0.75)

    def test_eo_ignores_which_wrong_label(self):
        """Both groups miss label 0, but into different labels."""
        y_true = np.array([0, 0, 1, 1, 2, 2])
        g = np.array([0, 1, 0, 1, 0, 1])
        y_pred = np.array([1, 2, 1, 1, 2, 2])
        batch = EvalBatch(y_true=y_true, y_pred=y_pred, g=g)
        assert eo(batch) == 0.0
        # only the y = 0 pair differs, with TV 1; C^D = 2 / (3·2·1)
        assert eod(batch) == pytest.approx(1 / 3)

    def test_conditional_table_marks_empty_cells(self):
        batch = EvalBatch(y_true=[0, 0, 1], y_pred=[0, 1, 1], g=[0, 1, 0], n_groups=2)
        table = conditional_pred_dists(batch)
        assert table.empty.tolist() == [[False, False], [False, True]]
        np.testing.assert_allclose(table.probs[1, 0], [0.0, 1.0])

    def test_empty_cells_skip_pairs(self):
        batch = EvalBatch(y_true=[0, 0, 1], y_pred=[0, 1, 1], g=[0, 1, 0], n_groups=2)
        report = fairness_report(batch)
        assert report.pairs_used == 1
        assert report.pairs_skipped == 1
        assert report.eod == pytest.approx(0.5)

    def test_no_comparable_pair(self):
        batch = EvalBatch(y_true=[0, 1], y_pred=[0, 1], g=[0, 0], n_groups=2)
        with pytest.raises(DegenerateEvaluationError):
            eod(batch)

    def test_report_percentages(self):
        report = fairness_report(_biased_batch())
        assert report.eod_percent == pytest.approx(50.0)
        assert report.eo_percent == pytest.approx(50.0)
        assert report.n == 8


class TestViolationProperties:
    @staticmethod
    def _random_batch(rng: np.random.Generator, n: int = 120) -> EvalBatch:
        return EvalBatch(
            y_true=rng.integers(0, 3, size=n),
            y_pred=rng.integers(0, 3, size=n),
            g=rng.integers(0, 3, size=n),
            n_labels=3,
            n_groups=3,
        )

    def test_matches_exact_violation_of_empirical_law(self, rng):
        for _ in range(30):
            batch = self._random_batch(rng)
            table = np.zeros((3, 3, 1, 3))
            np.add.at(table, (batch.y_pred, batch.y_true, 0, batch.g), 1.0)
            exact = eod_violation_exact(table / batch.n, [0])
            assert eod(batch) == pytest.approx(exact, abs=1e-12)

    def test_duplicating_rows_changes_nothing(self, rng):
        for _ in range(30):
            batch = self._random_batch(rng)
            doubled = EvalBatch(
                y_true=np.tile(batch.y_true, 2),
                y_pred=np.tile(batch.y_pred, 2),
                g=np.tile(batch.g, 2),
                n_labels=3,
                n_groups=3,
            )
            assert eod(doubled) == pytest.approx(eod(batch), abs=1e-12)
            assert eo(doubled) == pytest.approx(eo(batch), abs=1e-12)

    def test_eo_never_exceeds_eod(self, rng):
        for _ in range(100):
            batch = self._random_batch(rng, n=int(rng.integers(20, 200)))
            assert eo(batch) <= eod(batch) + 1e-12


class TestEvalBatch:
    def test_length_mismatch(self):
        with pytest.raises(InputValidationError):
            EvalBatch(y_true=[0, 1], y_pred=[0], g=[0, 1])

    def test_label_exceeds_declared(self):
        with pytest.raises(InputValidationError):
            EvalBatch(y_true=[0, 2], y_pred=[0, 1], g=[0, 1], n_labels=2)

    def test_sizes_inferred(self):
        batch = EvalBatch(y_true=[0, 2], y_pred=[1, 1], g=[0, 3])
        assert batch.n_labels == 3
        assert batch.n_groups == 4


class TestArgmax:
    def test_ties_go_to_lowest_label(self):
        scores = np.array([[0.5, 0.5, 0.0], [0.1, 0.7, 0.7]])
        assert argmax_predictions(scores).tolist() == [0, 1]
