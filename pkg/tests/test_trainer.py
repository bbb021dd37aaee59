"""Synthetic data, two-stage training, sweeps and studies on small configurations."""

from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from app.config import LabConfig
from app.errors import InputValidationError
from app.models.batch_models import PartitionLabels
from app.models.enums import FairnessMetric, InvarianceSource, SweepMode
from app.models.experiment_models import ExperimentConfig, SynthConfig, TrainConfig
from app.models.pareto_models import TradeoffPoint
from app.services.synthetic import generate_synthetic, group_flip_probability
from app.services.trainer import TrainerService, stratified_batches


@pytest.fixture
def trainer(logger, lab_config) -> TrainerService:
    return TrainerService(logger, lab_config)


@pytest.fixture
def data(tiny_synth):
    return generate_synthetic(tiny_synth)


def _weights(stack) -> np.ndarray:
    return np.concatenate([stack.encoder.flatten(), stack.classifier.flatten()])


class TestSynthetic:
    def test_layout(self, tiny_synth, data):
        assert len(data.domains) == tiny_synth.n_domains
        for domain_id, batch in enumerate(data.domains):
            assert batch.n == tiny_synth.n_per_domain
            assert set(batch.d.tolist()) == {domain_id}
        assert data.source.n == 2 * tiny_synth.n_per_domain
        assert data.target.d[0] == tiny_synth.target_domain

    def test_seed_determinism(self, tiny_synth):
        a, b = generate_synthetic(tiny_synth), generate_synthetic(tiny_synth)
        np.testing.assert_array_equal(a.source.x, b.source.x)
        np.testing.assert_array_equal(a.target.y, b.target.y)
        c = generate_synthetic(tiny_synth.model_copy(update={"seed": 4}))
        assert not np.array_equal(a.source.x, c.source.x)

    def test_flip_probability_favours_last_group(self, tiny_synth):
        probs = group_flip_probability(tiny_synth, np.array([0, 1]))
        np.testing.assert_allclose(probs, [0.3, 0.0])

    def test_bad_layout(self, data):
        with pytest.raises(InputValidationError):
            type(data)(domains=data.domains[:3], n_labels=2, n_groups=2, n_source_domains=2)


class TestStratifiedBatches:
    def test_every_batch_covers_every_cell(self, data, rng):
        source = data.source
        batches = stratified_batches(source, 32, rng)
        assert len(batches) > 1
        np.testing.assert_array_equal(np.sort(np.concatenate(batches)), np.arange(source.n))
        for rows in batches:
            sub = source.take(rows)
            cells = PartitionLabels(y=sub.y, d=sub.d).cells()
            assert len(cells) == len(PartitionLabels(y=source.y, d=source.d).cells())
            assert min(cell.size for cell in cells) >= 2


class TestStage1:
    def test_encoders_are_trained_and_frozen(self, trainer, data, tiny_train):
        result = trainer.stage1_train(data, tiny_train)
        stack = result.stack
        assert stack.domain_frozen and stack.group_frozen
        assert stack.domain_encoder.out_dim == tiny_train.z_d_dim
        assert stack.group_encoder.out_dim == tiny_train.z_g_dim
        assert 0.0 <= result.domain_accuracy <= 1.0

    def test_one_hot_skips_stage1(self, trainer, data, tiny_train):
        cfg = tiny_train.model_copy(update={"invariance_source": InvarianceSource.ONE_HOT})
        result = trainer.stage1_train(data, cfg)
        assert result.stack.domain_encoder is None
        assert result.domain_accuracy is None

    def test_deterministic(self, trainer, data, tiny_train):
        a = trainer.stage1_train(data, tiny_train).stack
        b = trainer.stage1_train(data, tiny_train).stack
        np.testing.assert_array_equal(a.group_encoder.flatten(), b.group_encoder.flatten())
        np.testing.assert_array_equal(_weights(a), _weights(b))

    def test_unreached_target_is_logged(self, trainer, data, tiny_train, log_stream):
        cfg = tiny_train.model_copy(update={"stage1_epochs": 1, "stage1_target_accuracy": 1.0})
        result = trainer.stage1_train(data, cfg)
        assert not (result.domain_converged and result.group_converged)
        assert "Stage 1" in log_stream.getvalue()


class TestStage2:
    def test_curve_and_final_epoch(self, trainer, data, tiny_train):
        cfg = tiny_train.model_copy(update={"mode": SweepMode.PER_LAMBDA})
        stage1 = trainer.stage1_train(data, cfg)
        result = trainer.stage2_train(data, stage1, cfg, lam=0.3, gamma=1.0)
        assert [r.epoch for r in result.curve] == [1, 2]
        assert result.best_epoch == cfg.stage2_epochs
        assert result.lam == 0.3
        assert not np.array_equal(_weights(result.stack), _weights(stage1.stack))

    def test_best_epoch_selection(self, trainer, data, tiny_train):
        cfg = tiny_train.model_copy(
            update={"mode": SweepMode.PER_LAMBDA, "best_epoch_selection": True, "stage2_epochs": 3}
        )
        stage1 = trainer.stage1_train(data, cfg)
        result = trainer.stage2_train(data, stage1, cfg, lam=0.2, gamma=1.0)
        assert 1 <= result.best_epoch <= 3

    def test_zero_weights_reduce_to_erm(self, trainer, data, tiny_train):
        """With λ = γ = 0 the invariance inputs never enter the update."""
        cfg = tiny_train.model_copy(update={"mode": SweepMode.PER_LAMBDA})
        one_hot = cfg.model_copy(update={"invariance_source": InvarianceSource.ONE_HOT})
        learned = trainer.stage2_train(data, trainer.stage1_train(data, cfg), cfg, 0.0, 0.0)
        plain = trainer.stage2_train(data, trainer.stage1_train(data, one_hot), one_hot, 0.0, 0.0)
        np.testing.assert_array_equal(_weights(learned.stack), _weights(plain.stack))

    def test_degenerate_minibatch_is_resampled(
        self, trainer, data, tiny_train, log_stream, monkeypatch
    ):
        def singleton_batches(batch, batch_size, rng):
            return [np.array([0, batch.n - 1])]

        monkeypatch.setattr("app.services.trainer.stratified_batches", singleton_batches)
        cfg = tiny_train.model_copy(update={"mode": SweepMode.PER_LAMBDA, "stage2_epochs": 1})
        stage1 = trainer.stage1_train(data, cfg)
        result = trainer.stage2_train(data, stage1, cfg, lam=0.5, gamma=1.0)
        assert "Resampling degenerate minibatch" in log_stream.getvalue()
        assert np.isfinite(result.curve[0].objective)
        assert not np.array_equal(_weights(result.stack), _weights(stage1.stack))

    def test_lambda_out_of_range(self, trainer, data, tiny_train):
        cfg = tiny_train.model_copy(update={"mode": SweepMode.PER_LAMBDA})
        stage1 = trainer.stage1_train(data, cfg)
        with pytest.raises(InputValidationError):
            trainer.stage2_train(data, stage1, cfg, lam=1.0, gamma=0.0)

    def test_loss_conditional_needs_conditioned_encoder(self, trainer, data, tiny_train):
        cfg = tiny_train.model_copy(update={"mode": SweepMode.PER_LAMBDA})
        stage1 = trainer.stage1_train(data, cfg)
        with pytest.raises(InputValidationError):
            trainer.train_loss_conditional(data, stage1, cfg, gamma=1.0)

    def test_cap_raise_is_logged(self, logger, lab_config, log_stream, tiny_synth, tiny_train):
        data = generate_synthetic(tiny_synth.model_copy(update={"n_labels": 3}))
        service = TrainerService(logger, lab_config)
        cfg = tiny_train.model_copy(update={"stage2_epochs": 1})
        service.train_loss_conditional(data, service.stage1_train(data, cfg), cfg, gamma=0.5)
        assert "RAISE_CAP" in log_stream.getvalue()


class TestSweep:
    def test_loss_conditional_sweep(self, trainer, data, tiny_train):
        stage1 = trainer.stage1_train(data, tiny_train)
        result = trainer.sweep(data, stage1, tiny_train, gamma=1.0)
        assert [r.lam for r in result.target] == tiny_train.lambda_grid
        assert len(result.validation) == len(tiny_train.lambda_grid)
        for record in result.target:
            assert 0.0 <= record.eod <= 1.0
            assert 0.0 <= record.accuracy <= 1.0
        assert set(result.csv_rows()[0]) == {"lambda", "V_eod", "V_eo", "U"}
        assert len(result.points(FairnessMetric.EO, "validation")) == 2

    def test_per_lambda_sweep_ignores_thread_count(self, logger, data, tiny_train):
        cfg = tiny_train.model_copy(update={"mode": SweepMode.PER_LAMBDA})
        serial = TrainerService(logger, LabConfig(FAIRDG_THREADS=1))
        parallel = TrainerService(logger, LabConfig(FAIRDG_THREADS=2))
        stage1 = serial.stage1_train(data, cfg)
        a = serial.sweep(data, stage1, cfg, gamma=1.0)
        b = parallel.sweep(data, stage1, cfg, gamma=1.0)
        assert a.model_dump() == b.model_dump()

    def test_zero_point_of_per_lambda_sweep_is_standalone_erm(self, trainer, data, tiny_train):
        cfg = tiny_train.model_copy(update={"mode": SweepMode.PER_LAMBDA})
        stage1 = trainer.stage1_train(data, cfg)
        result = trainer.sweep(data, stage1, cfg, gamma=0.0)
        erm = trainer.stage2_train(data, stage1, cfg, lam=0.0, gamma=0.0)
        target = trainer.evaluate(erm.stack, data.target, data.n_labels, data.n_groups, 0.0)
        held_out = trainer.evaluate(erm.stack, data.validation, data.n_labels, data.n_groups, 0.0)
        point, val_point = result.target[0], result.validation[0]
        assert point.lam == 0.0
        assert (point.accuracy, point.eod, point.eo) == (target.accuracy, target.eod, target.eo)
        assert (val_point.accuracy, val_point.eod) == (held_out.accuracy, held_out.eod)

    @pytest.mark.slow
    def test_validation_penalty_falls_with_lambda(self, trainer):
        negative = 0
        for seed in range(3):
            experiment = ExperimentConfig().with_seed(seed)
            data = generate_synthetic(experiment.synth)
            stage1 = trainer.stage1_train(data, experiment.train)
            result = trainer.sweep(data, stage1, experiment.train, gamma=1.0)
            pairs = [(r.lam, r.fairness_penalty) for r in result.validation]
            lams, penalties = zip(*[(lam, p) for lam, p in pairs if p is not None])
            negative += stats.spearmanr(lams, penalties).statistic < 0
        assert negative >= 2

    def test_validation_penalty_reported(self, trainer, data, tiny_train):
        stage1 = trainer.stage1_train(data, tiny_train)
        result = trainer.sweep(data, stage1, tiny_train, gamma=1.0)
        penalties = [r.fairness_penalty for r in result.validation]
        assert all(p is None or 0.0 <= p <= 1.0 for p in penalties)


class TestModelSelection:
    def test_configured_gamma_wins(self, trainer, data, tiny_train):
        stage1 = trainer.stage1_train(data, tiny_train)
        assert trainer.resolve_gamma(data, stage1, tiny_train) == tiny_train.gamma

    def test_tune_gamma_scores_every_value(self, trainer, data, tiny_train, log_stream):
        cfg = tiny_train.model_copy(update={"gamma": None})
        stage1 = trainer.stage1_train(data, cfg)
        tuning = trainer.tune_gamma(data, stage1, cfg)
        assert [s.gamma for s in tuning.scores] == sorted(cfg.gamma_grid)
        best = max(s.validation_hvi for s in tuning.scores)
        assert next(s for s in tuning.scores if s.validation_hvi == best).gamma == tuning.best_gamma
        assert "SELECT_GAMMA" in log_stream.getvalue()

    def test_front_hvi_uses_unit_bounds(self):
        assert TrainerService.front_hvi([TradeoffPoint(v=0.0, u=1.0)]) == pytest.approx(100.0)


class TestStudies:
    def test_ablation_variants(self, trainer, tiny_synth, tiny_train):
        cfg = ExperimentConfig(synth=tiny_synth, train=tiny_train)
        report = trainer.run_ablation(generate_synthetic(tiny_synth), cfg)
        assert [e.name for e in report.entries] == [
            "ERM",
            "ERM+SDI",
            "ERM+Fair",
            "PAFDG",
            "PAFDG-S",
        ]
        assert report.by_name("ERM").gamma == 0.0
        assert report.by_name("ERM").selected_lambda == 0.0
        assert report.by_name("PAFDG").gamma == tiny_train.gamma
        with pytest.raises(KeyError):
            report.by_name("missing")

    def test_source_counts(self, trainer, tiny_train):
        synth = SynthConfig(n_per_domain=100, feature_dim=4, n_labels=2, n_groups=2, seed=1)
        cfg = ExperimentConfig(synth=synth, train=tiny_train, source_counts=[2, 3])
        entries = trainer.source_count_study(cfg)
        assert [e.n_sources for e in entries] == [2, 3]

    def test_source_counts_need_two(self, trainer, tiny_synth, tiny_train):
        cfg = ExperimentConfig(synth=tiny_synth, train=tiny_train)
        with pytest.raises(InputValidationError):
            trainer.source_count_study(cfg, counts=[1, 2])

    def test_trend_study_shape(self, trainer, tiny_synth, tiny_train):
        cfg = ExperimentConfig(synth=tiny_synth, train=tiny_train)
        report = trainer.trend_study(cfg, seeds=[0, 1])
        assert [s.seed for s in report.seeds] == [0, 1]
        assert 0 <= report.negative_spearman_count <= 2

    @pytest.mark.slow
    def test_default_instance_trend(self, trainer):
        report = trainer.trend_study(ExperimentConfig())
        assert report.negative_spearman_count >= 8
        assert report.full_beats_gamma0_count >= 8


class TestConfigModels:
    def test_lambda_grid_sorted(self):
        assert TrainConfig(lambda_grid=[0.5, 0.0, 0.2]).lambda_grid == [0.0, 0.2, 0.5]

    def test_lambda_grid_range(self):
        with pytest.raises(InputValidationError):
            TrainConfig(lambda_grid=[0.0, 1.0])

    def test_with_seed(self):
        cfg = ExperimentConfig().with_seed(9)
        assert cfg.synth.seed == cfg.train.seed == 9
