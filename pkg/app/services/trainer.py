"""
Two-Stage FairDG Trainer.

Stage 1 fits the domain and group encoders with throw-away linear heads
on the source domains and freezes them.  Stage 2 trains the encoder and
classifier on the weighted objective, either once per λ or once with λ
as an encoder input.  Sweeps evaluate every λ on the validation and
target domains and feed the trade-off fronts.

Seeding: every random stream is ``default_rng([seed, stream])`` so that
all λ runs of a sweep share the same initialization and batch order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from app.errors import DegenerateBatchError, DegeneratePartitionError, InputValidationError
from app.models.batch_models import EvalBatch, FairnessReport, PartitionLabels, SampleBatch
from app.models.enums import FairnessMetric, InvarianceSource, SweepMode
from app.models.experiment_models import (
    AblationEntry,
    AblationReport,
    EpochRecord,
    ExperimentConfig,
    GammaScore,
    GammaTuning,
    SourceCountEntry,
    Stage1Result,
    Stage2Result,
    SweepRecord,
    SweepResult,
    SyntheticData,
    TrainConfig,
    TrendReport,
    TrendSeed,
)
from app.models.nn_models import EncoderStack, MLPParams, ObjectiveConfig
from app.models.pareto_models import FrontBounds, FrontConfig, TradeoffPoint
from app.services.base_service import BaseService
from app.services.dependence import dcor_given_y_d
from app.services.fairness import argmax_predictions, fairness_report
from app.services.nn import (
    backward,
    backward_mlp,
    bounded_cross_entropy,
    effective_cap,
    encode,
    forward_mlp,
    init_mlp,
    objective_value,
    predict_logits,
)
from app.services.pareto import front_report
from app.services.synthetic import generate_synthetic
from app.utils.audit import log_run_event
from app.utils.general import config_hash

__all__ = ["TrainerService", "stratified_batches", "stratified_sample"]

# Stage-1 heads use the bounded loss with a cap high enough to act as plain CE.
_STAGE1_CAP: float = 30.0

# Rows of the validation domain used for the validation objective and penalty.
_VALIDATION_ROWS: int = 512

# Fronts of raw metrics in [0, 1] are compared on fixed unit bounds.
UNIT_BOUNDS = FrontBounds(v_min=0.0, v_max=1.0, u_min=0.0, u_max=1.0)

# Random stream ids.
_STREAM_STAGE1, _STREAM_INIT, _STREAM_BATCHES, _STREAM_VALIDATION = 1, 2, 3, 4


def stratified_batches(
    batch: SampleBatch, batch_size: int, rng: np.random.Generator
) -> list[NDArray[np.int64]]:
    """Row indices of minibatches stratified by (y, d).

    Every (y, d) cell is shuffled and split evenly across the batches.
    The number of batches is capped so each cell gives every batch at
    least two rows.
    """
    cells = PartitionLabels(y=batch.y, d=batch.d).cells()
    smallest = min(cell.size for cell in cells)
    n_batches = max(1, min(batch.n // batch_size, smallest // 2))
    chunks = [np.array_split(rng.permutation(cell), n_batches) for cell in cells]
    batches = [np.concatenate([parts[i] for parts in chunks]) for i in range(n_batches)]
    return [batches[i] for i in rng.permutation(n_batches)]


def stratified_sample(
    batch: SampleBatch, size: int, rng: np.random.Generator
) -> NDArray[np.int64]:
    """One replacement minibatch with at least two rows from every (y, d) cell that has two."""
    cells = [cell for cell in PartitionLabels(y=batch.y, d=batch.d).cells() if cell.size >= 2]
    if not cells:
        raise DegenerateBatchError("no (y, d) cell of the source has two rows.")
    share = max(2, size // len(cells))
    picks = [rng.choice(cell, size=min(share, cell.size), replace=False) for cell in cells]
    return np.concatenate(picks)


def _shuffled_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[NDArray[np.int64]]:
    return np.array_split(rng.permutation(n), max(1, n // batch_size))


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


class TrainerService(BaseService):
    """Stage-1/stage-2 training, λ sweeps and the experiment studies built on them."""

    # ------------------------------------------------------------------
    # Evaluation
    # ------------------------------------------------------------------

    @staticmethod
    def evaluate(stack: EncoderStack, batch: SampleBatch, n_labels: int, n_groups: int, lam: float = 0.0) -> FairnessReport:
        """Argmax predictions of *stack* scored by the fairness module."""
        predictions = argmax_predictions(predict_logits(stack, batch.x, lam))
        return fairness_report(
            EvalBatch(
                y_true=batch.y, y_pred=predictions, g=batch.g, n_labels=n_labels, n_groups=n_groups
            )
        )

    def evaluate_target(
        self, stack: EncoderStack, data: SyntheticData, lam: float = 0.0
    ) -> tuple[float, float, float]:
        """(accuracy, eod, eo) on the target domain."""
        report = self.evaluate(stack, data.target, data.n_labels, data.n_groups, lam)
        return report.accuracy, report.eod, report.eo

    # ------------------------------------------------------------------
    # Stage 1
    # ------------------------------------------------------------------

    def _init_stage2_networks(self, data: SyntheticData, cfg: TrainConfig) -> EncoderStack:
        rng = _rng(cfg.seed, _STREAM_INIT)
        feature_dim = data.source.x.shape[1]
        conditioned = cfg.mode == SweepMode.LOSS_CONDITIONAL
        encoder = init_mlp(
            [feature_dim + (1 if conditioned else 0), *cfg.encoder_hidden, cfg.z_e_dim],
            cfg.activation,
            rng,
        )
        classifier = init_mlp([cfg.z_e_dim, data.n_labels], cfg.activation, rng)
        return EncoderStack(encoder=encoder, classifier=classifier, lambda_conditioned=conditioned)

    def _train_head(
        self,
        x: NDArray[np.float64],
        labels: NDArray[np.int64],
        n_classes: int,
        z_dim: int,
        cfg: TrainConfig,
        rng: np.random.Generator,
        name: str,
    ) -> tuple[MLPParams, float, bool]:
        encoder = init_mlp([x.shape[1], *cfg.encoder_hidden, z_dim], cfg.activation, rng)
        head = init_mlp([z_dim, n_classes], cfg.activation, rng)
        accuracy = 0.0
        for epoch in range(1, cfg.stage1_epochs + 1):
            for rows in _shuffled_batches(x.shape[0], cfg.batch_size, rng):
                z, enc_trace = forward_mlp(encoder, x[rows])
                logits, head_trace = forward_mlp(head, z)
                _, d_logits = bounded_cross_entropy(logits, labels[rows], _STAGE1_CAP)
                head_grads, dz = backward_mlp(head, head_trace, d_logits / rows.size)
                enc_grads, _ = backward_mlp(encoder, enc_trace, dz)
                encoder = encoder.sgd_step(enc_grads, cfg.learning_rate)
                head = head.sgd_step(head_grads, cfg.learning_rate)
            logits = forward_mlp(head, forward_mlp(encoder, x)[0])[0]
            accuracy = float(np.mean(argmax_predictions(logits) == labels))
            if accuracy >= cfg.stage1_target_accuracy:
                self._logger.info(
                    "Stage 1 %s encoder converged", name, extra={"epoch": epoch, "accuracy": accuracy}
                )
                return encoder, accuracy, True
        self._logger.warning(
            "Stage 1 %s encoder stopped at %.4f training accuracy (target %.2f) after %d epochs",
            name,
            accuracy,
            cfg.stage1_target_accuracy,
            cfg.stage1_epochs,
        )
        return encoder, accuracy, False

    def stage1_train(self, data: SyntheticData, cfg: TrainConfig) -> Stage1Result:
        """Fit and freeze θ_D and θ_G; also draws the stage-2 initialization.

        Skipped when the invariance terms use one-hot labels.
        """
        stack = self._init_stage2_networks(data, cfg)
        if cfg.invariance_source == InvarianceSource.ONE_HOT:
            self._logger.info("Stage 1 skipped: invariance terms use one-hot labels")
            return Stage1Result(stack=stack)

        source = data.source
        rng = _rng(cfg.seed, _STREAM_STAGE1)
        domain_encoder, domain_acc, domain_ok = self._train_head(
            source.x, source.d, data.n_source_domains, cfg.z_d_dim, cfg, rng, "domain"
        )
        group_encoder, group_acc, group_ok = self._train_head(
            source.x, source.g, data.n_groups, cfg.z_g_dim, cfg, rng, "group"
        )
        frozen = stack.model_copy(
            update={"domain_encoder": domain_encoder, "group_encoder": group_encoder}
        ).frozen_stage1()
        return Stage1Result(
            stack=frozen,
            domain_accuracy=domain_acc,
            group_accuracy=group_acc,
            domain_converged=domain_ok,
            group_converged=group_ok,
        )

    # ------------------------------------------------------------------
    # Stage 2
    # ------------------------------------------------------------------

    @staticmethod
    def _objective_cfg(cfg: TrainConfig, lam: float, gamma: float) -> ObjectiveConfig:
        return ObjectiveConfig(
            lam=lam,
            gamma=gamma,
            cap=cfg.cap,
            smoothing_eps=cfg.smoothing_eps,
            invariance_source=cfg.invariance_source,
        )

    def _validation_rows(self, data: SyntheticData, cfg: TrainConfig) -> SampleBatch:
        batch = data.validation
        rows = _rng(cfg.seed, _STREAM_VALIDATION).permutation(batch.n)[:_VALIDATION_ROWS]
        return batch.take(np.sort(rows))

    def _epoch_record(
        self,
        stack: EncoderStack,
        data: SyntheticData,
        validation: SampleBatch,
        cfg: TrainConfig,
        lam: float,
        gamma: float,
        epoch: int,
        objectives: list[float],
    ) -> EpochRecord:
        report = self.evaluate(stack, data.validation, data.n_labels, data.n_groups, lam)
        try:
            val_objective: Optional[float] = objective_value(
                stack, validation, self._objective_cfg(cfg, lam, gamma)
            ).total
        except DegenerateBatchError:
            val_objective = None
        return EpochRecord(
            epoch=epoch,
            objective=float(np.mean(objectives)) if objectives else math.nan,
            val_accuracy=report.accuracy,
            val_eod=report.eod,
            val_eo=report.eo,
            val_objective=val_objective,
        )

    def _fit(
        self,
        data: SyntheticData,
        stage1: Stage1Result,
        cfg: TrainConfig,
        gamma: float,
        lam: Optional[float],
        grid: Sequence[float],
    ) -> Stage2Result:
        rng = _rng(cfg.seed, _STREAM_BATCHES)
        stack = stage1.stack
        source = data.source
        validation = self._validation_rows(data, cfg)
        eval_lam = lam if lam is not None else float(np.median(grid))
        run_id = config_hash(cfg.model_dump(mode="json"))

        cap = effective_cap(cfg.cap, data.n_labels)
        if cap != cfg.cap:
            log_run_event(
                self._logger,
                "RAISE_CAP",
                "cap",
                run_id,
                {"requested": cfg.cap, "effective": cap, "n_labels": data.n_labels},
            )

        curve: list[EpochRecord] = []
        best_stack, best_epoch, best_value = stack, 0, math.inf
        for epoch in range(1, cfg.stage2_epochs + 1):
            objectives: list[float] = []
            for rows in stratified_batches(source, cfg.batch_size, rng):
                step_lam = lam if lam is not None else float(rng.choice(grid))
                objective_cfg = self._objective_cfg(cfg, step_lam, gamma)
                try:
                    breakdown, grads = backward(stack, source.take(rows), objective_cfg)
                except DegenerateBatchError as exc:
                    self._logger.warning(
                        "Resampling degenerate minibatch",
                        extra={"epoch": epoch, "rows": int(rows.size), "reason": str(exc)},
                    )
                    rows = stratified_sample(source, rows.size, rng)
                    breakdown, grads = backward(stack, source.take(rows), objective_cfg)
                stack = stack.model_copy(
                    update={
                        "encoder": stack.encoder.sgd_step(grads.encoder, cfg.learning_rate),
                        "classifier": stack.classifier.sgd_step(grads.classifier, cfg.learning_rate),
                    }
                )
                objectives.append(breakdown.total)
            record = self._epoch_record(
                stack, data, validation, cfg, eval_lam, gamma, epoch, objectives
            )
            curve.append(record)
            self._logger.debug("Stage 2 epoch", extra=record.model_dump())
            if record.val_objective is not None and record.val_objective < best_value:
                best_stack, best_epoch, best_value = stack, epoch, record.val_objective

        if cfg.best_epoch_selection and best_epoch > 0:
            return Stage2Result(stack=best_stack, lam=lam, gamma=gamma, best_epoch=best_epoch, curve=curve)
        return Stage2Result(
            stack=stack, lam=lam, gamma=gamma, best_epoch=cfg.stage2_epochs, curve=curve
        )

    def stage2_train(
        self, data: SyntheticData, stage1: Stage1Result, cfg: TrainConfig, lam: float, gamma: float
    ) -> Stage2Result:
        """SGD on the objective at a fixed λ over the source domains."""
        if not 0.0 <= lam < 1.0:
            raise InputValidationError(f"lambda must lie in [0, 1), got {lam}.")
        return self._fit(data, stage1, cfg, gamma, lam, [lam])

    def train_loss_conditional(
        self,
        data: SyntheticData,
        stage1: Stage1Result,
        cfg: TrainConfig,
        gamma: float,
        grid: Optional[Sequence[float]] = None,
    ) -> Stage2Result:
        """One λ-conditioned model; λ is drawn uniformly from the grid per minibatch."""
        if not stage1.stack.lambda_conditioned:
            raise InputValidationError("loss-conditional training needs a λ-conditioned encoder.")
        return self._fit(data, stage1, cfg, gamma, None, list(grid or cfg.lambda_grid))

    # ------------------------------------------------------------------
    # Sweeps
    # ------------------------------------------------------------------

    def _fairness_penalty(self, stack: EncoderStack, batch: SampleBatch, lam: float) -> Optional[float]:
        z_e = encode(stack, batch.x, lam)
        if stack.group_encoder is not None:
            reference = forward_mlp(stack.group_encoder, batch.x)[0]
        else:
            reference = np.eye(int(batch.g.max()) + 1)[batch.g]
        try:
            return dcor_given_y_d(reference, z_e, PartitionLabels(y=batch.y, d=batch.d))
        except DegeneratePartitionError:
            return None

    def _records(
        self,
        models: list[tuple[float, EncoderStack]],
        data: SyntheticData,
        validation: SampleBatch,
    ) -> tuple[list[SweepRecord], list[SweepRecord]]:
        target, held_out = [], []
        for lam, stack in models:
            t = self.evaluate(stack, data.target, data.n_labels, data.n_groups, lam)
            v = self.evaluate(stack, data.validation, data.n_labels, data.n_groups, lam)
            target.append(SweepRecord(lam=lam, accuracy=t.accuracy, eod=t.eod, eo=t.eo))
            held_out.append(
                SweepRecord(
                    lam=lam,
                    accuracy=v.accuracy,
                    eod=v.eod,
                    eo=v.eo,
                    fairness_penalty=self._fairness_penalty(stack, validation, lam),
                )
            )
        return target, held_out

    def _sweep(
        self,
        data: SyntheticData,
        stage1: Stage1Result,
        cfg: TrainConfig,
        gamma: float,
        grid: Sequence[float],
    ) -> SweepResult:
        if cfg.mode == SweepMode.PER_LAMBDA:
            with ThreadPoolExecutor(max_workers=self._config.FAIRDG_THREADS) as pool:
                runs = list(
                    pool.map(lambda lam: self.stage2_train(data, stage1, cfg, lam, gamma), grid)
                )
            models = [(lam, run.stack) for lam, run in zip(grid, runs)]
        else:
            trained = self.train_loss_conditional(data, stage1, cfg, gamma, grid)
            models = [(lam, trained.stack) for lam in grid]
        target, held_out = self._records(models, data, self._validation_rows(data, cfg))
        self._logger.info(
            "Sweep finished", extra={"mode": str(cfg.mode), "gamma": gamma, "points": len(grid)}
        )
        return SweepResult(mode=cfg.mode, gamma=gamma, target=target, validation=held_out)

    def sweep(
        self, data: SyntheticData, stage1: Stage1Result, cfg: TrainConfig, gamma: float
    ) -> SweepResult:
        """(V, U, λ) for every λ of the grid on the target and validation domains."""
        return self._sweep(data, stage1, cfg, gamma, cfg.lambda_grid)

    # ------------------------------------------------------------------
    # Model selection and studies
    # ------------------------------------------------------------------

    @staticmethod
    def front_hvi(
        points: list[TradeoffPoint],
        front: Optional[FrontConfig] = None,
        metric: FairnessMetric = FairnessMetric.EOD,
    ) -> float:
        """HVI percent of a raw-metric solution set on unit bounds."""
        return front_report(points, front or FrontConfig(), UNIT_BOUNDS, metric).hvi_percent

    def tune_gamma(
        self,
        data: SyntheticData,
        stage1: Stage1Result,
        cfg: TrainConfig,
        front: Optional[FrontConfig] = None,
    ) -> GammaTuning:
        """γ from the grid with the best validation-domain HVI; ties go to the smaller γ."""
        scores: list[GammaScore] = []
        for gamma in sorted(cfg.gamma_grid):
            result = self.sweep(data, stage1, cfg, gamma)
            score = self.front_hvi(result.points(FairnessMetric.EOD, "validation"), front)
            scores.append(GammaScore(gamma=gamma, validation_hvi=score))
        best = scores[0]
        for score in scores[1:]:
            if score.validation_hvi > best.validation_hvi:
                best = score
        log_run_event(
            self._logger,
            "SELECT_GAMMA",
            "gamma",
            config_hash(cfg.model_dump(mode="json")),
            {"gamma": best.gamma, "validation_hvi": best.validation_hvi},
        )
        return GammaTuning(best_gamma=best.gamma, scores=scores)

    def resolve_gamma(
        self,
        data: SyntheticData,
        stage1: Stage1Result,
        cfg: TrainConfig,
        front: Optional[FrontConfig] = None,
    ) -> float:
        """The configured γ, or the tuned one when none is configured."""
        if cfg.gamma is not None:
            return cfg.gamma
        return self.tune_gamma(data, stage1, cfg, front).best_gamma

    def _ablation_entry(
        self, name: str, result: SweepResult, front: FrontConfig
    ) -> AblationEntry:
        eod_report = front_report(
            result.points(FairnessMetric.EOD), front, UNIT_BOUNDS, FairnessMetric.EOD
        )
        eo_report = front_report(
            result.points(FairnessMetric.EO), front, UNIT_BOUNDS, FairnessMetric.EO
        )
        chosen = next(r for r in result.target if r.lam == eod_report.selected.lam)
        return AblationEntry(
            name=name,
            gamma=result.gamma,
            hvi_eod=eod_report.hvi_percent,
            hvi_eo=eo_report.hvi_percent,
            selected_lambda=chosen.lam,
            selected_accuracy=chosen.accuracy,
            selected_eod=chosen.eod,
            selected_eo=chosen.eo,
        )

    def run_ablation(self, data: SyntheticData, cfg: ExperimentConfig) -> AblationReport:
        """ERM, ERM+SDI, ERM+Fair, PAFDG and PAFDG-S on the same data."""
        train = cfg.train
        stage1 = self.stage1_train(data, train)
        gamma = self.resolve_gamma(data, stage1, train, cfg.front)
        one_hot = train.model_copy(update={"invariance_source": InvarianceSource.ONE_HOT})
        stage1_one_hot = self.stage1_train(data, one_hot)

        variants = [
            ("ERM", stage1, train, 0.0, [0.0]),
            ("ERM+SDI", stage1, train, gamma, [0.0]),
            ("ERM+Fair", stage1, train, 0.0, train.lambda_grid),
            ("PAFDG", stage1, train, gamma, train.lambda_grid),
            ("PAFDG-S", stage1_one_hot, one_hot, gamma, train.lambda_grid),
        ]
        entries = []
        for name, s1, t_cfg, g, grid in variants:
            result = self._sweep(data, s1, t_cfg, g, grid)
            entries.append(self._ablation_entry(name, result, cfg.front))
            self._logger.info("Ablation variant finished", extra={"variant": name, "gamma": g})
        return AblationReport(entries=entries)

    def source_count_study(
        self, cfg: ExperimentConfig, counts: Optional[Sequence[int]] = None
    ) -> list[SourceCountEntry]:
        """Front HVI when training on the first k source domains, validation and target fixed."""
        counts = sorted(counts or cfg.source_counts)
        if counts[0] < 2:
            raise InputValidationError("at least two source domains are required.")
        full = generate_synthetic(cfg.synth.model_copy(update={"n_source_domains": counts[-1]}))
        entries = []
        for count in counts:
            data = SyntheticData(
                domains=[*full.domains[:count], full.validation, full.target],
                n_labels=full.n_labels,
                n_groups=full.n_groups,
                n_source_domains=count,
            )
            stage1 = self.stage1_train(data, cfg.train)
            gamma = self.resolve_gamma(data, stage1, cfg.train, cfg.front)
            result = self.sweep(data, stage1, cfg.train, gamma)
            entries.append(
                SourceCountEntry(
                    n_sources=count,
                    hvi_eod=self.front_hvi(result.points(FairnessMetric.EOD), cfg.front),
                    hvi_eo=self.front_hvi(
                        result.points(FairnessMetric.EO), cfg.front, FairnessMetric.EO
                    ),
                )
            )
        return entries

    def trend_study(
        self, cfg: ExperimentConfig, seeds: Optional[Sequence[int]] = None
    ) -> TrendReport:
        """Per seed: Spearman(λ, target EOD) and full-objective vs γ = 0 front HVI."""
        rows = []
        for seed in seeds if seeds is not None else cfg.seeds:
            experiment = cfg.with_seed(seed)
            data = generate_synthetic(experiment.synth)
            stage1 = self.stage1_train(data, experiment.train)
            gamma = self.resolve_gamma(data, stage1, experiment.train, cfg.front)
            full = self.sweep(data, stage1, experiment.train, gamma)
            fairness_only = self.sweep(data, stage1, experiment.train, 0.0)
            lams = [r.lam for r in full.target]
            eods = [r.eod for r in full.target]
            rho = float(stats.spearmanr(lams, eods).statistic)
            rows.append(
                TrendSeed(
                    seed=seed,
                    spearman_lambda_eod=0.0 if math.isnan(rho) else rho,
                    hvi_full=self.front_hvi(full.points(FairnessMetric.EOD), cfg.front),
                    hvi_gamma0=self.front_hvi(fairness_only.points(FairnessMetric.EOD), cfg.front),
                )
            )
            self._logger.info("Trend seed finished", extra=rows[-1].model_dump())
        return TrendReport(
            seeds=rows,
            negative_spearman_count=sum(r.spearman_lambda_eod < 0 for r in rows),
            full_beats_gamma0_count=sum(r.hvi_full > r.hvi_gamma0 for r in rows),
        )
