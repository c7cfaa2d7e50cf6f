"""
Desk-scale training and the loss-comparison experiment.

A single training run is a plain sequential loop; reproducibility depends on
the update order. Experiment cells are independent and may run on a thread
pool.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from django.core.exceptions import ValidationError

from distributions.services import DistributionService
from distributions.types import ClassDistribution, PredictionRecord
from losses.services import LossService
from ltdata.services import PriorShiftService, ProfileService, SyntheticDataService
from ltdata.types import LTProfile, SyntheticDataset
from metrics.services import MetricsService
from metrics.types import MethodScore, RankingComparison
from utils.enums import ErrorCode
from .types import (
    AggregateRow,
    ExperimentCell,
    ExperimentConfig,
    ExperimentResult,
    LinearModel,
    LossTemplate,
    SimulationConfig,
    TrainConfig,
)

logger = logging.getLogger(__name__)


def _error_message(exc: Exception) -> str:
    if isinstance(exc, ValidationError):
        return "; ".join(exc.messages)
    return str(exc)


class TrainingService:

    @staticmethod
    def train(data: SyntheticDataset, cfg: TrainConfig) -> LinearModel:
        """
        Gradient descent from zero weights on mean loss + (weight_decay / 2) * ||W||^2.
        Minibatches, when requested, follow a per-epoch permutation drawn from
        default_rng(cfg.seed).
        """
        features = data.features
        labels = data.labels
        num_samples, dim = features.shape
        num_classes = data.num_classes
        if num_samples == 0:
            raise ValidationError("Cannot train on an empty dataset", code=ErrorCode.EMPTY_DISTRIBUTION)

        kernel = LossService.kernel_for(cfg.loss, num_classes)
        rng = np.random.default_rng(cfg.seed)
        batch_size = cfg.batch_size or num_samples
        full_batch = batch_size >= num_samples

        weights = np.zeros((num_classes, dim))
        bias = np.zeros(num_classes)
        history = []

        started = time.time()
        with np.errstate(over='raise', invalid='raise'):
            for epoch in range(1, cfg.epochs + 1):
                order = np.arange(num_samples) if full_batch else rng.permutation(num_samples)
                epoch_loss = 0.0
                for start in range(0, num_samples, batch_size):
                    batch = order[start:start + batch_size]
                    x = features[batch]
                    try:
                        mean_loss, grad = LossService.evaluate_batch(
                            cfg.loss, x @ weights.T + bias, labels[batch], kernel=kernel,
                        )
                        loss = mean_loss + 0.5 * cfg.weight_decay * np.sum(weights * weights)
                        weights_grad = grad.T @ x + cfg.weight_decay * weights
                        bias_grad = grad.sum(axis=0)
                    except FloatingPointError as exc:
                        TrainingService._diverged(cfg, epoch, str(exc))
                    if not np.isfinite(loss):
                        TrainingService._diverged(cfg, epoch, "non-finite loss")
                    weights -= cfg.learning_rate * weights_grad
                    bias -= cfg.learning_rate * bias_grad
                    epoch_loss += loss * batch.size
                history.append(epoch_loss / num_samples)

        logger.info(
            f"Trained {cfg.loss.label} on N={num_samples} C={num_classes} d={dim}: "
            f"{cfg.epochs} epochs, final loss {history[-1]:.6f}, {time.time() - started:.2f}s"
        )
        return LinearModel(weights=weights, bias=bias, loss_history=history)

    @staticmethod
    def _diverged(cfg: TrainConfig, epoch: int, reason: str):
        logger.error(f"{cfg.loss.label} diverged at epoch {epoch} (lr={cfg.learning_rate}): {reason}")
        raise ValidationError(
            f"Training diverged at epoch {epoch}: {reason}",
            code=ErrorCode.DIVERGED,
            params={'epoch': epoch},
        )

    @staticmethod
    def predict_logits(model: LinearModel, features) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != model.dim:
            raise ValidationError(
                f"Features of shape {features.shape} do not match a model of dimension {model.dim}",
                code=ErrorCode.DIMENSION_MISMATCH,
            )
        return features @ model.weights.T + model.bias

    @staticmethod
    def records_from_logits(logits: np.ndarray, labels, prefix: str = "test") -> List[PredictionRecord]:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (logits.shape[0],):
            raise ValidationError(
                f"{logits.shape[0]} logit rows for {labels.size} labels",
                code=ErrorCode.DIMENSION_MISMATCH,
            )
        if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
            raise ValidationError(
                f"Test labels must lie in [0, {logits.shape[1]})",
                code=ErrorCode.LABEL_OUT_OF_RANGE,
            )
        return [
            PredictionRecord(sample_id=f"{prefix}-{i}", true_label=int(label), predicted=tuple(row))
            for i, (label, row) in enumerate(zip(labels, logits.tolist()))
        ]

    @staticmethod
    def evaluate(model: LinearModel, test_features, test_labels) -> List[PredictionRecord]:
        """One record per test sample, full logits retained"""
        logits = TrainingService.predict_logits(model, test_features)
        return TrainingService.records_from_logits(logits, test_labels)


class ExperimentService:
    """
    Loss comparison on synthetic long-tailed data, evaluated on balanced test sets
    """

    @staticmethod
    def _datasets(config: ExperimentConfig) -> Dict[Tuple[float, int], Tuple[SyntheticDataset, SyntheticDataset]]:
        datasets = {}
        for imbalance_factor in config.imbalance_factors:
            profile = ProfileService.exp_profile(config.num_classes, config.n_max, imbalance_factor)
            for seed in config.seeds:
                train = SyntheticDataService.synth_gaussian_mixture(
                    config.num_classes, config.dim, config.separation, profile,
                    config.noise_sigma, seed, stream=0,
                )
                test = SyntheticDataService.balanced_test_set(train, config.test_per_class, stream=1)
                datasets[(imbalance_factor, seed)] = (train, test)
        return datasets

    @staticmethod
    def run_cell(config: ExperimentConfig, template: LossTemplate, imbalance_factor: float,
                 seed: int, train: SyntheticDataset, test: SyntheticDataset) -> ExperimentCell:
        """
        Train and evaluate one (loss, IF, seed) cell. Training failures are
        recorded on the cell instead of raised.
        """
        try:
            spec = template.bind(train.profile)
            cfg = TrainConfig(
                loss=spec,
                epochs=config.epochs,
                learning_rate=template.learning_rate or config.learning_rate,
                batch_size=config.batch_size,
                seed=seed,
                weight_decay=config.weight_decay,
            )
            model = TrainingService.train(train, cfg)
            logits = TrainingService.predict_logits(model, test.features)
            train_prior = train.profile.prior()
            if spec.tau > 0:
                logits = LossService.logit_adjust_inference(
                    logits, train_prior, ClassDistribution.uniform(train.num_classes), spec.tau
                )
            records = TrainingService.records_from_logits(logits, test.labels)
            cm = DistributionService.confusion_from_log(records, train.num_classes)
            report = MetricsService.build_report(
                cm,
                train.profile.as_distribution(),
                group_spec=config.group_spec,
                alpha=config.alpha,
                epsilon=config.epsilon,
            )
        except (ValidationError, FloatingPointError) as exc:
            message = _error_message(exc)
            logger.error(f"Cell {template.label} IF={imbalance_factor:g} seed={seed} failed: {message}")
            return ExperimentCell(template.label, imbalance_factor, seed, error=message)

        logger.info(
            f"Cell {template.label} IF={imbalance_factor:g} seed={seed}: "
            f"top1={report.top1_acc:.4f} pdc={report.pdc:.4f}"
        )
        return ExperimentCell(
            template.label, imbalance_factor, seed,
            report=report, final_loss=model.loss_history[-1],
        )

    @staticmethod
    def run_experiment(config: ExperimentConfig) -> ExperimentResult:
        """
        Train every loss on every (IF, seed) long-tailed split and aggregate
        mean and standard deviation over seeds, the PDC variance across the
        IF sweep and a per-IF ranking of the losses.
        """
        logger.info(
            f"Experiment: C={config.num_classes} d={config.dim} IF={list(config.imbalance_factors)} "
            f"losses={[t.label for t in config.losses]} seeds={list(config.seeds)} workers={config.workers}"
        )
        started = time.time()
        datasets = ExperimentService._datasets(config)
        tasks = [
            (template, imbalance_factor, seed)
            for imbalance_factor in config.imbalance_factors
            for template in config.losses
            for seed in config.seeds
        ]

        def run(task):
            template, imbalance_factor, seed = task
            train, test = datasets[(imbalance_factor, seed)]
            return ExperimentService.run_cell(config, template, imbalance_factor, seed, train, test)

        if config.workers > 1:
            cells: List[Optional[ExperimentCell]] = [None] * len(tasks)
            with ThreadPoolExecutor(max_workers=config.workers) as executor:
                futures = {executor.submit(run, task): index for index, task in enumerate(tasks)}
                for future in as_completed(futures):
                    cells[futures[future]] = future.result()
        else:
            cells = [run(task) for task in tasks]

        result = ExperimentService.aggregate(
            cells, [t.label for t in config.losses], config.imbalance_factors
        )
        logger.info(
            f"Experiment finished: {len(cells)} cells, {len(result.failures)} failed, "
            f"{time.time() - started:.2f}s"
        )
        return result

    @staticmethod
    def run_simulation(config: SimulationConfig) -> ExperimentResult:
        """Prior-shift simulator over confusability x IF x seed, aggregated like an experiment"""
        cells = []
        methods = [SimulationConfig.method_label(k) for k in config.confusabilities]
        for imbalance_factor in config.imbalance_factors:
            profile = ProfileService.exp_profile(config.num_classes, config.n_max, imbalance_factor)
            for confusability, method in zip(config.confusabilities, methods):
                for seed in config.seeds:
                    cells.append(ExperimentService._simulate_cell(
                        config, profile, confusability, method, seed
                    ))
        return ExperimentService.aggregate(cells, methods, config.imbalance_factors)

    @staticmethod
    def _simulate_cell(config: SimulationConfig, profile: LTProfile, confusability: float,
                       method: str, seed: int) -> ExperimentCell:
        try:
            log = PriorShiftService.simulate_biased_log(
                confusability, profile.prior(), config.test_per_class, seed
            )
            cm = DistributionService.confusion_from_log(log, profile.num_classes)
            report = MetricsService.build_report(
                cm,
                profile.as_distribution(),
                group_spec=config.group_spec,
                alpha=config.alpha,
                epsilon=config.epsilon,
            )
        except ValidationError as exc:
            message = _error_message(exc)
            logger.error(f"Simulation {method} IF={profile.imbalance_factor:g} seed={seed} failed: {message}")
            return ExperimentCell(method, profile.imbalance_factor, seed, error=message)
        return ExperimentCell(method, profile.imbalance_factor, seed, report=report)

    @staticmethod
    def aggregate(cells: Sequence[ExperimentCell], methods: Sequence[str],
                  imbalance_factors: Sequence[float]) -> ExperimentResult:
        rows = []
        for imbalance_factor in imbalance_factors:
            for method in methods:
                group = [c for c in cells if c.method == method and c.imbalance_factor == imbalance_factor]
                done = [c.report for c in group if c.ok]
                pdc = np.array([r.pdc for r in done])
                top1 = np.array([r.top1_acc for r in done])
                rows.append(AggregateRow(
                    method=method,
                    imbalance_factor=float(imbalance_factor),
                    pdc_mean=ExperimentService._mean(pdc),
                    pdc_sd=ExperimentService._sd(pdc),
                    top1_mean=ExperimentService._mean(top1),
                    top1_sd=ExperimentService._sd(top1),
                    completed=len(done),
                    failed=len(group) - len(done),
                ))

        pdc_variance = {}
        for method in methods:
            means = [row.pdc_mean for row in rows if row.method == method]
            if len(means) >= 2 and np.all(np.isfinite(means)):
                pdc_variance[method] = MetricsService.pdc_variance(means)
            else:
                pdc_variance[method] = None

        rankings: Dict[float, RankingComparison] = {}
        for imbalance_factor in imbalance_factors:
            scores = [
                MethodScore(name=row.method, accuracy=row.top1_mean, pdc=row.pdc_mean)
                for row in rows
                if row.imbalance_factor == imbalance_factor and row.completed
            ]
            if len(scores) >= 2:
                rankings[float(imbalance_factor)] = MetricsService.rank_methods(scores)

        return ExperimentResult(cells=list(cells), rows=rows, pdc_variance=pdc_variance, rankings=rankings)

    @staticmethod
    def _mean(values: np.ndarray) -> float:
        return float(values.mean()) if values.size else float('nan')

    @staticmethod
    def _sd(values: np.ndarray) -> float:
        if values.size >= 2:
            return float(values.std(ddof=1))
        return 0.0 if values.size else float('nan')
