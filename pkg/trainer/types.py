import dataclasses
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError

from distributions.types import GroupSpec
from losses.types import LossSpec
from ltdata.types import LTProfile
from metrics.types import MetricsReport, RankingComparison
from utils.enums import ErrorCode, LossFamily


def _setting(name: str, fallback):
    return lambda: getattr(settings, name, fallback)


def _check_metric_options(alpha: Optional[float], epsilon: Optional[float]):
    for name, value in (('alpha', alpha), ('epsilon', epsilon)):
        if value is not None and not value > 0:
            raise ValidationError(f"{name} must be positive, got {value}", code=ErrorCode.INVALID_PARAMETER)


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Linear softmax classifier: logits = features @ weights.T + bias"""

    weights: np.ndarray
    bias: np.ndarray
    loss_history: Tuple[float, ...] = ()

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        bias = np.array(self.bias, dtype=np.float64)
        if weights.ndim != 2 or bias.shape != (weights.shape[0],):
            raise ValidationError(
                f"Weights {weights.shape} and bias {bias.shape} do not form a C x d model",
                code=ErrorCode.DIMENSION_MISMATCH,
            )
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
            raise ValidationError("Model parameters must be finite", code=ErrorCode.DIVERGED)
        weights.setflags(write=False)
        bias.setflags(write=False)
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'bias', bias)
        object.__setattr__(self, 'loss_history', tuple(float(v) for v in self.loss_history))

    @property
    def num_classes(self) -> int:
        return int(self.weights.shape[0])

    @property
    def dim(self) -> int:
        return int(self.weights.shape[1])

    @classmethod
    def zeros(cls, num_classes: int, dim: int) -> "LinearModel":
        return cls(weights=np.zeros((num_classes, dim)), bias=np.zeros(num_classes))


@dataclass(frozen=True)
class TrainConfig:
    """
    Gradient-descent settings. batch_size None means full batch.
    """

    loss: LossSpec
    epochs: int = field(default_factory=_setting('TRAIN_EPOCHS', 1500))
    learning_rate: float = field(default_factory=_setting('TRAIN_LEARNING_RATE', 0.05))
    batch_size: Optional[int] = None
    seed: int = 0
    weight_decay: float = field(default_factory=_setting('TRAIN_WEIGHT_DECAY', 5e-4))

    def __post_init__(self):
        max_epochs = getattr(settings, 'TRAIN_MAX_EPOCHS', 100_000)
        if not 1 <= int(self.epochs) <= max_epochs:
            raise ValidationError(
                f"epochs must lie in [1, {max_epochs}], got {self.epochs}",
                code=ErrorCode.INVALID_PARAMETER,
            )
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive", code=ErrorCode.INVALID_PARAMETER)
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be >= 0", code=ErrorCode.INVALID_PARAMETER)
        if self.batch_size is not None and self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1", code=ErrorCode.INVALID_PARAMETER)
        if self.seed < 0:
            raise ValidationError("seed must be >= 0", code=ErrorCode.INVALID_PARAMETER)
        object.__setattr__(self, 'epochs', int(self.epochs))


@dataclass(frozen=True)
class LossTemplate:
    """
    A loss choice before the training counts are known. Bound to an
    LTProfile it yields the LossSpec of one experiment cell.
    """

    family: str
    name: Optional[str] = None
    beta: Optional[float] = None
    margin_scale: Optional[float] = None
    logit_scale: Optional[float] = None
    tau: float = 0.0
    learning_rate: Optional[float] = None

    def __post_init__(self):
        if self.family not in LossFamily.values:
            raise ValidationError(f"Unknown loss family '{self.family}'", code=ErrorCode.INVALID_PARAMETER)
        object.__setattr__(self, 'family', LossFamily(self.family))
        if self.learning_rate is not None and not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive", code=ErrorCode.INVALID_PARAMETER)

    def bind(self, profile: LTProfile) -> LossSpec:
        counts = profile.counts
        if self.family == LossFamily.CE:
            spec = LossSpec.ce(name=self.name)
        elif self.family == LossFamily.BCE:
            spec = LossSpec.bce(name=self.name)
        elif self.family == LossFamily.CB_CE:
            spec = LossSpec.cb_ce(counts, beta=self.beta, name=self.name)
        elif self.family == LossFamily.LDAM:
            spec = LossSpec.ldam(counts, self.margin_scale, self.logit_scale, name=self.name)
        else:
            spec = LossSpec.balanced_ce(class_counts=counts, name=self.name)
        if self.tau:
            spec = dataclasses.replace(spec, tau=self.tau)
        return spec

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        label = self.family.label
        if self.tau:
            label += f"+LA(tau={self.tau:g})"
        return label


@dataclass(frozen=True)
class ExperimentConfig:
    """One desk-scale comparison: every loss x imbalance factor x seed"""

    num_classes: int
    dim: int
    imbalance_factors: Tuple[float, ...]
    losses: Tuple[LossTemplate, ...]
    seeds: Tuple[int, ...]
    n_max: int = 500
    separation: float = 3.0
    noise_sigma: float = 1.0
    test_per_class: int = field(default_factory=_setting('BALANCED_TEST_PER_CLASS', 200))
    epochs: int = field(default_factory=_setting('TRAIN_EPOCHS', 1500))
    learning_rate: float = field(default_factory=_setting('TRAIN_LEARNING_RATE', 0.05))
    weight_decay: float = field(default_factory=_setting('TRAIN_WEIGHT_DECAY', 5e-4))
    batch_size: Optional[int] = None
    group_spec: GroupSpec = field(default_factory=GroupSpec.from_settings)
    alpha: Optional[float] = None
    epsilon: Optional[float] = None
    workers: int = field(default_factory=_setting('EXPERIMENT_WORKERS', 1))

    def __post_init__(self):
        object.__setattr__(self, 'imbalance_factors', tuple(float(f) for f in self.imbalance_factors))
        object.__setattr__(self, 'losses', tuple(self.losses))
        object.__setattr__(self, 'seeds', tuple(int(s) for s in self.seeds))
        if not (self.imbalance_factors and self.losses and self.seeds):
            raise ValidationError(
                "An experiment needs at least one imbalance factor, loss and seed",
                code=ErrorCode.INVALID_PARAMETER,
            )
        labels = [template.label for template in self.losses]
        if len(set(labels)) != len(labels):
            raise ValidationError("Loss labels must be unique; set 'name' to tell them apart",
                                  code=ErrorCode.INVALID_PARAMETER)
        if self.workers < 1 or self.test_per_class < 1:
            raise ValidationError("workers and test_per_class must be >= 1", code=ErrorCode.INVALID_PARAMETER)
        _check_metric_options(self.alpha, self.epsilon)


@dataclass(frozen=True)
class SimulationConfig:
    """Prior-shift simulation grid: confusability x imbalance factor x seed"""

    num_classes: int
    imbalance_factors: Tuple[float, ...]
    confusabilities: Tuple[float, ...]
    seeds: Tuple[int, ...]
    n_max: int = 500
    test_per_class: int = field(default_factory=_setting('BALANCED_TEST_PER_CLASS', 200))
    group_spec: GroupSpec = field(default_factory=GroupSpec.from_settings)
    alpha: Optional[float] = None
    epsilon: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, 'imbalance_factors', tuple(float(f) for f in self.imbalance_factors))
        object.__setattr__(self, 'confusabilities', tuple(float(k) for k in self.confusabilities))
        object.__setattr__(self, 'seeds', tuple(int(s) for s in self.seeds))
        if not (self.imbalance_factors and self.confusabilities and self.seeds):
            raise ValidationError(
                "A simulation needs at least one imbalance factor, confusability and seed",
                code=ErrorCode.INVALID_PARAMETER,
            )
        _check_metric_options(self.alpha, self.epsilon)

    @staticmethod
    def method_label(confusability: float) -> str:
        return f"kappa={confusability:g}"


@dataclass(frozen=True)
class ExperimentCell:
    """Outcome of one (method, imbalance factor, seed) run; report is None on failure"""

    method: str
    imbalance_factor: float
    seed: int
    report: Optional[MetricsReport] = None
    error: Optional[str] = None
    final_loss: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.report is not None


@dataclass(frozen=True)
class AggregateRow:
    """Mean and sample standard deviation over the seeds of one (method, IF)"""

    method: str
    imbalance_factor: float
    pdc_mean: float
    pdc_sd: float
    top1_mean: float
    top1_sd: float
    completed: int
    failed: int


@dataclass(frozen=True)
class ExperimentResult:
    cells: List[ExperimentCell]
    rows: List[AggregateRow]
    # sample variance of the mean PDC across imbalance factors; None with fewer than two
    pdc_variance: Dict[str, Optional[float]]
    rankings: Dict[float, RankingComparison] = field(default_factory=dict)

    def row(self, method: str, imbalance_factor: float) -> AggregateRow:
        for row in self.rows:
            if row.method == method and row.imbalance_factor == float(imbalance_factor):
                return row
        raise KeyError((method, imbalance_factor))

    @property
    def failures(self) -> List[ExperimentCell]:
        return [cell for cell in self.cells if not cell.ok]

    @property
    def methods(self) -> List[str]:
        return list(dict.fromkeys(row.method for row in self.rows))
