from dataclasses import dataclass
from typing import Tuple

import numpy as np
from django.core.exceptions import ValidationError

from distributions.types import ClassDistribution
from utils.enums import ErrorCode


@dataclass(frozen=True)
class LTProfile:
    """Per-class training counts of a long-tailed split, head class first"""

    num_classes: int
    n_max: int
    imbalance_factor: float
    counts: Tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(n) for n in self.counts)
        object.__setattr__(self, 'counts', counts)
        if len(counts) != self.num_classes or self.num_classes < 2:
            raise ValidationError(
                f"Profile lists {len(counts)} counts for {self.num_classes} classes",
                code=ErrorCode.INVALID_PARAMETER,
            )
        if min(counts) < 1:
            raise ValidationError("tail class would be empty", code=ErrorCode.INFEASIBLE_PROFILE)
        if any(a < b for a, b in zip(counts, counts[1:])):
            raise ValidationError("Profile counts must be nonincreasing", code=ErrorCode.INVALID_PARAMETER)

    @property
    def realized_imbalance_factor(self) -> float:
        return self.counts[0] / self.counts[-1]

    @property
    def total(self) -> int:
        return sum(self.counts)

    def as_distribution(self) -> ClassDistribution:
        return ClassDistribution.from_counts(self.counts)

    def prior(self) -> ClassDistribution:
        counts = np.asarray(self.counts, dtype=np.float64)
        return ClassDistribution.from_probabilities(counts / counts.sum())

    @classmethod
    def flat(cls, num_classes: int, per_class: int) -> "LTProfile":
        return cls(
            num_classes=num_classes,
            n_max=per_class,
            imbalance_factor=1.0,
            counts=(per_class,) * num_classes,
        )


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    """Gaussian-mixture samples; rows of features line up with labels"""

    features: np.ndarray
    labels: np.ndarray
    class_means: np.ndarray
    noise_sigma: float
    seed: int
    profile: LTProfile

    def __post_init__(self):
        for name, dtype in (('features', np.float64), ('labels', np.int64), ('class_means', np.float64)):
            array = np.array(getattr(self, name), dtype=dtype)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValidationError("Features and labels differ in length", code=ErrorCode.DIMENSION_MISMATCH)
        if not np.all(np.isfinite(self.features)):
            raise ValidationError("Synthetic features are not finite", code=ErrorCode.INVALID_PARAMETER)

    @property
    def num_samples(self) -> int:
        return int(self.labels.size)

    @property
    def num_classes(self) -> int:
        return int(self.class_means.shape[0])

    @property
    def dim(self) -> int:
        return int(self.class_means.shape[1])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)
