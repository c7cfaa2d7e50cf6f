"""
Value types shared by every app: class distributions, prediction records,
confusion matrices and the Many/Medium/Few grouping.

All types are immutable after construction. Array fields are copied and
flagged read-only, so instances can be shared freely between threads.
"""
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError

from utils.enums import ClassGroup, ErrorCode

NORMALIZATION_TOLERANCE = 1e-12


def _frozen_array(values, dtype) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ClassDistribution:
    """Nonnegative mass over C classes, either raw counts or probabilities"""

    mass: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        try:
            mass = _frozen_array(self.mass, np.float64)
        except (TypeError, ValueError) as exc:
            raise ValidationError(
                f"Class distribution is not numeric: {exc}",
                code=ErrorCode.INVALID_DISTRIBUTION,
            ) from exc

        if mass.ndim != 1 or mass.size < 2:
            raise ValidationError(
                "A class distribution needs a flat sequence of at least two classes",
                code=ErrorCode.INVALID_DISTRIBUTION,
                params={'shape': mass.shape},
            )
        if not np.all(np.isfinite(mass)):
            raise ValidationError("Class distribution has non-finite mass", code=ErrorCode.INVALID_DISTRIBUTION)
        if np.any(mass < 0):
            raise ValidationError("Class distribution has negative mass", code=ErrorCode.INVALID_DISTRIBUTION)
        if self.normalized and abs(mass.sum() - 1.0) > NORMALIZATION_TOLERANCE:
            raise ValidationError(
                f"Normalized distribution sums to {mass.sum()!r}, not 1",
                code=ErrorCode.INVALID_DISTRIBUTION,
            )

        object.__setattr__(self, 'mass', mass)

    @classmethod
    def from_counts(cls, counts: Sequence[float]) -> "ClassDistribution":
        return cls(mass=counts, normalized=False)

    @classmethod
    def from_probabilities(cls, probabilities: Sequence[float]) -> "ClassDistribution":
        return cls(mass=probabilities, normalized=True)

    @classmethod
    def uniform(cls, num_classes: int) -> "ClassDistribution":
        return cls(mass=np.full(num_classes, 1.0 / num_classes), normalized=True)

    @property
    def num_classes(self) -> int:
        return int(self.mass.size)

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    @property
    def probabilities(self) -> np.ndarray:
        """Mass rescaled to sum to one (no copy when already normalized)"""
        if self.normalized:
            return self.mass
        total = self.total
        if total <= 0:
            raise ValidationError("empty distribution", code=ErrorCode.EMPTY_DISTRIBUTION)
        return self.mass / total

    def __len__(self) -> int:
        return self.num_classes

    def __repr__(self) -> str:
        kind = "probabilities" if self.normalized else "counts"
        return f"ClassDistribution({kind}={self.mass.tolist()})"


@dataclass(frozen=True)
class PredictionRecord:
    """One evaluated sample: its true class and a predicted class or logits"""

    sample_id: str
    true_label: int
    predicted: Union[int, Tuple[float, ...]]

    def __post_init__(self):
        object.__setattr__(self, 'sample_id', str(self.sample_id))
        object.__setattr__(self, 'true_label', int(self.true_label))
        if isinstance(self.predicted, (int, np.integer)):
            object.__setattr__(self, 'predicted', int(self.predicted))
        else:
            object.__setattr__(self, 'predicted', tuple(float(z) for z in self.predicted))

    @property
    def has_logits(self) -> bool:
        return isinstance(self.predicted, tuple)

    @property
    def logits(self) -> Optional[np.ndarray]:
        if not self.has_logits:
            return None
        return np.asarray(self.predicted, dtype=np.float64)

    @property
    def predicted_label(self) -> int:
        # np.argmax returns the first maximum, so ties go to the lowest index
        if self.has_logits:
            return int(np.argmax(self.predicted))
        return self.predicted


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """C x C count table; rows are ground truth, columns are predictions"""

    counts: np.ndarray

    def __post_init__(self):
        counts = _frozen_array(self.counts, np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1] or counts.shape[0] < 2:
            raise ValidationError(
                "Confusion matrix must be square with at least two classes",
                code=ErrorCode.DIMENSION_MISMATCH,
                params={'shape': counts.shape},
            )
        if np.any(counts < 0):
            raise ValidationError("Confusion matrix has negative counts", code=ErrorCode.INVALID_DISTRIBUTION)
        object.__setattr__(self, 'counts', counts)

    @classmethod
    def zeros(cls, num_classes: int) -> "ConfusionMatrix":
        return cls(counts=np.zeros((num_classes, num_classes), dtype=np.int64))

    @property
    def num_classes(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def column_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def correct(self) -> np.ndarray:
        return np.diag(self.counts)

    @property
    def is_empty(self) -> bool:
        return self.total == 0

    def to_list(self):
        return self.counts.tolist()


@dataclass(frozen=True)
class GroupSpec:
    """
    Many / Medium / Few partition by training count:
    Many when count > many_min, Few when count < few_max, Medium otherwise.
    """

    many_min: int = 100
    few_max: int = 20

    def __post_init__(self):
        if not (int(self.many_min) > int(self.few_max) >= 1):
            raise ValidationError(
                f"Group thresholds need many_min > few_max >= 1 (got {self.many_min}, {self.few_max})",
                code=ErrorCode.INVALID_PARAMETER,
            )
        object.__setattr__(self, 'many_min', int(self.many_min))
        object.__setattr__(self, 'few_max', int(self.few_max))

    @classmethod
    def from_settings(cls) -> "GroupSpec":
        return cls(
            many_min=getattr(settings, 'GROUP_MANY_MIN', 100),
            few_max=getattr(settings, 'GROUP_FEW_MAX', 20),
        )

    @classmethod
    def from_ranks(cls, train_counts: ClassDistribution) -> "GroupSpec":
        """
        Thresholds taken from the sorted class counts at 34% and 67% of the
        class list, the usual choice for CIFAR-sized class sets.
        """
        ordered = np.sort(train_counts.mass)[::-1]
        num_classes = ordered.size
        return cls(
            many_min=int(ordered[int(0.34 * num_classes)]),
            few_max=int(ordered[int(0.67 * num_classes)]),
        )

    def group_of(self, count: float) -> str:
        if count > self.many_min:
            return ClassGroup.MANY
        if count < self.few_max:
            return ClassGroup.FEW
        return ClassGroup.MEDIUM

    def assign(self, train_counts: ClassDistribution) -> Tuple[str, ...]:
        return tuple(self.group_of(count) for count in train_counts.mass)

    def members(self, train_counts: ClassDistribution) -> Dict[str, np.ndarray]:
        labels = np.array(self.assign(train_counts))
        return {
            group: np.flatnonzero(labels == group.value)
            for group in (ClassGroup.MANY, ClassGroup.MEDIUM, ClassGroup.FEW)
        }
