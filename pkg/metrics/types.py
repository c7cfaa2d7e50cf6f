from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple


@dataclass(frozen=True)
class GroupAccuracy:
    """Accuracy per training-frequency group; NaN marks an empty group"""

    many: float
    medium: float
    few: float

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.many, self.medium, self.few)


@dataclass(frozen=True)
class GroupShare:
    """Fraction of ground truth and of predictions landing in each group"""

    true_share: Dict[str, float]
    predicted_share: Dict[str, float]


@dataclass(frozen=True)
class AccTrapPair:
    head_class: int
    tail_class: int
    head_recall: float
    tail_recall: float
    head_predictions: int
    tail_predictions: int

    @property
    def count_ratio(self) -> float:
        return self.head_predictions / max(self.tail_predictions, 1)


@dataclass(frozen=True)
class MetricsReport:
    """All metrics of one evaluation run"""

    top1_acc: float
    group_acc: GroupAccuracy
    per_class_recall: Tuple[float, ...]
    kl_pred_target: float
    kl_train_target: float
    pdc: float
    predicted_counts: Tuple[int, ...]
    test_counts: Tuple[int, ...]
    smoothing_alpha: float
    epsilon: float
    group_share: Optional[GroupShare] = None

    @property
    def num_classes(self) -> int:
        return len(self.predicted_counts)

    @property
    def num_samples(self) -> int:
        return int(sum(self.test_counts))


@dataclass(frozen=True)
class MethodScore:
    """One row of a method comparison: accuracy and PDC of a named method"""

    name: str
    accuracy: float
    pdc: float


@dataclass(frozen=True)
class MethodRanking:
    name: str
    accuracy_rank: int
    pdc_rank: int


@dataclass(frozen=True)
class RankingComparison:
    rankings: List[MethodRanking]
    kendall_tau: float
    # (better accuracy, better PDC) pairs where the two metrics disagree
    discordant_pairs: List[Tuple[str, str]] = field(default_factory=list)

    def is_concordant(self) -> bool:
        return not self.discordant_pairs
