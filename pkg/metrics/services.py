"""
Predictive-bias metrics: KL divergence, PDC, the accuracy family and
group accuracy.

KL uses the natural logarithm. A constant prefactor in front of the KL sum
(some write it with 1/C) cancels in the PDC ratio, so the plain KL is used.
"""
import itertools
import logging
from typing import Iterable, List, Optional, Sequence

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError
from scipy import stats
from scipy.special import rel_entr

from distributions.services import DistributionService
from distributions.types import ClassDistribution, ConfusionMatrix, GroupSpec, PredictionRecord
from utils.enums import ClassGroup, ErrorCode, GroupAccuracyMode
from .types import (
    AccTrapPair,
    GroupAccuracy,
    GroupShare,
    MethodRanking,
    MethodScore,
    MetricsReport,
    RankingComparison,
)

logger = logging.getLogger(__name__)

GROUP_ORDER = (ClassGroup.MANY, ClassGroup.MEDIUM, ClassGroup.FEW)


def default_epsilon() -> float:
    return getattr(settings, 'PDC_EPSILON', 1e-6)


def default_alpha() -> float:
    return getattr(settings, 'PDC_SMOOTHING_ALPHA', 0.5)


class MetricsService:
    """
    Quantitative core of the toolkit. Pure functions over immutable inputs.
    """

    @staticmethod
    def kl_divergence(p: ClassDistribution, q: ClassDistribution) -> float:
        """
        D(p, q) = sum_i p_i (ln p_i - ln q_i); terms with p_i = 0 contribute 0.
        """
        if p.num_classes != q.num_classes:
            raise ValidationError(
                f"KL over {p.num_classes} and {q.num_classes} classes",
                code=ErrorCode.DIMENSION_MISMATCH,
            )
        p_prob = p.probabilities
        q_prob = q.probabilities
        if np.any((p_prob > 0) & (q_prob == 0)):
            raise ValidationError(
                "absolute continuity violated",
                code=ErrorCode.ABSOLUTE_CONTINUITY,
                params={'classes': np.flatnonzero((p_prob > 0) & (q_prob == 0)).tolist()},
            )
        # rounding can leave -1e-17 for near-identical inputs
        return max(float(np.sum(rel_entr(p_prob, q_prob))), 0.0)

    @staticmethod
    def pdc_terms(train_counts: ClassDistribution, predicted: ClassDistribution,
                  target: ClassDistribution, epsilon: Optional[float] = None):
        """
        Return (D(P_t, P_hat_t), D(P_t, P_s), PDC). All three inputs may be raw
        counts or probabilities; they are normalized first.
        """
        epsilon = default_epsilon() if epsilon is None else epsilon
        if not epsilon > 0:
            raise ValidationError(f"epsilon must be positive, got {epsilon}", code=ErrorCode.INVALID_PARAMETER)
        sizes = {train_counts.num_classes, predicted.num_classes, target.num_classes}
        if len(sizes) != 1:
            raise ValidationError(
                f"PDC inputs disagree on the class count: {sorted(sizes)}",
                code=ErrorCode.DIMENSION_MISMATCH,
            )
        if train_counts.total <= 0:
            raise ValidationError("empty distribution", code=ErrorCode.EMPTY_DISTRIBUTION)

        uncovered = (target.mass == 0) & ((train_counts.mass > 0) | (predicted.mass > 0))
        if np.any(uncovered):
            raise ValidationError(
                f"Target distribution is zero on classes {np.flatnonzero(uncovered).tolist()} "
                f"that the training or predicted distribution covers",
                code=ErrorCode.INCONSISTENT_INPUT,
            )

        kl_pred_target = MetricsService.kl_divergence(target, predicted)
        kl_train_target = MetricsService.kl_divergence(target, train_counts)
        return kl_pred_target, kl_train_target, kl_pred_target / (kl_train_target + epsilon)

    @staticmethod
    def pdc(train_counts: ClassDistribution, predicted: ClassDistribution,
            target: ClassDistribution, epsilon: Optional[float] = None) -> float:
        """
        Predictive distribution calibration: D(P_t, P_hat_t) / (D(P_t, P_s) + epsilon).
        Lower is better; 0 means the prediction counts match the target exactly.
        """
        return MetricsService.pdc_terms(train_counts, predicted, target, epsilon)[2]

    @staticmethod
    def smooth_predictions(raw_counts: Sequence[int], alpha: Optional[float] = None) -> ClassDistribution:
        """Additive smoothing (count_i + alpha) / (N + C * alpha); applied to predictions only"""
        alpha = default_alpha() if alpha is None else alpha
        if not alpha > 0:
            raise ValidationError(
                f"Smoothing alpha must be positive, got {alpha}",
                code=ErrorCode.INVALID_PARAMETER,
            )
        counts = ClassDistribution.from_counts(raw_counts)
        if counts.total <= 0:
            raise ValidationError("empty distribution", code=ErrorCode.EMPTY_DISTRIBUTION)
        smoothed = counts.mass + alpha
        return ClassDistribution.from_probabilities(smoothed / smoothed.sum())

    @staticmethod
    def top1_accuracy(cm: ConfusionMatrix) -> float:
        if cm.is_empty:
            raise ValidationError("empty distribution", code=ErrorCode.EMPTY_DISTRIBUTION)
        return float(cm.correct.sum() / cm.total)

    @staticmethod
    def per_class_recall(cm: ConfusionMatrix) -> np.ndarray:
        """Recall of each class; NaN for classes absent from the test sample"""
        rows = cm.row_sums.astype(np.float64)
        recall = np.full(cm.num_classes, np.nan)
        present = rows > 0
        recall[present] = cm.correct[present] / rows[present]
        return recall

    @staticmethod
    def group_accuracy(cm: ConfusionMatrix, train_counts: ClassDistribution, spec: GroupSpec,
                       mode: str = GroupAccuracyMode.STANDARD,
                       log: Optional[Iterable[PredictionRecord]] = None) -> GroupAccuracy:
        """
        Accuracy over samples whose true class belongs to each group.

        STANDARD takes the argmax over every class. RESTRICTED takes the argmax
        over the group's own classes only and therefore needs a logit log.
        """
        if cm.num_classes != train_counts.num_classes:
            raise ValidationError(
                f"Confusion matrix has {cm.num_classes} classes, train counts {train_counts.num_classes}",
                code=ErrorCode.DIMENSION_MISMATCH,
            )
        members = spec.members(train_counts)
        rows = cm.row_sums

        if mode == GroupAccuracyMode.RESTRICTED:
            correct_by_group = MetricsService._restricted_correct(log, members, cm.num_classes)
        else:
            correct_by_group = {group: int(cm.correct[idx].sum()) for group, idx in members.items()}

        values = []
        for group in GROUP_ORDER:
            denominator = int(rows[members[group]].sum())
            values.append(correct_by_group[group] / denominator if denominator else float('nan'))

        if all(np.isnan(values)):
            raise ValidationError("Every class group is empty", code=ErrorCode.EMPTY_DISTRIBUTION)
        return GroupAccuracy(*values)

    @staticmethod
    def _restricted_correct(log, members, num_classes):
        if log is None:
            raise ValidationError(
                "Restricted group accuracy needs the prediction log",
                code=ErrorCode.INVALID_PARAMETER,
            )
        records = [record for record in log]
        if not all(record.has_logits for record in records):
            raise ValidationError(
                "Restricted group accuracy needs logits for every record",
                code=ErrorCode.INVALID_PARAMETER,
            )
        if not records:
            return {group: 0 for group in members}

        logits = np.array([record.predicted for record in records], dtype=np.float64)
        labels = np.array([record.true_label for record in records], dtype=np.int64)
        if logits.shape[1] != num_classes:
            raise ValidationError("Logit width does not match the class count", code=ErrorCode.DIMENSION_MISMATCH)

        correct = {}
        for group, idx in members.items():
            in_group = np.isin(labels, idx)
            if not idx.size or not in_group.any():
                correct[group] = 0
                continue
            winners = idx[np.argmax(logits[in_group][:, idx], axis=1)]
            correct[group] = int(np.sum(winners == labels[in_group]))
        return correct

    @staticmethod
    def group_prediction_share(cm: ConfusionMatrix, train_counts: ClassDistribution,
                               spec: GroupSpec) -> GroupShare:
        """Share of ground truth and of predictions that land in Many / Medium / Few"""
        if cm.is_empty:
            raise ValidationError("empty distribution", code=ErrorCode.EMPTY_DISTRIBUTION)
        members = spec.members(train_counts)
        total = cm.total
        true_share = {g.value: float(cm.row_sums[members[g]].sum() / total) for g in GROUP_ORDER}
        predicted_share = {g.value: float(cm.column_sums[members[g]].sum() / total) for g in GROUP_ORDER}
        return GroupShare(true_share=true_share, predicted_share=predicted_share)

    @staticmethod
    def pdc_variance(pdcs: Sequence[float]) -> float:
        """Sample variance (divisor n - 1) of PDC values across imbalance factors"""
        values = np.asarray(list(pdcs), dtype=np.float64)
        if values.size < 2:
            raise ValidationError(
                "PDC variance needs at least two values",
                code=ErrorCode.INVALID_PARAMETER,
            )
        return float(np.var(values, ddof=1))

    @staticmethod
    def acc_trap_pairs(cm: ConfusionMatrix, recall_tolerance: float = 0.05,
                       count_ratio: float = 2.0) -> List[AccTrapPair]:
        """
        Class pairs with on-par recall whose prediction counts differ by at
        least count_ratio. Sorted by descending count ratio.
        """
        recall = MetricsService.per_class_recall(cm)
        predictions = cm.column_sums
        pairs = []
        for i, j in itertools.combinations(range(cm.num_classes), 2):
            if np.isnan(recall[i]) or np.isnan(recall[j]):
                continue
            if abs(recall[i] - recall[j]) > recall_tolerance:
                continue
            head, tail = (i, j) if predictions[i] >= predictions[j] else (j, i)
            if predictions[head] == 0 or predictions[head] < count_ratio * predictions[tail]:
                continue
            pairs.append(AccTrapPair(
                head_class=head,
                tail_class=tail,
                head_recall=float(recall[head]),
                tail_recall=float(recall[tail]),
                head_predictions=int(predictions[head]),
                tail_predictions=int(predictions[tail]),
            ))
        pairs.sort(key=lambda pair: (-pair.count_ratio, pair.head_class, pair.tail_class))
        return pairs

    @staticmethod
    def rank_methods(rows: Sequence[MethodScore]) -> RankingComparison:
        """
        Rank methods by accuracy (higher first) and by PDC (lower first) and
        report where the two orders disagree.
        """
        rows = list(rows)
        if len(rows) < 2:
            raise ValidationError("Ranking needs at least two methods", code=ErrorCode.INVALID_PARAMETER)

        accuracy = np.array([row.accuracy for row in rows], dtype=np.float64)
        pdc = np.array([row.pdc for row in rows], dtype=np.float64)
        accuracy_rank = stats.rankdata(-accuracy, method='min').astype(int)
        pdc_rank = stats.rankdata(pdc, method='min').astype(int)
        tau = stats.kendalltau(accuracy, -pdc)[0]

        discordant = []
        for a, b in itertools.permutations(range(len(rows)), 2):
            if accuracy[a] > accuracy[b] and pdc[a] > pdc[b]:
                discordant.append((rows[a].name, rows[b].name))

        rankings = [
            MethodRanking(name=row.name, accuracy_rank=int(accuracy_rank[k]), pdc_rank=int(pdc_rank[k]))
            for k, row in enumerate(rows)
        ]
        return RankingComparison(rankings=rankings, kendall_tau=float(tau), discordant_pairs=discordant)

    @staticmethod
    def build_report(cm: ConfusionMatrix, train_counts: ClassDistribution,
                     group_spec: Optional[GroupSpec] = None, alpha: Optional[float] = None,
                     epsilon: Optional[float] = None, target: Optional[ClassDistribution] = None,
                     mode: str = GroupAccuracyMode.STANDARD,
                     log: Optional[Iterable[PredictionRecord]] = None) -> MetricsReport:
        """
        Every metric of one evaluation. The target distribution defaults to the
        label distribution of the evaluated sample.
        """
        alpha = default_alpha() if alpha is None else alpha
        epsilon = default_epsilon() if epsilon is None else epsilon
        group_spec = group_spec or GroupSpec.from_settings()

        if cm.num_classes != train_counts.num_classes:
            raise ValidationError(
                f"Prediction log covers {cm.num_classes} classes, train counts {train_counts.num_classes}",
                code=ErrorCode.INCONSISTENT_INPUT,
            )

        if target is None:
            target = DistributionService.true_marginal(cm)
        predicted_counts = cm.column_sums
        smoothed = MetricsService.smooth_predictions(predicted_counts, alpha)
        kl_pred, kl_train, pdc = MetricsService.pdc_terms(train_counts, smoothed, target, epsilon)

        report = MetricsReport(
            top1_acc=MetricsService.top1_accuracy(cm),
            group_acc=MetricsService.group_accuracy(cm, train_counts, group_spec, mode, log),
            per_class_recall=tuple(float(r) for r in MetricsService.per_class_recall(cm)),
            kl_pred_target=kl_pred,
            kl_train_target=kl_train,
            pdc=pdc,
            predicted_counts=tuple(int(c) for c in predicted_counts),
            test_counts=tuple(int(c) for c in cm.row_sums),
            smoothing_alpha=float(alpha),
            epsilon=float(epsilon),
            group_share=MetricsService.group_prediction_share(cm, train_counts, group_spec),
        )
        logger.info(f"Report built: C={cm.num_classes} N={cm.total} top1={report.top1_acc:.4f} pdc={pdc:.4f}")
        return report
