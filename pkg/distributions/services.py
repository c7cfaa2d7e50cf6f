import logging
from typing import Iterable, Sequence

import numpy as np
from django.core.exceptions import ValidationError

from .types import ClassDistribution, ConfusionMatrix, PredictionRecord
from utils.enums import ErrorCode

logger = logging.getLogger(__name__)


class DistributionService:
    """
    Conversions between prediction logs, confusion matrices and class distributions.
    Every method is a pure function of its inputs.
    """

    @staticmethod
    def normalize(counts: ClassDistribution) -> ClassDistribution:
        """Rescale nonnegative mass into a probability distribution"""
        if counts.total <= 0:
            raise ValidationError("empty distribution", code=ErrorCode.EMPTY_DISTRIBUTION)
        return ClassDistribution.from_probabilities(counts.mass / counts.total)

    @staticmethod
    def confusion_from_labels(true_labels: Sequence[int], predicted_labels: Sequence[int],
                              num_classes: int) -> ConfusionMatrix:
        """
        Vectorized tally of (true, predicted) index pairs.
        Callers are responsible for range checks.
        """
        true_labels = np.asarray(true_labels, dtype=np.int64)
        predicted_labels = np.asarray(predicted_labels, dtype=np.int64)
        if true_labels.shape != predicted_labels.shape:
            raise ValidationError(
                "True and predicted label arrays differ in length",
                code=ErrorCode.DIMENSION_MISMATCH,
            )
        flat = np.bincount(true_labels * num_classes + predicted_labels, minlength=num_classes * num_classes)
        return ConfusionMatrix(counts=flat.reshape(num_classes, num_classes))

    @staticmethod
    def confusion_from_log(log: Iterable[PredictionRecord], num_classes: int) -> ConfusionMatrix:
        """
        Build the confusion matrix of a prediction log.
        Logit records are reduced by argmax, ties resolving to the lowest index.
        """
        if num_classes < 2:
            raise ValidationError("A confusion matrix needs at least two classes", code=ErrorCode.INVALID_PARAMETER)

        true_labels = []
        predicted_labels = []
        for record in log:
            if not 0 <= record.true_label < num_classes:
                raise ValidationError(
                    f"Sample {record.sample_id}: true label {record.true_label} outside [0, {num_classes})",
                    code=ErrorCode.LABEL_OUT_OF_RANGE,
                    params={'sample_id': record.sample_id},
                )
            if record.has_logits and len(record.predicted) != num_classes:
                raise ValidationError(
                    f"Sample {record.sample_id}: {len(record.predicted)} logits for {num_classes} classes",
                    code=ErrorCode.LABEL_OUT_OF_RANGE,
                    params={'sample_id': record.sample_id},
                )
            predicted = record.predicted_label
            if not 0 <= predicted < num_classes:
                raise ValidationError(
                    f"Sample {record.sample_id}: predicted label {predicted} outside [0, {num_classes})",
                    code=ErrorCode.LABEL_OUT_OF_RANGE,
                    params={'sample_id': record.sample_id},
                )
            true_labels.append(record.true_label)
            predicted_labels.append(predicted)

        return DistributionService.confusion_from_labels(true_labels, predicted_labels, num_classes)

    @staticmethod
    def predicted_marginal(cm: ConfusionMatrix) -> ClassDistribution:
        """Column sums, normalized: the predictive distribution over classes"""
        if cm.is_empty:
            raise ValidationError("empty distribution", code=ErrorCode.EMPTY_DISTRIBUTION)
        return DistributionService.normalize(ClassDistribution.from_counts(cm.column_sums))

    @staticmethod
    def true_marginal(cm: ConfusionMatrix) -> ClassDistribution:
        """Row sums, normalized: the label distribution of the evaluated sample"""
        if cm.is_empty:
            raise ValidationError("empty distribution", code=ErrorCode.EMPTY_DISTRIBUTION)
        return DistributionService.normalize(ClassDistribution.from_counts(cm.row_sums))
