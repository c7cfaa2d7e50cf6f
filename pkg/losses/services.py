"""
Loss functions as maps from logits to (value, gradient w.r.t. logits).

Gradients are derived by hand; the test suite checks each one against
central finite differences. All arithmetic is float64 and every log goes
through the stabilized scipy.special forms (log_softmax, log_expit).
"""
import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError
from scipy.special import expit, log_expit, log_softmax, softmax

from distributions.types import ClassDistribution
from utils.enums import ErrorCode, LossFamily
from .types import LossOutput, LossSpec

logger = logging.getLogger(__name__)


def _as_logits(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.size < 2:
        raise ValidationError("Logits must be a flat sequence of at least two values", code=ErrorCode.DIMENSION_MISMATCH)
    if not np.all(np.isfinite(z)):
        raise ValidationError("Logits must be finite", code=ErrorCode.INVALID_PARAMETER)
    return z


def _check_label(label: int, num_classes: int) -> int:
    label = int(label)
    if not 0 <= label < num_classes:
        raise ValidationError(
            f"Label {label} outside [0, {num_classes})",
            code=ErrorCode.LABEL_OUT_OF_RANGE,
        )
    return label


def _positive_prior(prior: ClassDistribution, num_classes: int, role: str) -> np.ndarray:
    if prior.num_classes != num_classes:
        raise ValidationError(
            f"{role} covers {prior.num_classes} classes, logits {num_classes}",
            code=ErrorCode.DIMENSION_MISMATCH,
        )
    probabilities = prior.probabilities
    if np.any(probabilities <= 0):
        raise ValidationError(f"{role} has a zero entry", code=ErrorCode.INVALID_DISTRIBUTION)
    return probabilities


def _single(kernel, logits, label, *args) -> LossOutput:
    z = _as_logits(logits)
    label = _check_label(label, z.size)
    values, grad = kernel(z[None, :], np.array([label]), *args)
    return LossOutput(value=values[0], grad=grad[0])


class LossKernels:
    """
    Row-wise kernels on an (N, C) logit matrix and N labels.
    Each returns per-row loss values and the per-row gradient matrix.
    """

    @staticmethod
    def cross_entropy(z: np.ndarray, labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        rows = np.arange(z.shape[0])
        log_p = log_softmax(z, axis=1)
        grad = np.exp(log_p)
        grad[rows, labels] -= 1.0
        return -log_p[rows, labels], grad

    @staticmethod
    def binary_cross_entropy(z: np.ndarray, labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        targets = np.zeros_like(z)
        targets[np.arange(z.shape[0]), labels] = 1.0
        values = -(targets * log_expit(z) + (1.0 - targets) * log_expit(-z)).sum(axis=1)
        return values, expit(z) - targets

    @staticmethod
    def weighted_cross_entropy(z: np.ndarray, labels: np.ndarray, weights: np.ndarray):
        values, grad = LossKernels.cross_entropy(z, labels)
        row_weights = weights[labels]
        return values * row_weights, grad * row_weights[:, None]

    @staticmethod
    def ldam(z: np.ndarray, labels: np.ndarray, margins: np.ndarray, scale: float):
        shifted = z.copy()
        rows = np.arange(z.shape[0])
        shifted[rows, labels] -= margins[labels]
        values, grad = LossKernels.cross_entropy(scale * shifted, labels)
        return values, scale * grad

    @staticmethod
    def balanced_cross_entropy(z: np.ndarray, labels: np.ndarray, log_prior: np.ndarray):
        return LossKernels.cross_entropy(z + log_prior, labels)


class LossService:
    """
    Compared loss families and post-hoc logit adjustment
    """

    @staticmethod
    def softmax(logits: Sequence[float]) -> ClassDistribution:
        """Softmax with max-subtraction; strictly positive up to float underflow"""
        z = _as_logits(logits)
        probabilities = softmax(z)
        return ClassDistribution.from_probabilities(probabilities / probabilities.sum())

    @staticmethod
    def ce_loss(logits, true_label: int) -> LossOutput:
        """-ln softmax(z)[y]; grad softmax(z) - onehot(y)"""
        return _single(LossKernels.cross_entropy, logits, true_label)

    @staticmethod
    def bce_loss(logits, true_label: int) -> LossOutput:
        """One-vs-all sigmoid loss; grad sigmoid(z) - onehot(y)"""
        return _single(LossKernels.binary_cross_entropy, logits, true_label)

    @staticmethod
    def cb_weights(train_counts: Sequence[int], beta: float, rescale: bool = True) -> np.ndarray:
        """
        Effective-number weights (1 - beta) / (1 - beta^n_y), rescaled to sum to C
        """
        if not 0 <= beta < 1:
            raise ValidationError(f"beta must lie in [0, 1), got {beta}", code=ErrorCode.INVALID_PARAMETER)
        counts = np.asarray(train_counts, dtype=np.float64)
        if counts.ndim != 1 or np.any(counts < 1):
            raise ValidationError("Class counts must be >= 1", code=ErrorCode.INVALID_PARAMETER)
        weights = (1.0 - beta) / (1.0 - np.power(beta, counts))
        if rescale:
            weights = weights / weights.sum() * counts.size
        return weights

    @staticmethod
    def cb_ce_loss(logits, true_label: int, weights: Sequence[float]) -> LossOutput:
        weights = np.asarray(weights, dtype=np.float64)
        z = _as_logits(logits)
        if weights.shape != z.shape:
            raise ValidationError("One weight per class is required", code=ErrorCode.DIMENSION_MISMATCH)
        return _single(LossKernels.weighted_cross_entropy, z, true_label, weights)

    @staticmethod
    def ldam_margins(train_counts: Sequence[int], margin_scale: Optional[float] = None) -> np.ndarray:
        """
        Per-class margin margin_scale / n_y^(1/4). Without a margin_scale the
        rarest class gets LDAM_MAX_MARGIN.
        """
        counts = np.asarray(train_counts, dtype=np.float64)
        if counts.size == 0 or np.any(counts < 1):
            raise ValidationError("Class counts must be >= 1", code=ErrorCode.INVALID_PARAMETER)
        if margin_scale is None:
            margin_scale = getattr(settings, 'LDAM_MAX_MARGIN', 0.5) * counts.min() ** 0.25
        if margin_scale < 0:
            raise ValidationError("margin_scale must be >= 0", code=ErrorCode.INVALID_PARAMETER)
        return margin_scale / np.power(counts, 0.25)

    @staticmethod
    def ldam_loss(logits, true_label: int, train_counts: Sequence[int],
                  margin_scale: float, s: float) -> LossOutput:
        """CE on s * (z - margin at the true class)"""
        z = _as_logits(logits)
        if len(train_counts) != z.size:
            raise ValidationError("One count per class is required", code=ErrorCode.DIMENSION_MISMATCH)
        if s <= 0:
            raise ValidationError("Logit scale must be positive", code=ErrorCode.INVALID_PARAMETER)
        margins = LossService.ldam_margins(train_counts, margin_scale)
        return _single(LossKernels.ldam, z, true_label, margins, float(s))

    @staticmethod
    def balanced_ce_loss(logits, true_label: int, prior: ClassDistribution) -> LossOutput:
        """CE on z + ln prior (training-time logit adjustment)"""
        z = _as_logits(logits)
        log_prior = np.log(_positive_prior(prior, z.size, "Prior"))
        return _single(LossKernels.balanced_cross_entropy, z, true_label, log_prior)

    @staticmethod
    def logit_adjust_inference(logits, train_prior: ClassDistribution,
                               target_prior: ClassDistribution, tau: float) -> np.ndarray:
        """
        z - tau * (ln P_s - ln P_t). Accepts one logit vector or an (N, C) matrix.
        """
        if tau < 0:
            raise ValidationError("tau must be >= 0", code=ErrorCode.INVALID_PARAMETER)
        z = np.asarray(logits, dtype=np.float64)
        num_classes = z.shape[-1]
        shift = np.log(_positive_prior(train_prior, num_classes, "Train prior")) \
            - np.log(_positive_prior(target_prior, num_classes, "Target prior"))
        return z - tau * shift

    @staticmethod
    def kernel_for(spec: LossSpec, num_classes: int):
        """Bind a LossSpec to its row-wise kernel"""
        if spec.class_counts is not None and len(spec.class_counts) != num_classes:
            raise ValidationError(
                f"{spec.label} has {len(spec.class_counts)} class counts for {num_classes} classes",
                code=ErrorCode.DIMENSION_MISMATCH,
            )
        if spec.family == LossFamily.CE:
            return LossKernels.cross_entropy
        if spec.family == LossFamily.BCE:
            return LossKernels.binary_cross_entropy
        if spec.family == LossFamily.CB_CE:
            weights = LossService.cb_weights(spec.class_counts, spec.beta)
            return lambda z, labels: LossKernels.weighted_cross_entropy(z, labels, weights)
        if spec.family == LossFamily.LDAM:
            margins = LossService.ldam_margins(spec.class_counts, spec.margin_scale)
            return lambda z, labels: LossKernels.ldam(z, labels, margins, spec.logit_scale)
        log_prior = np.log(_positive_prior(spec.prior, num_classes, "Prior"))
        return lambda z, labels: LossKernels.balanced_cross_entropy(z, labels, log_prior)

    @staticmethod
    def evaluate(spec: LossSpec, logits, true_label: int) -> LossOutput:
        z = _as_logits(logits)
        return _single(LossService.kernel_for(spec, z.size), z, true_label)

    @staticmethod
    def evaluate_batch(spec: LossSpec, logits: np.ndarray, labels: np.ndarray,
                       kernel=None) -> Tuple[float, np.ndarray]:
        """
        Mean loss over the rows and the gradient of that mean w.r.t. each logit row.
        Pass a kernel from kernel_for to skip rebinding the spec on every batch.
        """
        z = np.asarray(logits, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if z.ndim != 2 or labels.shape != (z.shape[0],):
            raise ValidationError("Batch logits must be (N, C) with N labels", code=ErrorCode.DIMENSION_MISMATCH)
        kernel = kernel or LossService.kernel_for(spec, z.shape[1])
        values, grad = kernel(z, labels)
        count = z.shape[0]
        return float(values.mean()), grad / count
