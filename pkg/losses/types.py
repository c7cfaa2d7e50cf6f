from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError

from distributions.types import ClassDistribution
from utils.enums import ErrorCode, LossFamily


@dataclass(frozen=True, eq=False)
class LossOutput:
    """Loss value and its gradient with respect to the logits"""

    value: float
    grad: np.ndarray

    def __post_init__(self):
        grad = np.array(self.grad, dtype=np.float64)
        grad.setflags(write=False)
        object.__setattr__(self, 'grad', grad)
        object.__setattr__(self, 'value', float(self.value))


@dataclass(frozen=True, eq=False)
class LossSpec:
    """
    Loss family plus the hyperparameters it needs.

    class_counts feeds CB weights and LDAM margins; prior feeds BalCE;
    tau > 0 requests post-hoc logit adjustment at inference.
    """

    family: str
    beta: Optional[float] = None
    margin_scale: Optional[float] = None
    logit_scale: Optional[float] = None
    prior: Optional[ClassDistribution] = None
    tau: float = 0.0
    class_counts: Optional[Tuple[int, ...]] = None
    name: Optional[str] = None

    def __post_init__(self):
        if self.family not in LossFamily.values:
            raise ValidationError(f"Unknown loss family '{self.family}'", code=ErrorCode.INVALID_PARAMETER)
        object.__setattr__(self, 'family', LossFamily(self.family))
        if self.class_counts is not None:
            object.__setattr__(self, 'class_counts', tuple(int(n) for n in self.class_counts))
        if self.tau is None or self.tau < 0:
            raise ValidationError("tau must be >= 0", code=ErrorCode.INVALID_PARAMETER)

        missing = [name for name in self.required_fields() if getattr(self, name) is None]
        if missing:
            raise ValidationError(
                f"{self.family.label} needs {', '.join(missing)}",
                code=ErrorCode.INVALID_PARAMETER,
                params={'missing': missing},
            )
        if self.family == LossFamily.CB_CE and not 0 <= self.beta < 1:
            raise ValidationError(f"beta must lie in [0, 1), got {self.beta}", code=ErrorCode.INVALID_PARAMETER)
        if self.family == LossFamily.LDAM and (self.margin_scale < 0 or self.logit_scale <= 0):
            raise ValidationError("LDAM needs margin_scale >= 0 and logit_scale > 0", code=ErrorCode.INVALID_PARAMETER)
        if self.class_counts is not None and min(self.class_counts) < 1:
            raise ValidationError("Class counts must be >= 1", code=ErrorCode.INVALID_PARAMETER)

    def required_fields(self) -> Tuple[str, ...]:
        return {
            LossFamily.CE: (),
            LossFamily.BCE: (),
            LossFamily.CB_CE: ('beta', 'class_counts'),
            LossFamily.LDAM: ('margin_scale', 'logit_scale', 'class_counts'),
            LossFamily.BALANCED_CE: ('prior',),
        }[self.family]

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        label = self.family.label
        if self.tau:
            label += f"+LA(tau={self.tau:g})"
        return label

    @classmethod
    def ce(cls, tau: float = 0.0, name: Optional[str] = None) -> "LossSpec":
        return cls(family=LossFamily.CE, tau=tau, name=name)

    @classmethod
    def bce(cls, name: Optional[str] = None) -> "LossSpec":
        return cls(family=LossFamily.BCE, name=name)

    @classmethod
    def cb_ce(cls, class_counts, beta: Optional[float] = None, name: Optional[str] = None) -> "LossSpec":
        beta = getattr(settings, 'CB_BETA', 0.9999) if beta is None else beta
        return cls(family=LossFamily.CB_CE, beta=beta, class_counts=tuple(class_counts), name=name)

    @classmethod
    def ldam(cls, class_counts, margin_scale: Optional[float] = None,
             logit_scale: Optional[float] = None, name: Optional[str] = None) -> "LossSpec":
        """Defaults put the largest margin at LDAM_MAX_MARGIN and scale logits by LDAM_LOGIT_SCALE"""
        if margin_scale is None:
            margin_scale = getattr(settings, 'LDAM_MAX_MARGIN', 0.5) * float(min(class_counts)) ** 0.25
        if logit_scale is None:
            logit_scale = getattr(settings, 'LDAM_LOGIT_SCALE', 30.0)
        return cls(
            family=LossFamily.LDAM,
            margin_scale=margin_scale,
            logit_scale=logit_scale,
            class_counts=tuple(class_counts),
            name=name,
        )

    @classmethod
    def balanced_ce(cls, class_counts=None, prior: Optional[ClassDistribution] = None,
                    name: Optional[str] = None) -> "LossSpec":
        """Prior defaults to the empirical training frequency n_y / N"""
        if prior is None:
            if class_counts is None:
                raise ValidationError("BalCE needs a prior or class counts", code=ErrorCode.INVALID_PARAMETER)
            counts = np.asarray(class_counts, dtype=np.float64)
            prior = ClassDistribution.from_probabilities(counts / counts.sum())
        return cls(
            family=LossFamily.BALANCED_CE,
            prior=prior,
            class_counts=tuple(class_counts) if class_counts is not None else None,
            name=name,
        )
