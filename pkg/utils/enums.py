from django.db import models


class LossFamily(models.TextChoices):
    CE = "ce", "CE"
    BCE = "bce", "BCE"
    CB_CE = "cb_ce", "CB-CE"
    LDAM = "ldam", "LDAM"
    BALANCED_CE = "balce", "BalCE"


class ClassGroup(models.TextChoices):
    MANY = "many", "Many"
    MEDIUM = "medium", "Medium"
    FEW = "few", "Few"


class GroupAccuracyMode(models.TextChoices):
    # argmax over every class, the usual LTR convention
    STANDARD = "standard", "Argmax over all classes"
    # argmax restricted to the classes of the group
    RESTRICTED = "restricted", "Argmax within group"


class RunCommand(models.TextChoices):
    EVAL = "eval", "Evaluate prediction log"
    SIMULATE = "simulate", "Prior-shift simulation"
    EXPERIMENT = "experiment", "Desk-scale experiment"


class ErrorCode(models.TextChoices):
    EMPTY_DISTRIBUTION = "empty_distribution", "Empty distribution"
    INVALID_DISTRIBUTION = "invalid_distribution", "Invalid distribution"
    LABEL_OUT_OF_RANGE = "label_out_of_range", "Label out of range"
    DIMENSION_MISMATCH = "dimension_mismatch", "Dimension mismatch"
    ABSOLUTE_CONTINUITY = "absolute_continuity", "Absolute continuity violated"
    INVALID_PARAMETER = "invalid_parameter", "Invalid parameter"
    INSUFFICIENT_SAMPLES = "insufficient_samples", "Insufficient samples"
    INFEASIBLE_PROFILE = "infeasible_profile", "Infeasible profile"
    DIVERGED = "diverged", "Training diverged"
    PARSE_ERROR = "parse_error", "Parse error"
    INCONSISTENT_INPUT = "inconsistent_input", "Inconsistent input"
