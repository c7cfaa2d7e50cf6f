"""
Shared plumbing for the toolkit's management commands: metric flags,
config loading and the error-code to exit-code table.
"""
import logging

import yaml
from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from distributions.types import GroupSpec
from metrics.services import default_alpha, default_epsilon
from reports.api.serializers import flatten_errors
from utils.audit import evaluation_audit_logger
from utils.enums import ErrorCode

logger = logging.getLogger('reports.management.commands')

EXIT_PARSE = 2
EXIT_INCONSISTENT = 3
EXIT_INFEASIBLE = 4

EXIT_CODES = {
    ErrorCode.PARSE_ERROR: EXIT_PARSE,
    ErrorCode.INVALID_PARAMETER: EXIT_PARSE,
    ErrorCode.INCONSISTENT_INPUT: EXIT_INCONSISTENT,
    ErrorCode.DIMENSION_MISMATCH: EXIT_INCONSISTENT,
    ErrorCode.LABEL_OUT_OF_RANGE: EXIT_INCONSISTENT,
    ErrorCode.EMPTY_DISTRIBUTION: EXIT_INCONSISTENT,
    ErrorCode.INVALID_DISTRIBUTION: EXIT_INCONSISTENT,
    ErrorCode.ABSOLUTE_CONTINUITY: EXIT_INCONSISTENT,
    ErrorCode.DIVERGED: EXIT_INCONSISTENT,
    ErrorCode.INFEASIBLE_PROFILE: EXIT_INFEASIBLE,
    ErrorCode.INSUFFICIENT_SAMPLES: EXIT_INFEASIBLE,
}


def exit_code_for(exc: ValidationError) -> int:
    return EXIT_CODES.get(getattr(exc, 'code', None), EXIT_INCONSISTENT)


class ToolkitCommand(BaseCommand):
    """Base command: domain errors become CommandError with the mapped exit code"""

    def add_metric_arguments(self, parser):
        parser.add_argument('--epsilon', type=float, default=None,
                            help='Added to the train/target KL in the PDC denominator')
        parser.add_argument('--alpha', type=float, default=None,
                            help='Additive smoothing applied to predicted counts')
        parser.add_argument('--many-min', type=int, default=None,
                            help='Classes with more training samples than this are Many')
        parser.add_argument('--few-max', type=int, default=None,
                            help='Classes with fewer training samples than this are Few')

    def metric_options(self, options):
        """(alpha, epsilon, GroupSpec) from flags, falling back to settings"""
        alpha = default_alpha() if options.get('alpha') is None else options['alpha']
        epsilon = default_epsilon() if options.get('epsilon') is None else options['epsilon']
        defaults = GroupSpec.from_settings()
        group_spec = GroupSpec(
            many_min=defaults.many_min if options.get('many_min') is None else options['many_min'],
            few_max=defaults.few_max if options.get('few_max') is None else options['few_max'],
        )
        return alpha, epsilon, group_spec

    def seed_option(self, options):
        seed = options.get('seed')
        if seed is not None and seed < 0:
            raise ValidationError("--seed must be >= 0", code=ErrorCode.INVALID_PARAMETER)
        return seed

    def fail(self, exc: ValidationError, operation: str) -> CommandError:
        message = "; ".join(exc.messages)
        code = exit_code_for(exc)
        logger.error(f"{operation} failed with exit code {code}: {message}")
        evaluation_audit_logger.log_failure(None, operation, message)
        return CommandError(message, returncode=code)

    def load_config(self, path, serializer_class, operation: str):
        """Parse a YAML config and validate it; errors name the dotted field path"""
        try:
            with open(path, encoding='utf-8') as handle:
                raw = yaml.safe_load(handle)
        except FileNotFoundError:
            raise self.fail(ValidationError(f"{path}: file not found", code=ErrorCode.PARSE_ERROR), operation)
        except yaml.YAMLError as exc:
            mark = getattr(exc, 'problem_mark', None)
            line = mark.line + 1 if mark is not None else 0
            raise self.fail(
                ValidationError(f"{path}: line {line}: {getattr(exc, 'problem', exc)}", code=ErrorCode.PARSE_ERROR),
                operation,
            )
        if not isinstance(raw, dict):
            raise self.fail(ValidationError(f"{path}: expected a mapping at the top level", code=ErrorCode.PARSE_ERROR),
                            operation)

        serializer = serializer_class(data=raw)
        if not serializer.is_valid():
            problems = [f"{field}: {message}" for field, message in flatten_errors(serializer.errors)]
            raise self.fail(ValidationError(f"{path}: " + "; ".join(problems), code=ErrorCode.PARSE_ERROR), operation)
        return raw, serializer
