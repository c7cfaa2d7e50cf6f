"""
Django Management Command for the PDC variance across evaluation reports
Usage: python manage.py pdc_variance REPORT REPORT [REPORT ...]
"""
import yaml
from django.core.exceptions import ValidationError

from metrics.services import MetricsService
from reports.management.base import ToolkitCommand
from reports.services import ReportService
from utils.enums import ErrorCode


class Command(ToolkitCommand):
    help = 'Sample variance (n-1) of the PDC values stored in two or more pdc_eval reports'

    def add_arguments(self, parser):
        parser.add_argument('reports', nargs='+', help='YAML documents written by pdc_eval --out')

    def handle(self, *args, **options):
        try:
            values = [self.read_pdc(path) for path in options['reports']]
            variance = MetricsService.pdc_variance(values)
        except ValidationError as exc:
            raise self.fail(exc, 'pdc_variance')

        for path, value in zip(options['reports'], values):
            self.stdout.write(f"{path}  pdc {value!r}")
        self.stdout.write(f"variance {variance!r}")
        self.stdout.write(f"variance (2 d.p.) {variance:.2f}")

    @staticmethod
    def read_pdc(path) -> float:
        try:
            with open(path, encoding='utf-8') as handle:
                document = ReportService.load_document(handle.read())
        except FileNotFoundError:
            raise ValidationError(f"{path}: file not found", code=ErrorCode.PARSE_ERROR)
        except yaml.YAMLError as exc:
            raise ValidationError(f"{path}: not a YAML document ({exc})", code=ErrorCode.PARSE_ERROR)
        try:
            return float(ReportService.metrics_from_tree(document['metrics']).pdc)
        except (TypeError, KeyError, ValueError, AttributeError):
            raise ValidationError(f"{path}: no complete metrics block", code=ErrorCode.PARSE_ERROR)
