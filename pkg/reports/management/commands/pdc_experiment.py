"""
Django Management Command for the desk-scale loss comparison
Usage: python manage.py pdc_experiment CONFIG [--out=experiment.yaml] [--seed=0] [--workers=4] [--record]
"""
from django.core.exceptions import ValidationError

from reports.api.serializers import ExperimentConfigSerializer
from reports.management.base import ToolkitCommand
from reports.management.runs import finish_grid_run
from trainer.services import ExperimentService
from utils.enums import ErrorCode, RunCommand


class Command(ToolkitCommand):
    help = 'Train linear classifiers with each configured loss on synthetic long-tailed data and compare PDC'

    def add_arguments(self, parser):
        parser.add_argument('config', help='YAML experiment config')
        parser.add_argument('--out', help='Write the YAML document (every cell plus the comparison) here')
        parser.add_argument('--seed', type=int, default=None, help='Run a single seed instead of the configured list')
        parser.add_argument('--workers', type=int, default=None, help='Train independent cells on this many threads')
        parser.add_argument('--record', action='store_true',
                            help='Store the run in the evaluation audit trail')

    def handle(self, *args, **options):
        raw, serializer = self.load_config(options['config'], ExperimentConfigSerializer, 'pdc_experiment')
        try:
            if options['workers'] is not None and options['workers'] < 1:
                raise ValidationError("--workers must be >= 1", code=ErrorCode.INVALID_PARAMETER)
            config = serializer.to_config(seed=self.seed_option(options), workers=options['workers'])
            result = ExperimentService.run_experiment(config)
        except ValidationError as exc:
            raise self.fail(exc, 'pdc_experiment')
        finish_grid_run(self, RunCommand.EXPERIMENT, options, raw, config, result)
