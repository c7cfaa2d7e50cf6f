"""
Django Management Command for the prior-shift simulator
Usage: python manage.py pdc_simulate CONFIG [--out=simulation.yaml] [--seed=0] [--record]
"""
from django.core.exceptions import ValidationError

from reports.api.serializers import SimulationConfigSerializer
from reports.management.base import ToolkitCommand
from reports.management.runs import finish_grid_run
from trainer.services import ExperimentService
from utils.enums import RunCommand


class Command(ToolkitCommand):
    help = 'Simulate biased classifiers by prior shift and compare their PDC across imbalance factors'

    def add_arguments(self, parser):
        parser.add_argument('config', help='YAML simulation config')
        parser.add_argument('--out', help='Write the YAML document (every cell plus the comparison) here')
        parser.add_argument('--seed', type=int, default=None, help='Run a single seed instead of the configured list')
        parser.add_argument('--record', action='store_true',
                            help='Store the run in the evaluation audit trail')

    def handle(self, *args, **options):
        raw, serializer = self.load_config(options['config'], SimulationConfigSerializer, 'pdc_simulate')
        try:
            config = serializer.to_config(seed=self.seed_option(options))
            result = ExperimentService.run_simulation(config)
        except ValidationError as exc:
            raise self.fail(exc, 'pdc_simulate')
        finish_grid_run(self, RunCommand.SIMULATE, options, raw, config, result)
