"""
Django Management Command for rendering a confusion matrix
Usage: python manage.py confmat PREDICTIONS [--classes=10] [--csv-out=cm.csv] [--from-csv]
"""
from django.core.exceptions import ValidationError

from distributions.services import DistributionService
from reports.management.base import ToolkitCommand
from reports.parsers import LogParser
from reports.services import ReportService
from utils.enums import ErrorCode


class Command(ToolkitCommand):
    help = 'Dump a confusion matrix as CSV and draw it as an ASCII heatmap (rows = ground truth)'

    def add_arguments(self, parser):
        parser.add_argument('predictions', help='Prediction log CSV, or a confusion CSV with --from-csv')
        parser.add_argument('--classes', type=int, default=None,
                            help='Class count; inferred from the log when omitted')
        parser.add_argument('--csv-out', help='Write the CSV dump here instead of standard output')
        parser.add_argument('--from-csv', action='store_true',
                            help='Read a confusion CSV previously written by this command')

    def handle(self, *args, **options):
        try:
            self.render(options)
        except ValidationError as exc:
            raise self.fail(exc, 'confmat')

    def render(self, options):
        if options['from_csv']:
            cm = LogParser.read_confusion_csv(options['predictions'])
        else:
            parsed = LogParser.read_prediction_log(options['predictions'])
            num_classes = options['classes'] or parsed.inferred_classes()
            if parsed.has_logits and parsed.logit_width != num_classes:
                raise ValidationError(
                    f"--classes={num_classes} but the log has {parsed.logit_width} logits per record",
                    code=ErrorCode.INCONSISTENT_INPUT,
                )
            cm = DistributionService.confusion_from_log(parsed.records, num_classes)

        csv_text = ReportService.confusion_csv(cm)
        if options.get('csv_out'):
            ReportService.write_atomic(options['csv_out'], csv_text)
        else:
            self.stdout.write(csv_text, ending='')
        self.stdout.write(ReportService.render_heatmap(cm))
