"""
Django Management Command for evaluating a prediction log
Usage: python manage.py pdc_eval PREDICTIONS TRAIN_COUNTS [--out=report.yaml] [--tau=1.0] [--record]
"""
import numpy as np
from django.core.exceptions import ValidationError

from distributions.services import DistributionService
from distributions.types import ClassDistribution, PredictionRecord
from losses.services import LossService
from metrics.services import MetricsService
from reports.management.base import ToolkitCommand
from reports.parsers import LogParser
from reports.services import ReportService
from utils.audit import evaluation_audit_logger
from utils.enums import ErrorCode, GroupAccuracyMode, RunCommand


class Command(ToolkitCommand):
    help = 'Compute top-1, group accuracy and PDC for a prediction log'

    def add_arguments(self, parser):
        parser.add_argument('predictions', help='CSV: sample_id,true_label,pred_label or logit_0..logit_{C-1}')
        parser.add_argument('train_counts', help='CSV: class_id,count')
        parser.add_argument('--out', help='Write the full YAML report document here')
        self.add_metric_arguments(parser)
        parser.add_argument('--tau', type=float, default=0.0,
                            help='Post-hoc logit adjustment strength (needs a logit log)')
        parser.add_argument('--restricted-groups', action='store_true',
                            help='Group accuracy with argmax restricted to the group (needs a logit log)')
        parser.add_argument('--record', action='store_true',
                            help='Store the run in the evaluation audit trail')

    def handle(self, *args, **options):
        try:
            self.evaluate(options)
        except ValidationError as exc:
            raise self.fail(exc, 'pdc_eval')

    def evaluate(self, options):
        parsed = LogParser.read_prediction_log(options['predictions'])
        train_counts = LogParser.read_train_counts(options['train_counts'])
        num_classes = train_counts.num_classes
        if parsed.has_logits and parsed.logit_width != num_classes:
            raise ValidationError(
                f"Prediction log has {parsed.logit_width} logits per record, train counts list {num_classes} classes",
                code=ErrorCode.INCONSISTENT_INPUT,
            )

        alpha, epsilon, group_spec = self.metric_options(options)
        tau = options['tau']
        mode = GroupAccuracyMode.RESTRICTED if options['restricted_groups'] else GroupAccuracyMode.STANDARD
        records = parsed.records
        if tau < 0:
            raise ValidationError("--tau must be >= 0", code=ErrorCode.INVALID_PARAMETER)
        if tau > 0:
            records = self.adjust(parsed, train_counts, tau)

        cm = DistributionService.confusion_from_log(records, num_classes)
        report = MetricsService.build_report(
            cm, train_counts, group_spec, alpha, epsilon, mode=mode, log=records,
        )
        pairs = MetricsService.acc_trap_pairs(cm)

        metadata = ReportService.build_metadata(
            RunCommand.EVAL.value,
            {'predictions': options['predictions'], 'train_counts': options['train_counts']},
            num_classes, cm.total, alpha, epsilon, group_spec,
            group_mode=mode.value, tau=float(tau),
        )
        document = ReportService.eval_document(report, metadata, pairs)
        text = ReportService.dump_document(document)
        if options.get('out'):
            ReportService.write_atomic(options['out'], text)

        self.stdout.write(ReportService.render_text_table(report))
        if pairs:
            self.stdout.write(self.style.WARNING(
                f"\n{len(pairs)} class pair(s) with on-par recall but skewed prediction counts"
            ))
            for pair in pairs[:5]:
                self.stdout.write(
                    f"   class {pair.head_class} vs {pair.tail_class}: "
                    f"recall {pair.head_recall:.3f}/{pair.tail_recall:.3f}, "
                    f"predictions {pair.head_predictions}/{pair.tail_predictions}"
                )

        run_id = None
        if options['record']:
            run = ReportService.record_run(RunCommand.EVAL, document, text, pdc=report.pdc, top1=report.top1_acc)
            run_id = str(run.id)
            self.stdout.write(self.style.SUCCESS(f"Recorded run {run_id}"))
        evaluation_audit_logger.log_metrics(
            run_id, RunCommand.EVAL.value, report.pdc, report.top1_acc, num_classes, cm.total,
        )
        if options.get('out'):
            self.stdout.write(self.style.SUCCESS(f"Report written to {options['out']}"))

    @staticmethod
    def adjust(parsed, train_counts: ClassDistribution, tau: float):
        if not parsed.has_logits:
            raise ValidationError("--tau needs a prediction log with logits", code=ErrorCode.INVALID_PARAMETER)
        logits = np.array([record.predicted for record in parsed.records], dtype=np.float64)
        adjusted = LossService.logit_adjust_inference(
            logits,
            DistributionService.normalize(train_counts),
            ClassDistribution.uniform(train_counts.num_classes),
            tau,
        )
        return [
            PredictionRecord(sample_id=record.sample_id, true_label=record.true_label, predicted=tuple(row))
            for record, row in zip(parsed.records, adjusted.tolist())
        ]
