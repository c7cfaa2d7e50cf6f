"""
Output stage shared by pdc_simulate and pdc_experiment: document, table,
optional audit record.
"""
import logging

from django.core.management.base import CommandError

from metrics.services import default_alpha, default_epsilon
from reports.management.base import EXIT_INCONSISTENT
from reports.services import ReportService
from utils.audit import evaluation_audit_logger
from utils.enums import RunCommand

logger = logging.getLogger('reports.management.commands')


def finish_grid_run(command, run_command: RunCommand, options, raw, config, result):
    metadata = ReportService.build_metadata(
        run_command.value,
        {'config': options['config']},
        config.num_classes,
        config.num_classes * config.test_per_class,
        default_alpha() if config.alpha is None else config.alpha,
        default_epsilon() if config.epsilon is None else config.epsilon,
        config.group_spec,
        seeds=list(config.seeds),
        imbalance_factors=list(config.imbalance_factors),
        config=raw,
    )
    document = ReportService.experiment_document(result, metadata)
    text = ReportService.dump_document(document)
    if options.get('out'):
        ReportService.write_atomic(options['out'], text)

    command.stdout.write(ReportService.render_comparison_table(result))
    for imbalance_factor, ranking in result.rankings.items():
        if not ranking.is_concordant():
            pairs = ", ".join(f"{a}/{b}" for a, b in ranking.discordant_pairs)
            command.stdout.write(
                f"IF={imbalance_factor:g}: accuracy and PDC disagree on {pairs} (kendall tau {ranking.kendall_tau!r})"
            )
    for cell in result.failures:
        command.stdout.write(command.style.WARNING(
            f"failed: {cell.method} IF={cell.imbalance_factor:g} seed={cell.seed}: {cell.error}"
        ))

    completed = [cell for cell in result.cells if cell.ok]
    headline = completed[0].report if len(result.cells) == 1 and completed else None
    run_id = None
    if options.get('record'):
        run = ReportService.record_run(
            run_command, document, text,
            pdc=headline.pdc if headline else None,
            top1=headline.top1_acc if headline else None,
            seed=options.get('seed'),
        )
        run_id = str(run.id)
        command.stdout.write(command.style.SUCCESS(f"Recorded run {run_id}"))
    evaluation_audit_logger.log_event(
        'GRID_COMPLETED', run_id,
        {'command': run_command.value, 'cells': len(result.cells), 'failed': len(result.failures)},
        'WARNING' if result.failures else 'INFO',
    )
    if options.get('out'):
        command.stdout.write(command.style.SUCCESS(f"Report written to {options['out']}"))

    if not completed:
        message = f"all {len(result.cells)} cells failed"
        logger.error(f"{run_command.value}: {message}")
        raise CommandError(message, returncode=EXIT_INCONSISTENT)

