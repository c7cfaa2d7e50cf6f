"""
Django Management Command for building a long-tailed split from a label file
Usage: python manage.py lt_split LABELS --classes=100 --n-max=500 --imbalance-factor=100 [--seed=0] [--out=split.csv]
"""
from django.core.exceptions import ValidationError

from ltdata.services import ProfileService, SplitService
from reports.management.base import ToolkitCommand
from reports.parsers import LogParser
from reports.services import ReportService


class Command(ToolkitCommand):
    help = 'Subsample a label pool into an exponential long-tailed profile'

    def add_arguments(self, parser):
        parser.add_argument('labels', help='CSV with a label column; row order is the sample index')
        parser.add_argument('--classes', type=int, required=True)
        parser.add_argument('--n-max', type=int, required=True, help='Count of the head class')
        parser.add_argument('--imbalance-factor', type=float, required=True)
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--out', help='Split CSV (index,label); stats go to <out>.stats.yaml')

    def handle(self, *args, **options):
        try:
            self.split(options)
        except ValidationError as exc:
            raise self.fail(exc, 'lt_split')

    def split(self, options):
        labels = LogParser.read_labels(options['labels'])
        profile = ProfileService.exp_profile(options['classes'], options['n_max'], options['imbalance_factor'])
        indices = SplitService.subsample_indices(labels, profile, options['seed'])

        split_text = ReportService.split_csv(indices, labels)
        stats = ReportService.split_stats(profile, labels[indices], options['seed'])

        out = options.get('out')
        if out:
            ReportService.write_atomic(out, split_text)
            ReportService.write_atomic(f"{out}.stats.yaml", ReportService.dump_document(stats))
        else:
            self.stdout.write(split_text, ending='')

        summary = self.stderr if not out else self.stdout
        summary.write(
            f"classes={profile.num_classes} total={stats['total']} "
            f"requested IF={profile.imbalance_factor:g} realized IF={profile.realized_imbalance_factor:g}"
        )
        summary.write(f"head count={profile.counts[0]} tail count={profile.counts[-1]}")
        if out:
            self.stdout.write(self.style.SUCCESS(f"Split written to {out}"))
