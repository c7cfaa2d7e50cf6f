"""
Test Cases for parsers, report documents, management commands and the
evaluation-run API
"""
import os
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.contrib.auth.models import User
from django.core.exceptions import ValidationError
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase
from rest_framework import status
from rest_framework.test import APIClient

from distributions.services import DistributionService
from distributions.types import ConfusionMatrix
from ltdata.services import ProfileService
from metrics.services import MetricsService
from reports.api.serializers import ExperimentConfigSerializer, flatten_errors
from reports.models import EvaluationRun
from reports.parsers import LogParser
from reports.services import ReportService, format_float
from utils.enums import ErrorCode, RunCommand

FIXTURES = Path(__file__).resolve().parent / 'fixtures'
HEAD_LOG = str(FIXTURES / 'acc_trap_head.csv')
SPREAD_LOG = str(FIXTURES / 'acc_trap_spread.csv')
TRAIN_COUNTS = str(FIXTURES / 'acc_trap_train_counts.csv')

SMALL_EXPERIMENT = """\
num_classes: 3
dim: 4
imbalance_factors: [10]
seeds: [0]
n_max: 60
test_per_class: 20
epochs: 50
losses:
  - family: ce
  - family: balce
"""

SMALL_SIMULATION = """\
num_classes: 10
imbalance_factors: [1, 100]
confusabilities: [0.5]
seeds: [0]
"""


class WorkspaceMixin:
    """Temporary directory per test"""

    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.workdir = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()
        super().tearDown()

    def write(self, name: str, text: str) -> str:
        path = self.workdir / name
        path.write_text(text, encoding='utf-8')
        return str(path)

    def run_command(self, name, *args, **options):
        stdout, stderr = StringIO(), StringIO()
        call_command(name, *args, stdout=stdout, stderr=stderr, **options)
        return stdout.getvalue(), stderr.getvalue()

    def assertExitCode(self, code, name, *args, **options):
        with self.assertRaises(CommandError) as ctx:
            self.run_command(name, *args, **options)
        self.assertEqual(ctx.exception.returncode, code)
        return str(ctx.exception)


class ParserTestCase(WorkspaceMixin, SimpleTestCase):
    """
    CSV readers
    """

    def test_label_log(self):
        path = self.write('log.csv', "sample_id,true_label,pred_label\na,0,1\nb,1,1\n")
        parsed = LogParser.read_prediction_log(path)
        self.assertFalse(parsed.has_logits)
        self.assertEqual([(r.sample_id, r.true_label, r.predicted) for r in parsed.records],
                         [('a', 0, 1), ('b', 1, 1)])
        self.assertEqual(parsed.inferred_classes(), 2)

    def test_logit_log(self):
        path = self.write('log.csv', "sample_id,true_label,logit_0,logit_1,logit_2\na,2,0.1,-1.5,3\n")
        parsed = LogParser.read_prediction_log(path)
        self.assertEqual(parsed.logit_width, 3)
        self.assertEqual(parsed.records[0].predicted_label, 2)

    def test_errors_carry_file_line(self):
        """
        The header is line 1, so the third record sits on line 4
        """
        print("\n=== Testing Parse Error Lines ===")

        cases = [
            ("sample_id,true_label,pred_label\na,0,0\nb,1,1\nc,x,1\n", 4),
            ("sample_id,true_label,pred_label\na,0,0\n\nb,1,1\nc,x,1\n", 5),
            ("sample_id,true_label,logit_0,logit_1\n\n\na,0,0.5,oops\n", 4),
            ("sample_id,true_label,logit_0,logit_1\na,0,0.5,nan\n", 2),
            ("sample,true_label,pred_label\na,0,0\n", 1),
            ("sample_id,true_label,logit_1,logit_0\na,0,0.5,1\n", 1),
        ]
        for text, line in cases:
            path = self.write('bad.csv', text)
            with self.assertRaises(ValidationError) as ctx:
                LogParser.read_prediction_log(path)
            self.assertEqual(ctx.exception.code, ErrorCode.PARSE_ERROR)
            self.assertEqual(ctx.exception.params['line'], line)
            self.assertIn(f"line {line}", ctx.exception.messages[0])
            print(ctx.exception.messages[0])

        print("✅ Parse Error Lines Test PASSED!")

    def test_blank_lines_are_skipped(self):
        path = self.write('log.csv', "sample_id,true_label,pred_label\na,0,1\n\nb,1,1\n\n")
        parsed = LogParser.read_prediction_log(path)
        self.assertEqual([r.sample_id for r in parsed.records], ['a', 'b'])

    def test_missing_and_empty_files(self):
        with self.assertRaises(ValidationError) as ctx:
            LogParser.read_prediction_log(str(self.workdir / 'absent.csv'))
        self.assertEqual(ctx.exception.code, ErrorCode.PARSE_ERROR)

        with self.assertRaises(ValidationError) as ctx:
            LogParser.read_prediction_log(self.write('empty.csv', ''))
        self.assertEqual(ctx.exception.code, ErrorCode.PARSE_ERROR)

        with self.assertRaises(ValidationError) as ctx:
            LogParser.read_prediction_log(self.write('header.csv', "sample_id,true_label,pred_label\n"))
        self.assertEqual(ctx.exception.code, ErrorCode.PARSE_ERROR)

    def test_train_counts(self):
        counts = LogParser.read_train_counts(TRAIN_COUNTS)
        self.assertEqual(counts.mass.tolist(), [500, 150, 50, 10])

        path = self.write('counts.csv', "class_id,count\n0,5\n2,3\n")
        with self.assertRaises(ValidationError) as ctx:
            LogParser.read_train_counts(path)
        self.assertEqual(ctx.exception.params['line'], 3)

        path = self.write('counts.csv', "class_id,count\n0,5\n1,-3\n")
        with self.assertRaises(ValidationError) as ctx:
            LogParser.read_train_counts(path)
        self.assertIn('below 0', ctx.exception.messages[0])

    def test_labels(self):
        path = self.write('labels.csv', "path,label\nimg0.png,3\nimg1.png,0\n")
        self.assertEqual(LogParser.read_labels(path).tolist(), [3, 0])

        with self.assertRaises(ValidationError):
            LogParser.read_labels(self.write('labels.csv', "path,class\nimg0.png,3\n"))

    def test_confusion_csv_round_trip(self):
        cm = ConfusionMatrix(counts=[[5, 1, 0], [2, 7, 1], [0, 0, 9]])
        path = self.write('cm.csv', ReportService.confusion_csv(cm))
        self.assertEqual(LogParser.read_confusion_csv(path).to_list(), cm.to_list())

        with self.assertRaises(ValidationError) as ctx:
            LogParser.read_confusion_csv(self.write('bad.csv', "true\\pred,0,1\n0,1,2\n"))
        self.assertEqual(ctx.exception.code, ErrorCode.PARSE_ERROR)


class ReportServiceTestCase(WorkspaceMixin, SimpleTestCase):
    """
    Documents, renderings and atomic writes
    """

    def test_format_float_round_trips(self):
        for value in (0.1, 1 / 3, 0.060306, 1e-300, 123456.789):
            self.assertEqual(float(format_float(value)), value)
        self.assertEqual(format_float(float('nan')), '.nan')
        self.assertEqual(format_float(float('-inf')), '-.inf')

    def test_metrics_document_round_trip(self):
        """
        Every metric survives YAML serialization bit for bit
        """
        print("\n=== Testing Report Document Round Trip ===")

        parsed = LogParser.read_prediction_log(HEAD_LOG)
        cm = DistributionService.confusion_from_log(parsed.records, 4)
        report = MetricsService.build_report(cm, LogParser.read_train_counts(TRAIN_COUNTS))
        text = ReportService.dump_document({'metrics': ReportService.metrics_tree(report)})
        restored = ReportService.metrics_from_tree(ReportService.load_document(text)['metrics'])

        self.assertEqual(restored.pdc, report.pdc)
        self.assertEqual(restored.kl_pred_target, report.kl_pred_target)
        self.assertEqual(restored.per_class_recall, report.per_class_recall)
        self.assertEqual(restored.predicted_counts, report.predicted_counts)
        print(f"pdc {report.pdc!r} -> {format_float(report.pdc)}")

        print("✅ Report Document Round Trip Test PASSED!")

    def test_heatmap(self):
        heatmap = ReportService.render_heatmap(ConfusionMatrix(counts=[[10, 0], [5, 5]]))
        self.assertEqual(heatmap.splitlines(), ["   01", "0 |@ |", "1 |++|"])

    def test_heatmap_empty_row_is_blank(self):
        heatmap = ReportService.render_heatmap(ConfusionMatrix(counts=[[0, 0], [1, 3]]))
        self.assertEqual(heatmap.splitlines()[1], "0 |  |")

    def test_write_atomic_replaces_and_cleans_up(self):
        target = self.workdir / 'nested' / 'report.yaml'
        ReportService.write_atomic(target, "first\n")
        ReportService.write_atomic(target, "second\n")
        self.assertEqual(target.read_text(encoding='utf-8'), "second\n")
        self.assertEqual(os.listdir(target.parent), ['report.yaml'])

    def test_split_stats(self):
        profile = ProfileService.exp_profile(3, 40, 4)
        labels = np.repeat(np.arange(3), 40)
        stats = ReportService.split_stats(profile, np.repeat(np.arange(3), profile.counts), seed=5)
        self.assertEqual(stats['class_counts'], list(profile.counts))
        self.assertEqual(stats['total'], profile.total)
        self.assertEqual(ReportService.split_csv(np.array([0, 41]), labels), "index,label\n0,0\n41,1\n")


class ConfigSerializerTestCase(SimpleTestCase):

    def test_flatten_errors_builds_dotted_paths(self):
        errors = {'losses': [{}, {'beta': ['Ensure this value is less than 1.']}], 'dim': ['Required.']}
        self.assertEqual(list(flatten_errors(errors)), [
            ('losses.1.beta', 'Ensure this value is less than 1.'),
            ('dim', 'Required.'),
        ])

    def test_experiment_serializer_to_config(self):
        serializer = ExperimentConfigSerializer(data={
            'num_classes': 4, 'dim': 6, 'imbalance_factors': [10, 100], 'seeds': [0, 1],
            'losses': [{'family': 'ce'}, {'family': 'cb_ce', 'beta': 0.99}],
            'groups': {'many_min': 50, 'few_max': 5}, 'epochs': 20,
        })
        self.assertTrue(serializer.is_valid(), serializer.errors)
        config = serializer.to_config(seed=3, workers=2)
        self.assertEqual(config.seeds, (3,))
        self.assertEqual(config.workers, 2)
        self.assertEqual(config.epochs, 20)
        self.assertEqual(config.group_spec.many_min, 50)
        self.assertEqual([t.label for t in config.losses], ['CE', 'CB-CE'])

    def test_invalid_family(self):
        serializer = ExperimentConfigSerializer(data={
            'num_classes': 4, 'dim': 6, 'imbalance_factors': [10], 'seeds': [0],
            'losses': [{'family': 'focal'}],
        })
        self.assertFalse(serializer.is_valid())
        self.assertEqual([path for path, _ in flatten_errors(serializer.errors)], ['losses.0.family'])

    def test_epsilon_must_be_positive(self):
        serializer = ExperimentConfigSerializer(data={
            'num_classes': 4, 'dim': 6, 'imbalance_factors': [1, 10], 'seeds': [0],
            'losses': [{'family': 'ce'}], 'epsilon': 0,
        })
        self.assertFalse(serializer.is_valid())
        self.assertEqual([path for path, _ in flatten_errors(serializer.errors)], ['epsilon'])


class PdcEvalCommandTestCase(WorkspaceMixin, TestCase):
    """
    pdc_eval on the accuracy-trap fixtures: same top-1, very different PDC
    """

    def test_acc_trap_fixtures(self):
        print("\n=== Testing pdc_eval on Accuracy-Trap Fixtures ===")

        head_out = str(self.workdir / 'head.yaml')
        spread_out = str(self.workdir / 'spread.yaml')
        head_text, _ = self.run_command('pdc_eval', HEAD_LOG, TRAIN_COUNTS, out=head_out)
        self.run_command('pdc_eval', SPREAD_LOG, TRAIN_COUNTS, out=spread_out)

        head = ReportService.load_document(Path(head_out).read_text(encoding='utf-8'))
        spread = ReportService.load_document(Path(spread_out).read_text(encoding='utf-8'))
        print(f"head: top1={head['metrics']['top1_acc']} pdc={head['metrics']['pdc']}")
        print(f"spread: top1={spread['metrics']['top1_acc']} pdc={spread['metrics']['pdc']}")

        self.assertEqual(head['format'], 'pdc-report/1')
        self.assertEqual(head['metrics']['top1_acc'], spread['metrics']['top1_acc'])
        self.assertGreaterEqual(head['metrics']['pdc'], 2 * spread['metrics']['pdc'])
        self.assertAlmostEqual(head['metrics']['pdc'], 0.060306, delta=1e-5)
        self.assertAlmostEqual(spread['metrics']['pdc'], 0.002762, delta=1e-5)
        self.assertEqual([(p['head_class'], p['tail_class']) for p in head['acc_trap_pairs']],
                         [(0, 1), (0, 2), (0, 3)])
        self.assertEqual(spread['acc_trap_pairs'], [])
        self.assertEqual(head['metadata']['num_test'], 400)
        self.assertEqual(head['metadata']['inputs']['train_counts']['sha256'],
                         ReportService.file_digest(TRAIN_COUNTS))

        # the text table prints the same numbers the document stores
        table = {line.split()[0]: line.split()[1] for line in head_text.splitlines()
                 if line.startswith(('pdc ', 'top1_acc ', 'kl_pred_target '))}
        self.assertEqual(float(table['pdc']), head['metrics']['pdc'])
        self.assertEqual(float(table['top1_acc']), head['metrics']['top1_acc'])
        self.assertEqual(float(table['kl_pred_target']), head['metrics']['kl_pred_target'])
        self.assertIn('on-par recall', head_text)

        print("✅ pdc_eval Accuracy-Trap Test PASSED!")

    def test_record_creates_run(self):
        stdout, _ = self.run_command('pdc_eval', HEAD_LOG, TRAIN_COUNTS, record=True)
        run = EvaluationRun.objects.get()
        self.assertEqual(run.command, RunCommand.EVAL)
        self.assertEqual((run.num_classes, run.num_samples), (4, 400))
        self.assertAlmostEqual(run.top1_acc, 0.7)
        self.assertIn(str(run.id), stdout)
        self.assertIn(ReportService.file_digest(HEAD_LOG), run.input_digests.values())

    def test_post_hoc_adjustment(self):
        log = self.write('logits.csv', "sample_id,true_label,logit_0,logit_1\n"
                                       "a,0,3.0,0.0\nb,1,1.0,0.5\nc,1,0.2,1.0\n")
        counts = self.write('counts.csv', "class_id,count\n0,100\n1,10\n")
        out = str(self.workdir / 'adjusted.yaml')
        self.run_command('pdc_eval', log, counts, tau=1.0, out=out)
        document = ReportService.load_document(Path(out).read_text(encoding='utf-8'))
        # log(10) moves sample b over to class 1
        self.assertEqual(document['metrics']['predicted_counts'], [1, 2])
        self.assertEqual(document['metadata']['tau'], 1.0)

        self.assertExitCode(2, 'pdc_eval', HEAD_LOG, TRAIN_COUNTS, tau=1.0)

    def test_exit_codes(self):
        """
        2 for parse errors, 3 for inconsistent inputs
        """
        print("\n=== Testing Exit Codes ===")

        bad_header = self.write('bad.csv', "id,label,pred\na,0,0\n")
        message = self.assertExitCode(2, 'pdc_eval', bad_header, TRAIN_COUNTS)
        self.assertIn('line 1', message)

        wide = self.write('wide.csv', "sample_id,true_label,logit_0,logit_1,logit_2\na,0,1,0,0\n")
        self.assertExitCode(3, 'pdc_eval', wide, TRAIN_COUNTS)

        out_of_range = self.write('range.csv', "sample_id,true_label,pred_label\nok,0,0\nodd-one,1,7\n")
        message = self.assertExitCode(3, 'pdc_eval', out_of_range, TRAIN_COUNTS)
        self.assertIn('odd-one', message)

        self.assertExitCode(2, 'pdc_eval', HEAD_LOG, TRAIN_COUNTS, epsilon=-1.0)

        balanced_counts = self.write('balanced_counts.csv', "class_id,count\n0,50\n1,50\n")
        two_class = self.write('two_class.csv', "sample_id,true_label,pred_label\na,0,0\nb,1,0\n")
        message = self.assertExitCode(2, 'pdc_eval', two_class, balanced_counts, epsilon=0.0)
        self.assertIn('epsilon', message)

        print("✅ Exit Codes Test PASSED!")


class LtSplitCommandTestCase(WorkspaceMixin, SimpleTestCase):
    """
    lt_split over a balanced 100-class pool
    """

    def setUp(self):
        super().setUp()
        labels = np.repeat(np.arange(100), 500)
        np.random.default_rng(1).shuffle(labels)
        self.labels = self.write('pool.csv', "label\n" + "\n".join(str(v) for v in labels) + "\n")

    def split_options(self, **overrides):
        options = {'classes': 100, 'n_max': 500, 'imbalance_factor': 100, 'seed': 0}
        options.update(overrides)
        return options

    def test_reruns_are_byte_identical(self):
        print("\n=== Testing lt_split Reproducibility ===")

        first = self.workdir / 'first.csv'
        second = self.workdir / 'second.csv'
        self.run_command('lt_split', self.labels, out=str(first), **self.split_options())
        self.run_command('lt_split', self.labels, out=str(second), **self.split_options())
        self.assertEqual(first.read_bytes(), second.read_bytes())

        stats = ReportService.load_document(Path(f"{first}.stats.yaml").read_text(encoding='utf-8'))
        self.assertEqual(stats['class_counts'], list(ProfileService.exp_profile(100, 500, 100).counts))
        self.assertEqual(stats['realized_imbalance_factor'], 100.0)
        self.assertEqual(stats['class_counts'][0], 500)
        self.assertEqual(stats['class_counts'][-1], 5)
        print(f"total {stats['total']} samples")

        print("✅ lt_split Reproducibility Test PASSED!")

    def test_stdout_mode(self):
        stdout, stderr = self.run_command('lt_split', self.labels, **self.split_options(seed=3))
        rows = stdout.splitlines()
        self.assertEqual(rows[0], 'index,label')
        self.assertEqual(len(rows) - 1, ProfileService.exp_profile(100, 500, 100).total)
        self.assertIn('realized IF=100', stderr)

    def test_infeasible_profile_exit_code(self):
        message = self.assertExitCode(4, 'lt_split', self.labels, **self.split_options(n_max=50))
        self.assertIn('class 99', message)

    def test_insufficient_pool_exit_code(self):
        small = self.write('small.csv', "label\n" + "\n".join(str(k % 100) for k in range(300)) + "\n")
        message = self.assertExitCode(4, 'lt_split', small, **self.split_options())
        self.assertIn('Class 0', message)

    def test_negative_seed(self):
        self.assertExitCode(2, 'lt_split', self.labels, **self.split_options(seed=-1))


class ConfmatCommandTestCase(WorkspaceMixin, SimpleTestCase):
    """
    confmat dump and heatmap
    """

    def log(self, predict):
        lines = ["sample_id,true_label,pred_label"]
        for label in range(4):
            for k in range(5):
                lines.append(f"s{label}-{k},{label},{predict(label)}")
        return self.write('log.csv', "\n".join(lines) + "\n")

    def test_identity_diagonal(self):
        print("\n=== Testing confmat Heatmap ===")

        stdout, _ = self.run_command('confmat', self.log(lambda label: label), classes=4)
        heatmap = stdout.splitlines()[-4:]
        print("\n".join(heatmap))
        self.assertEqual(heatmap, ["0 |@   |", "1 | @  |", "2 |  @ |", "3 |   @|"])

        print("✅ confmat Heatmap Test PASSED!")

    def test_head_collapse_fills_first_column(self):
        stdout, _ = self.run_command('confmat', self.log(lambda label: 0), classes=4)
        self.assertTrue(all(line == f"{k} |@   |" for k, line in enumerate(stdout.splitlines()[-4:])))
        self.assertIn("0,5,0,0,0", stdout)

    def test_csv_reingestion(self):
        csv_path = str(self.workdir / 'cm.csv')
        first, _ = self.run_command('confmat', self.log(lambda label: min(label + 1, 3)), csv_out=csv_path)
        again_path = str(self.workdir / 'cm_again.csv')
        second, _ = self.run_command('confmat', csv_path, from_csv=True, csv_out=again_path)
        self.assertEqual(first, second)
        self.assertEqual(Path(csv_path).read_text(encoding='utf-8'), Path(again_path).read_text(encoding='utf-8'))
        np.testing.assert_array_equal(
            LogParser.read_confusion_csv(csv_path).counts, LogParser.read_confusion_csv(again_path).counts,
        )
        self.assertEqual(LogParser.read_confusion_csv(csv_path).counts[2, 3], 5)

    def test_class_mismatch(self):
        log = self.write('logits.csv', "sample_id,true_label,logit_0,logit_1\na,0,1,0\n")
        self.assertExitCode(3, 'confmat', log, classes=3)


class GridCommandTestCase(WorkspaceMixin, TestCase):
    """
    pdc_simulate, pdc_experiment and pdc_variance
    """

    def test_simulation_command(self):
        config = self.write('simulation.yaml', SMALL_SIMULATION)
        out = str(self.workdir / 'simulation_out.yaml')
        stdout, _ = self.run_command('pdc_simulate', config, out=out, record=True)

        document = ReportService.load_document(Path(out).read_text(encoding='utf-8'))
        self.assertEqual(len(document['cells']), 2)
        self.assertEqual(document['metadata']['command'], 'simulate')
        self.assertEqual(document['metadata']['config']['confusabilities'], [0.5])
        balanced, skewed = document['comparison']
        self.assertLess(balanced['pdc_mean'], 1e-6)
        self.assertGreater(skewed['pdc_mean'], 0.2)
        self.assertIn('kappa=0.5', stdout)
        self.assertNotIn('np.float64(', stdout)
        self.assertIn('100.0', stdout)

        run = EvaluationRun.objects.get()
        self.assertEqual(run.command, RunCommand.SIMULATE)
        self.assertIsNone(run.pdc)

    def test_experiment_command(self):
        """
        A small experiment produces one cell per (loss, IF, seed) and a comparison row per (loss, IF)
        """
        print("\n=== Testing pdc_experiment ===")

        config = self.write('experiment.yaml', SMALL_EXPERIMENT)
        out = str(self.workdir / 'experiment_out.yaml')
        stdout, _ = self.run_command('pdc_experiment', config, out=out, workers=2)
        print(stdout)

        document = ReportService.load_document(Path(out).read_text(encoding='utf-8'))
        self.assertEqual([cell['method'] for cell in document['cells']], ['CE', 'BalCE'])
        self.assertTrue(all(cell['status'] == 'ok' for cell in document['cells']))
        self.assertEqual(len(document['comparison']), 2)
        self.assertEqual(len(document['rankings']), 1)
        self.assertIn('BalCE', stdout)

        print("✅ pdc_experiment Test PASSED!")

    def test_invalid_config_names_field(self):
        config = self.write('bad.yaml', SMALL_EXPERIMENT + "  - family: cb_ce\n    beta: 1.5\n")
        message = self.assertExitCode(2, 'pdc_experiment', config)
        self.assertIn('losses.2.beta', message)

        broken = self.write('broken.yaml', "num_classes: [3\n")
        self.assertExitCode(2, 'pdc_experiment', broken)
        self.assertExitCode(2, 'pdc_experiment', str(self.workdir / 'absent.yaml'))
        self.assertExitCode(2, 'pdc_experiment', self.write('ok.yaml', SMALL_EXPERIMENT), workers=0)

    def test_all_cells_failing(self):
        diverging = SMALL_EXPERIMENT.replace("epochs: 50", "epochs: 200\nweight_decay: 1.0\nlearning_rate: 10000.0")
        out = str(self.workdir / 'failed.yaml')
        self.assertExitCode(3, 'pdc_experiment', self.write('diverging.yaml', diverging), out=out)
        document = ReportService.load_document(Path(out).read_text(encoding='utf-8'))
        self.assertTrue(all(cell['status'] == 'failed' for cell in document['cells']))

    def test_variance_across_reports(self):
        head_out = str(self.workdir / 'head.yaml')
        spread_out = str(self.workdir / 'spread.yaml')
        self.run_command('pdc_eval', HEAD_LOG, TRAIN_COUNTS, out=head_out)
        self.run_command('pdc_eval', SPREAD_LOG, TRAIN_COUNTS, out=spread_out)

        stdout, _ = self.run_command('pdc_variance', head_out, spread_out)
        pdcs = [ReportService.load_document(Path(p).read_text(encoding='utf-8'))['metrics']['pdc']
                for p in (head_out, spread_out)]
        printed = [line for line in stdout.splitlines() if line.startswith('variance ')][0]
        self.assertEqual(float(printed.split()[1]), MetricsService.pdc_variance(pdcs))
        self.assertAlmostEqual(float(printed.split()[1]), (pdcs[0] - pdcs[1]) ** 2 / 2, places=12)
        self.assertIn('variance (2 d.p.) 0.00', stdout)

        self.assertExitCode(2, 'pdc_variance', head_out)
        self.assertExitCode(2, 'pdc_variance', head_out, self.write('empty.yaml', "format: x\n"))
        message = self.assertExitCode(2, 'pdc_variance', head_out, self.write('partial.yaml', "metrics:\n  pdc: 0.1\n"))
        self.assertIn('partial.yaml', message)


class EvaluationRunAPITestCase(TestCase):
    """
    Read-only API over recorded runs
    """

    def setUp(self):
        self.client = APIClient()
        self.user = User.objects.create_user(username='analyst', password='analyst-pass-123')
        document = {'metadata': {
            'tool_version': '1.0.0', 'inputs': {'predictions': {'path': 'p.csv', 'sha256': 'ab' * 32}},
            'num_classes': 4, 'num_test': 400,
        }}
        self.eval_run = ReportService.record_run(RunCommand.EVAL, document, "format: pdc-report/1\n",
                                                 pdc=0.06, top1=0.7)
        ReportService.record_run(RunCommand.EXPERIMENT, document, "format: pdc-report/1\n")

    def test_requires_authentication(self):
        response = self.client.get('/api/evaluations/')
        self.assertEqual(response.status_code, status.HTTP_401_UNAUTHORIZED)

    def test_list_and_filter(self):
        self.client.force_authenticate(user=self.user)
        response = self.client.get('/api/evaluations/')
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data['count'], 2)
        self.assertNotIn('document', response.data['results'][0])

        response = self.client.get('/api/evaluations/', {'command': 'eval'})
        self.assertEqual(response.data['count'], 1)
        self.assertEqual(response.data['results'][0]['pdc'], 0.06)

    def test_retrieve_includes_document(self):
        self.client.force_authenticate(user=self.user)
        response = self.client.get(f'/api/evaluations/{self.eval_run.id}/')
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data['document'], "format: pdc-report/1\n")
        self.assertEqual(response.data['command_display'], 'Evaluate prediction log')

    def test_jwt_token(self):
        response = self.client.post('/api/token/', {'username': 'analyst', 'password': 'analyst-pass-123'},
                                    format='json')
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.client.credentials(HTTP_AUTHORIZATION=f"Bearer {response.data['access']}")
        self.assertEqual(self.client.get('/api/evaluations/').status_code, status.HTTP_200_OK)

    def test_str(self):
        self.assertIn('PDC=0.0600', str(self.eval_run))
