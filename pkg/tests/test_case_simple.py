#!/usr/bin/env python
"""
Simple end-to-end scenario for the PDC toolkit
Requirements:
- 10-class balanced label pool, long-tailed split at IF=100
- CE, CB-CE and BalCE trained on synthetic data of the same profile
- prediction logs written to disk and re-evaluated through pdc_eval
- PDC variance across the three reports

Run from the project root:  python tests/test_case_simple.py [--workers=4]
"""

import os
import sys
import time
import tempfile
from io import StringIO
from pathlib import Path

import django

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'config.settings')
django.setup()

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError

from ltdata.services import ProfileService, SyntheticDataService
from reports.services import ReportService
from trainer.services import ExperimentService, TrainingService
from trainer.types import ExperimentConfig, LossTemplate, TrainConfig

NUM_CLASSES = 10
DIM = 20
N_MAX = 500
IMBALANCE_FACTOR = 100
TEST_PER_CLASS = 200


class SimplePDCTestCase:
    """
    Split, train, log, evaluate; then check the reports agree with the in-memory run
    """

    def __init__(self, workdir: Path):
        self.workdir = workdir
        self.results = {
            'split_total': 0,
            'logs_written': 0,
            'reports': {},
            'errors': []
        }

    def build_split(self):
        """Write a balanced label pool and cut an IF=100 split from it"""
        print("🔧 Building long-tailed split...")

        labels = np.repeat(np.arange(NUM_CLASSES), N_MAX)
        np.random.default_rng(0).shuffle(labels)
        pool = self.workdir / 'pool.csv'
        pool.write_text("label\n" + "\n".join(str(v) for v in labels) + "\n", encoding='utf-8')

        out = self.workdir / 'split.csv'
        try:
            call_command('lt_split', str(pool), classes=NUM_CLASSES, n_max=N_MAX,
                         imbalance_factor=IMBALANCE_FACTOR, seed=0, out=str(out), stdout=StringIO())
        except CommandError as e:
            self.results['errors'].append(f"lt_split failed ({e.returncode}): {e}")
            return None

        stats = ReportService.load_document(Path(f"{out}.stats.yaml").read_text(encoding='utf-8'))
        self.results['split_total'] = stats['total']
        print(f"✅ Split of {stats['total']} samples, head {stats['class_counts'][0]}, "
              f"tail {stats['class_counts'][-1]}")

        counts = self.workdir / 'train_counts.csv'
        counts.write_text(
            "class_id,count\n" + "".join(f"{k},{n}\n" for k, n in enumerate(stats['class_counts'])),
            encoding='utf-8',
        )
        return counts

    def train_and_log(self, templates):
        """Train one model per loss and write its logits to a prediction log"""
        print("\n🏋️ Training models...")

        profile = ProfileService.exp_profile(NUM_CLASSES, N_MAX, IMBALANCE_FACTOR)
        train = SyntheticDataService.synth_gaussian_mixture(NUM_CLASSES, DIM, 3.0, profile, 1.0, seed=0)
        test = SyntheticDataService.balanced_test_set(train, TEST_PER_CLASS)

        logs = {}
        for template in templates:
            started = time.time()
            try:
                model = TrainingService.train(train, TrainConfig(loss=template.bind(profile), seed=0))
            except Exception as e:
                self.results['errors'].append(f"{template.label} training error: {e}")
                continue
            records = TrainingService.evaluate(model, test.features, test.labels)

            header = "sample_id,true_label," + ",".join(f"logit_{k}" for k in range(NUM_CLASSES))
            rows = [f"{r.sample_id},{r.true_label}," + ",".join(repr(z) for z in r.predicted) for r in records]
            path = self.workdir / f"{template.label}.csv"
            path.write_text(header + "\n" + "\n".join(rows) + "\n", encoding='utf-8')
            logs[template.label] = path
            self.results['logs_written'] += 1
            print(f"✅ {template.label}: final loss {model.loss_history[-1]:.4f} "
                  f"({time.time() - started:.2f}s)")
        return logs

    def evaluate_logs(self, logs, train_counts):
        print("\n📊 Evaluating prediction logs...")

        for label, path in logs.items():
            out = self.workdir / f"{label}.yaml"
            try:
                call_command('pdc_eval', str(path), str(train_counts), out=str(out), stdout=StringIO())
            except CommandError as e:
                self.results['errors'].append(f"pdc_eval {label} failed ({e.returncode}): {e}")
                continue
            document = ReportService.load_document(out.read_text(encoding='utf-8'))
            self.results['reports'][label] = out
            metrics = document['metrics']
            print(f"   {label:>6}: top1 {metrics['top1_acc']:.4f}  pdc {metrics['pdc']:.4f}  "
                  f"kl_pred_target {metrics['kl_pred_target']:.5f}")

    def verify_against_experiment(self, templates, workers):
        """The experiment service must reproduce the numbers read back from disk"""
        print("\n🔍 Verifying reports against the experiment service...")

        config = ExperimentConfig(
            num_classes=NUM_CLASSES, dim=DIM, imbalance_factors=[IMBALANCE_FACTOR],
            losses=templates, seeds=[0], n_max=N_MAX, test_per_class=TEST_PER_CLASS, workers=workers,
        )
        result = ExperimentService.run_experiment(config)
        mismatches = []
        for cell in result.cells:
            out = self.results['reports'].get(cell.method)
            if out is None or not cell.ok:
                continue
            stored = ReportService.load_document(out.read_text(encoding='utf-8'))['metrics']['pdc']
            # logs hold repr() logits, so the confusion matrix and every metric match exactly
            if stored != cell.report.pdc:
                mismatches.append(f"{cell.method}: report {stored!r} vs experiment {cell.report.pdc!r}")
                print(f"   ❌ {mismatches[-1]}")
            else:
                print(f"   ✅ {cell.method} PDC matches ({stored:.6f})")

        pdcs = {row.method: row.pdc_mean for row in result.rows}
        if not pdcs.get('CE', 0) > pdcs.get('CB-CE', 0) > pdcs.get('BalCE', 0):
            mismatches.append(f"PDC ordering CE > CB-CE > BalCE does not hold: {pdcs}")
            print(f"   ❌ {mismatches[-1]}")
        return mismatches

    def print_variance(self):
        paths = [str(p) for p in self.results['reports'].values()]
        if len(paths) < 2:
            return
        out = StringIO()
        call_command('pdc_variance', *paths, stdout=out)
        print("\n" + out.getvalue().strip())

    def print_final_report(self):
        print("\n" + "="*60)
        print("📋 FINAL TEST REPORT")
        print("="*60)

        print(f"✂️ Split Samples: {self.results['split_total']}")
        print(f"📝 Prediction Logs Written: {self.results['logs_written']}")
        print(f"📊 Reports Evaluated: {len(self.results['reports'])}")

        if self.results['errors']:
            print(f"\n❌ Errors Encountered: {len(self.results['errors'])}")
            for error in self.results['errors'][:10]:
                print(f"   - {error}")
        else:
            print("\n✅ No errors encountered")

    def run_test(self, workers=1):
        start_time = time.time()
        print("🚀 Starting PDC Toolkit Test Case")
        print("="*60)

        templates = [
            LossTemplate(family='ce'),
            LossTemplate(family='cb_ce', beta=0.98),
            LossTemplate(family='balce'),
        ]
        try:
            train_counts = self.build_split()
            if train_counts is None:
                self.print_final_report()
                return False
            logs = self.train_and_log(templates)
            self.evaluate_logs(logs, train_counts)
            mismatches = self.verify_against_experiment(templates, workers)
            self.print_variance()
            self.print_final_report()

            print(f"\n⏱️ Total Execution Time: {time.time() - start_time:.2f} seconds")

            if mismatches or self.results['errors']:
                print("\n❌ TEST FAILED")
                return False
            print("\n✅ TEST PASSED: reports, experiment and ordering agree")
            return True

        except Exception as e:
            print(f"\n❌ TEST FAILED with exception: {e}")
            return False


def main():
    workers = 1
    for arg in sys.argv[1:]:
        if arg.startswith('--workers='):
            workers = int(arg.split('=', 1)[1])

    print("PDC Toolkit - Simple Test Case")
    print(f"IF={IMBALANCE_FACTOR}, C={NUM_CLASSES}, d={DIM}, workers={workers}")
    print()

    with tempfile.TemporaryDirectory() as tmp:
        success = SimplePDCTestCase(Path(tmp)).run_test(workers=workers)

    print("\n🎯 ALL CHECKS PASSED!" if success else "\n❌ SOME CHECKS FAILED! Please review the issues above.")
    return success


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
