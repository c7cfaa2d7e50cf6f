"""
Test Cases for desk-scale training and the loss-comparison experiment
"""
import math

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from distributions.services import DistributionService
from losses.types import LossSpec
from ltdata.services import ProfileService, SyntheticDataService
from ltdata.types import LTProfile, SyntheticDataset
from metrics.services import MetricsService
from trainer.services import ExperimentService, TrainingService
from trainer.types import ExperimentConfig, LinearModel, LossTemplate, SimulationConfig, TrainConfig
from utils.enums import ErrorCode, LossFamily


def _separable_pair():
    return SyntheticDataService.synth_gaussian_mixture(2, 2, 5.0, LTProfile.flat(2, 50), 0.1, seed=0)


def _accuracy(model, data):
    records = TrainingService.evaluate(model, data.features, data.labels)
    return MetricsService.top1_accuracy(DistributionService.confusion_from_log(records, data.num_classes))


class TrainingTestCase(SimpleTestCase):
    """
    Gradient-descent training of the linear classifier
    """

    def test_separable_classes(self):
        """
        Two well-separated clusters are fit perfectly by CE
        """
        print("\n=== Testing Training on Separable Data ===")

        data = _separable_pair()
        model = TrainingService.train(data, TrainConfig(loss=LossSpec.ce(), epochs=300, learning_rate=0.5,
                                                        weight_decay=0.0))
        accuracy = _accuracy(model, data)
        print(f"train accuracy {accuracy}, final loss {model.loss_history[-1]:.6f}")
        self.assertEqual(accuracy, 1.0)
        self.assertEqual(len(model.loss_history), 300)
        self.assertTrue(all(math.isfinite(v) for v in model.loss_history))

        print("✅ Separable Training Test PASSED!")

    def test_bitwise_reproducible(self):
        profile = ProfileService.exp_profile(4, 60, 6)
        data = SyntheticDataService.synth_gaussian_mixture(4, 5, 2.0, profile, 1.0, seed=1)
        for batch_size in (None, 16):
            cfg = TrainConfig(loss=LossSpec.cb_ce(profile.counts, beta=0.99), epochs=40,
                              learning_rate=0.1, batch_size=batch_size, seed=3)
            first = TrainingService.train(data, cfg)
            second = TrainingService.train(data, cfg)
            self.assertEqual(first.weights.tobytes(), second.weights.tobytes())
            self.assertEqual(first.bias.tobytes(), second.bias.tobytes())
            self.assertEqual(first.loss_history, second.loss_history)

    def test_small_learning_rate_loss_nonincreasing(self):
        profile = ProfileService.exp_profile(3, 20, 4)
        data = SyntheticDataService.synth_gaussian_mixture(3, 4, 2.0, profile, 1.0, seed=2)
        model = TrainingService.train(data, TrainConfig(loss=LossSpec.ce(), epochs=200, learning_rate=1e-3))
        self.assertTrue(np.all(np.diff(model.loss_history) <= 0))

    def test_divergence_reports_epoch(self):
        """
        An unstable step size blows up and names the epoch
        """
        data = _separable_pair()
        cfg = TrainConfig(loss=LossSpec.ce(), epochs=500, learning_rate=1e4, weight_decay=1.0)
        with self.assertRaises(ValidationError) as ctx:
            TrainingService.train(data, cfg)
        self.assertEqual(ctx.exception.code, ErrorCode.DIVERGED)
        self.assertGreater(ctx.exception.params['epoch'], 1)
        self.assertIn('epoch', ctx.exception.messages[0])

    def test_config_validation(self):
        for kwargs in ({'epochs': 0}, {'epochs': 200_000}, {'learning_rate': 0.0},
                       {'weight_decay': -1.0}, {'batch_size': 0}, {'seed': -1}):
            with self.assertRaises(ValidationError) as ctx:
                TrainConfig(loss=LossSpec.ce(), **kwargs)
            self.assertEqual(ctx.exception.code, ErrorCode.INVALID_PARAMETER)

    def test_grid_configs_reject_non_positive_epsilon(self):
        templates = [LossTemplate(family='ce')]
        for kwargs in ({'epsilon': 0.0}, {'epsilon': -1e-6}, {'alpha': 0.0}):
            with self.assertRaises(ValidationError) as ctx:
                ExperimentConfig(num_classes=3, dim=4, imbalance_factors=[1, 10], losses=templates,
                                 seeds=[0], **kwargs)
            self.assertEqual(ctx.exception.code, ErrorCode.INVALID_PARAMETER)
            with self.assertRaises(ValidationError) as ctx:
                SimulationConfig(num_classes=3, imbalance_factors=[1], confusabilities=[0.5], seeds=[0], **kwargs)
            self.assertEqual(ctx.exception.code, ErrorCode.INVALID_PARAMETER)


class EvaluateTestCase(SimpleTestCase):

    def test_zero_model_predicts_class_zero(self):
        model = LinearModel.zeros(3, 4)
        records = TrainingService.evaluate(model, np.ones((5, 4)), [0, 1, 2, 1, 0])
        self.assertEqual(len(records), 5)
        self.assertEqual({record.predicted_label for record in records}, {0})
        self.assertEqual(records[3].logits.tolist(), [0.0, 0.0, 0.0])

    def test_nearest_mean_model_on_noiseless_data(self):
        means = SyntheticDataService.class_means(5, 6, 2.0, seed=4)
        model = LinearModel(weights=means, bias=-0.5 * np.sum(means * means, axis=1))
        data = SyntheticDataset(features=np.repeat(means, 3, axis=0), labels=np.repeat(np.arange(5), 3),
                                class_means=means, noise_sigma=0.0, seed=4, profile=LTProfile.flat(5, 3))
        self.assertEqual(_accuracy(model, data), 1.0)

    def test_record_count_matches_test_set(self):
        rng = np.random.default_rng(0)
        model = LinearModel(weights=rng.normal(size=(4, 3)), bias=rng.normal(size=4))
        for size in (1, 7, 64):
            records = TrainingService.evaluate(model, rng.normal(size=(size, 3)), rng.integers(0, 4, size=size))
            self.assertEqual(len(records), size)
            self.assertTrue(all(record.has_logits for record in records))

    def test_dimension_mismatch(self):
        with self.assertRaises(ValidationError) as ctx:
            TrainingService.evaluate(LinearModel.zeros(3, 4), np.ones((2, 5)), [0, 1])
        self.assertEqual(ctx.exception.code, ErrorCode.DIMENSION_MISMATCH)

    def test_model_rejects_non_finite(self):
        with self.assertRaises(ValidationError) as ctx:
            LinearModel(weights=[[np.inf, 0.0], [0.0, 0.0]], bias=[0.0, 0.0])
        self.assertEqual(ctx.exception.code, ErrorCode.DIVERGED)


class LossTemplateTestCase(SimpleTestCase):

    def test_bind_uses_profile_counts(self):
        profile = ProfileService.exp_profile(3, 100, 10)
        cb = LossTemplate(family='cb_ce', beta=0.9).bind(profile)
        self.assertEqual(cb.class_counts, profile.counts)
        self.assertEqual(cb.beta, 0.9)

        balanced = LossTemplate(family='balce').bind(profile)
        np.testing.assert_allclose(balanced.prior.probabilities, np.array(profile.counts) / profile.total)

        adjusted = LossTemplate(family='ce', tau=1.0).bind(profile)
        self.assertEqual(adjusted.family, LossFamily.CE)
        self.assertEqual(adjusted.tau, 1.0)
        self.assertEqual(LossTemplate(family='ce', tau=1.0).label, 'CE+LA(tau=1)')

    def test_duplicate_labels_rejected(self):
        with self.assertRaises(ValidationError) as ctx:
            ExperimentConfig(num_classes=3, dim=4, imbalance_factors=[10], seeds=[0],
                             losses=[LossTemplate(family='ce'), LossTemplate(family='ce')])
        self.assertEqual(ctx.exception.code, ErrorCode.INVALID_PARAMETER)


class ExperimentTestCase(SimpleTestCase):
    """
    Loss comparison on synthetic long-tailed data
    """

    def test_balanced_training_has_no_bias(self):
        """
        IF=1: CE predictions match the balanced target and BalCE matches CE
        """
        print("\n=== Testing Balanced Experiment ===")

        config = ExperimentConfig(
            num_classes=10, dim=20, imbalance_factors=[1], seeds=[0], epochs=300,
            losses=[LossTemplate(family='ce'), LossTemplate(family='balce')],
        )
        result = ExperimentService.run_experiment(config)
        ce = result.cells[0].report
        balanced = result.cells[1].report
        print(f"CE kl_pred_target={ce.kl_pred_target:.5f} top1={ce.top1_acc:.4f}")
        self.assertEqual([cell.method for cell in result.cells], ['CE', 'BalCE'])
        self.assertLess(ce.kl_pred_target, 0.02)
        self.assertLess(abs(ce.kl_pred_target - balanced.kl_pred_target), 0.02)
        self.assertLess(abs(ce.top1_acc - balanced.top1_acc), 0.01)

        print("✅ Balanced Experiment Test PASSED!")

    def test_ordinal_pattern_at_if_100(self):
        """
        Five seeds at IF=100: PDC(CE) > PDC(CB-CE) > PDC(BalCE), and BalCE is at
        least as accurate as CE on the balanced test set. beta=0.98 gives a
        head/tail weight ratio near 10, halfway between CE and BalCE on a log scale.
        """
        print("\n=== Testing Loss Ordering at IF=100 ===")

        config = ExperimentConfig(
            num_classes=10, dim=20, imbalance_factors=[100], seeds=[0, 1, 2, 3, 4],
            n_max=500, separation=3.0, noise_sigma=1.0, test_per_class=200,
            epochs=1500, learning_rate=0.05, weight_decay=5e-4,
            losses=[LossTemplate(family='ce'), LossTemplate(family='cb_ce', beta=0.98),
                    LossTemplate(family='balce')],
        )
        result = ExperimentService.run_experiment(config)
        ce, cb, balanced = (result.row(method, 100) for method in ('CE', 'CB-CE', 'BalCE'))
        for row in (ce, cb, balanced):
            print(f"{row.method:>6}: pdc {row.pdc_mean:.4f} +- {row.pdc_sd:.4f}  top1 {row.top1_mean:.4f}")
        print(f"margins: CE - CB-CE {ce.pdc_mean - cb.pdc_mean:.4f}, CB-CE - BalCE {cb.pdc_mean - balanced.pdc_mean:.4f}")

        self.assertEqual(result.failures, [])
        self.assertGreater(ce.pdc_mean, cb.pdc_mean)
        self.assertGreater(cb.pdc_mean, balanced.pdc_mean)
        self.assertGreaterEqual(balanced.top1_mean, ce.top1_mean)
        self.assertEqual(ce.completed, 5)

        print("✅ Loss Ordering Test PASSED!")

    def test_if_sweep_reports_variance(self):
        config = ExperimentConfig(
            num_classes=4, dim=6, imbalance_factors=[10, 50, 100], seeds=[0], n_max=200,
            test_per_class=50, epochs=100,
            losses=[LossTemplate(family='ce'), LossTemplate(family='balce')],
        )
        result = ExperimentService.run_experiment(config)
        self.assertEqual(len(result.rows), 6)
        for method in ('CE', 'BalCE'):
            means = [result.row(method, f).pdc_mean for f in (10, 50, 100)]
            self.assertAlmostEqual(result.pdc_variance[method], float(np.var(means, ddof=1)), places=14)
        self.assertEqual(set(result.rankings), {10.0, 50.0, 100.0})

    def test_failed_cell_does_not_abort_table(self):
        """
        A diverging loss is recorded on its cells; the other losses still report
        """
        config = ExperimentConfig(
            num_classes=3, dim=4, imbalance_factors=[10], seeds=[0, 1], n_max=50,
            test_per_class=20, epochs=200, weight_decay=1.0, learning_rate=0.05,
            losses=[LossTemplate(family='ce'), LossTemplate(family='bce', learning_rate=1e4)],
        )
        result = ExperimentService.run_experiment(config)
        self.assertEqual(len(result.cells), 4)
        self.assertEqual(len(result.failures), 2)
        self.assertTrue(all(cell.method == 'BCE' for cell in result.failures))
        self.assertIn('diverged', result.failures[0].error)

        bce = result.row('BCE', 10)
        self.assertEqual((bce.completed, bce.failed), (0, 2))
        self.assertTrue(math.isnan(bce.pdc_mean))
        self.assertEqual(result.row('CE', 10).completed, 2)
        self.assertEqual(result.rankings, {})

    def test_workers_do_not_change_results(self):
        kwargs = dict(
            num_classes=3, dim=4, imbalance_factors=[5, 20], seeds=[0, 1], n_max=60,
            test_per_class=20, epochs=60,
            losses=[LossTemplate(family='ce'), LossTemplate(family='ldam', learning_rate=0.005)],
        )
        serial = ExperimentService.run_experiment(ExperimentConfig(workers=1, **kwargs))
        threaded = ExperimentService.run_experiment(ExperimentConfig(workers=3, **kwargs))
        self.assertEqual(
            [(c.method, c.imbalance_factor, c.seed, c.report.pdc) for c in serial.cells],
            [(c.method, c.imbalance_factor, c.seed, c.report.pdc) for c in threaded.cells],
        )

    def test_post_hoc_adjustment_reduces_bias(self):
        config = ExperimentConfig(
            num_classes=10, dim=20, imbalance_factors=[100], seeds=[0], epochs=400,
            losses=[LossTemplate(family='ce'), LossTemplate(family='ce', tau=1.0)],
        )
        result = ExperimentService.run_experiment(config)
        self.assertLess(result.row('CE+LA(tau=1)', 100).pdc_mean, result.row('CE', 100).pdc_mean)


class SimulationTestCase(SimpleTestCase):

    def test_simulation_grid(self):
        config = SimulationConfig(num_classes=10, imbalance_factors=[1, 10, 100], confusabilities=[0.5], seeds=[0, 1])
        result = ExperimentService.run_simulation(config)
        balanced = result.row('kappa=0.5', 1)
        skewed = result.row('kappa=0.5', 100)
        self.assertLessEqual(balanced.pdc_mean, result.row('kappa=0.5', 10).pdc_mean)
        self.assertLessEqual(result.row('kappa=0.5', 10).pdc_mean, skewed.pdc_mean)
        self.assertLess(balanced.pdc_mean, 1e-6)
        self.assertGreater(skewed.pdc_mean, 0.2)
        self.assertEqual(balanced.completed, 2)
        self.assertIsNotNone(result.pdc_variance['kappa=0.5'])
