"""
Test Cases for KL divergence, PDC and the accuracy family
"""
import math

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase, override_settings

from distributions.types import ClassDistribution, ConfusionMatrix, GroupSpec, PredictionRecord
from metrics.services import MetricsService
from metrics.types import MethodScore
from utils.enums import ErrorCode, GroupAccuracyMode

HEAD_BIASED = [[70, 10, 10, 10], [30, 70, 0, 0], [30, 0, 70, 0], [30, 0, 0, 70]]
SPREAD = [[70, 10, 10, 10], [14, 70, 8, 8], [14, 8, 70, 8], [14, 8, 8, 70]]
TRAP_TRAIN_COUNTS = [500, 150, 50, 10]


def _probs(values):
    return ClassDistribution.from_probabilities(np.asarray(values, dtype=np.float64))


def _direct_kl(p, q):
    total = 0.0
    for p_i, q_i in zip(p, q):
        if p_i > 0:
            total += p_i * (math.log(p_i) - math.log(q_i))
    return total


def _random_distribution(rng, num_classes):
    values = rng.dirichlet(np.ones(num_classes))
    values = np.maximum(values, 1e-9)
    return values / values.sum()


class KLDivergenceTestCase(SimpleTestCase):
    """
    KL divergence values and properties
    """

    def test_reference_values(self):
        """
        Two-class values against direct summation
        """
        print("\n=== Testing KL Divergence ===")

        half = _probs([0.5, 0.5])
        self.assertEqual(MetricsService.kl_divergence(half, half), 0.0)
        self.assertAlmostEqual(MetricsService.kl_divergence(half, _probs([0.9, 0.1])), 0.5108256237659907, places=12)
        self.assertAlmostEqual(MetricsService.kl_divergence(half, _probs([0.75, 0.25])), 0.1438410362258904, places=12)

        print("✅ KL Reference Values Test PASSED!")

    def test_zero_mass_terms_contribute_nothing(self):
        value = MetricsService.kl_divergence(_probs([1.0, 0.0]), _probs([0.5, 0.5]))
        self.assertAlmostEqual(value, math.log(2), places=14)

    def test_absolute_continuity(self):
        with self.assertRaises(ValidationError) as ctx:
            MetricsService.kl_divergence(_probs([0.5, 0.5]), _probs([1.0, 0.0]))
        self.assertEqual(ctx.exception.code, ErrorCode.ABSOLUTE_CONTINUITY)

    def test_dimension_mismatch(self):
        with self.assertRaises(ValidationError) as ctx:
            MetricsService.kl_divergence(ClassDistribution.uniform(2), ClassDistribution.uniform(3))
        self.assertEqual(ctx.exception.code, ErrorCode.DIMENSION_MISMATCH)

    def test_nonnegative_and_identity(self):
        """
        D(p, q) >= 0 on random pairs; D(p, p) = 0
        """
        rng = np.random.default_rng(11)
        for _ in range(200):
            num_classes = int(rng.integers(2, 30))
            p = _probs(_random_distribution(rng, num_classes))
            q = _probs(_random_distribution(rng, num_classes))
            self.assertGreaterEqual(MetricsService.kl_divergence(p, q), 0.0)
            self.assertLessEqual(MetricsService.kl_divergence(p, p), 1e-12)

    def test_monotone_bias_path(self):
        """
        Moving predictions from the target toward another distribution never lowers KL
        """
        print("\n=== Testing Monotone Bias Path ===")

        rng = np.random.default_rng(5)
        grid = np.linspace(0.0, 1.0, 21)
        for trial in range(100):
            num_classes = int(rng.integers(2, 20))
            target = np.full(num_classes, 1.0 / num_classes) if trial % 2 == 0 else _random_distribution(rng, num_classes)
            other = _random_distribution(rng, num_classes)
            path = [
                MetricsService.kl_divergence(_probs(target), _probs((1 - t) * target + t * other))
                for t in grid
            ]
            self.assertTrue(np.all(np.diff(path) >= -1e-15), f"trial {trial}: {path}")

        print("✅ Monotone Bias Path Test PASSED!")


class PDCTestCase(SimpleTestCase):
    """
    Predictive distribution calibration
    """

    def test_two_class_example(self):
        value = MetricsService.pdc(_probs([0.9, 0.1]), _probs([0.75, 0.25]), _probs([0.5, 0.5]))
        self.assertAlmostEqual(value, 0.1438410362258904 / (0.5108256237659907 + 1e-6), places=12)
        self.assertAlmostEqual(value, 0.28159, delta=1e-5)

    def test_matches_direct_oracle(self):
        """
        1000 random triples with C in 2..50 against a loop-based KL ratio
        """
        print("\n=== Testing PDC Oracle ===")

        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(1000):
            num_classes = int(rng.integers(2, 51))
            target = _random_distribution(rng, num_classes)
            predicted = _random_distribution(rng, num_classes)
            train = _random_distribution(rng, num_classes)
            expected = _direct_kl(target, predicted) / (_direct_kl(target, train) + 1e-6)
            value = MetricsService.pdc(_probs(train), _probs(predicted), _probs(target))
            error = abs(value - expected) / max(1.0, abs(expected))
            worst = max(worst, error)
            self.assertLessEqual(error, 1e-10)

        print(f"Worst relative error: {worst:.3e}")
        print("✅ PDC Oracle Test PASSED!")

    def test_anchor_points(self):
        """
        Uniform predictions give exactly 0; predictions mirroring the train prior give about 1
        """
        print("\n=== Testing PDC Anchors ===")

        rng = np.random.default_rng(9)
        for _ in range(50):
            num_classes = int(rng.integers(2, 40))
            uniform = ClassDistribution.uniform(num_classes)
            train = _probs(_random_distribution(rng, num_classes))
            self.assertEqual(MetricsService.pdc(train, uniform, uniform), 0.0)

            kl_train = MetricsService.kl_divergence(uniform, train)
            if kl_train >= 0.01:
                value = MetricsService.pdc(train, train, uniform)
                self.assertGreaterEqual(value, 1 - 1e-4)
                self.assertLessEqual(value, 1.0)

        print("✅ PDC Anchors Test PASSED!")

    def test_permutation_invariance(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            num_classes = int(rng.integers(2, 25))
            train, predicted, target = (_random_distribution(rng, num_classes) for _ in range(3))
            order = rng.permutation(num_classes)
            plain = MetricsService.pdc(_probs(train), _probs(predicted), _probs(target))
            permuted = MetricsService.pdc(_probs(train[order]), _probs(predicted[order]), _probs(target[order]))
            self.assertAlmostEqual(plain, permuted, delta=1e-12 * max(1.0, plain))

    def test_raw_counts_equal_normalized(self):
        train = [500, 150, 50, 10]
        predicted = [160.5, 80.5, 80.5, 80.5]
        target = [100, 100, 100, 100]
        from_counts = MetricsService.pdc(
            ClassDistribution.from_counts(train), ClassDistribution.from_counts(predicted),
            ClassDistribution.from_counts(target),
        )
        normalized = MetricsService.pdc(
            _probs(np.divide(train, sum(train))), _probs(np.divide(predicted, sum(predicted))),
            _probs(np.divide(target, sum(target))),
        )
        self.assertAlmostEqual(from_counts, normalized, places=12)

    def test_input_errors(self):
        with self.assertRaises(ValidationError) as ctx:
            MetricsService.pdc(ClassDistribution.uniform(3), ClassDistribution.uniform(2), ClassDistribution.uniform(3))
        self.assertEqual(ctx.exception.code, ErrorCode.DIMENSION_MISMATCH)

        with self.assertRaises(ValidationError) as ctx:
            MetricsService.pdc(_probs([0.5, 0.5]), _probs([0.5, 0.5]), _probs([1.0, 0.0]))
        self.assertEqual(ctx.exception.code, ErrorCode.INCONSISTENT_INPUT)

        with self.assertRaises(ValidationError) as ctx:
            MetricsService.pdc(ClassDistribution.from_counts([0, 0]), _probs([0.5, 0.5]), _probs([0.5, 0.5]))
        self.assertEqual(ctx.exception.code, ErrorCode.EMPTY_DISTRIBUTION)

    def test_non_positive_epsilon_rejected(self):
        """
        With P_s = P_t the train/target KL is 0, so epsilon is the whole denominator
        """
        for epsilon in (0.0, -1.0):
            with self.assertRaises(ValidationError) as ctx:
                MetricsService.pdc(_probs([0.5, 0.5]), _probs([0.6, 0.4]), _probs([0.5, 0.5]), epsilon=epsilon)
            self.assertEqual(ctx.exception.code, ErrorCode.INVALID_PARAMETER)

    @override_settings(PDC_EPSILON=1e-3)
    def test_epsilon_from_settings(self):
        value = MetricsService.pdc(_probs([0.9, 0.1]), _probs([0.75, 0.25]), _probs([0.5, 0.5]))
        self.assertAlmostEqual(value, 0.1438410362258904 / (0.5108256237659907 + 1e-3), places=12)


class SmoothingAndAccuracyTestCase(SimpleTestCase):
    """
    Smoothing, top-1, per-class recall and group accuracy
    """

    def test_smoothing(self):
        smoothed = MetricsService.smooth_predictions([0, 10], alpha=0.5)
        np.testing.assert_allclose(smoothed.probabilities, [0.5 / 11, 10.5 / 11], atol=1e-15)

        tiny = MetricsService.smooth_predictions([5, 5], alpha=1e-9)
        np.testing.assert_allclose(tiny.probabilities, [0.5, 0.5], atol=1e-15)

        for alpha in (0.0, -1.0):
            with self.assertRaises(ValidationError) as ctx:
                MetricsService.smooth_predictions([1, 2], alpha=alpha)
            self.assertEqual(ctx.exception.code, ErrorCode.INVALID_PARAMETER)

    def test_smoothing_keeps_pdc_finite(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            num_classes = int(rng.integers(2, 20))
            counts = rng.integers(0, 5, size=num_classes)
            counts[0] += 1
            smoothed = MetricsService.smooth_predictions(counts)
            value = MetricsService.pdc(ClassDistribution.from_counts(rng.integers(1, 100, size=num_classes)),
                                       smoothed, ClassDistribution.uniform(num_classes))
            self.assertTrue(math.isfinite(value))

    def test_top1(self):
        self.assertEqual(MetricsService.top1_accuracy(ConfusionMatrix(counts=np.diag([10, 10]))), 1.0)
        self.assertAlmostEqual(MetricsService.top1_accuracy(ConfusionMatrix(counts=[[1, 1], [0, 1]])), 2 / 3)
        with self.assertRaises(ValidationError):
            MetricsService.top1_accuracy(ConfusionMatrix.zeros(2))

    def test_top1_of_random_guessing(self):
        """
        Uniform random predictions land within 3 sigma of 1/C
        """
        rng = np.random.default_rng(31)
        num_classes, total = 10, 20000
        labels = rng.integers(0, num_classes, size=total)
        guesses = rng.integers(0, num_classes, size=total)
        counts = np.zeros((num_classes, num_classes), dtype=int)
        np.add.at(counts, (labels, guesses), 1)
        accuracy = MetricsService.top1_accuracy(ConfusionMatrix(counts=counts))
        sigma = math.sqrt(0.1 * 0.9 / total)
        self.assertLess(abs(accuracy - 0.1), 3 * sigma)

    def test_top1_is_weighted_mean_of_recall(self):
        cm = ConfusionMatrix(counts=[[8, 2, 0], [1, 3, 1], [0, 0, 5]])
        recall = MetricsService.per_class_recall(cm)
        weights = cm.row_sums / cm.total
        self.assertAlmostEqual(MetricsService.top1_accuracy(cm), float(np.sum(recall * weights)), places=14)

    def test_recall_nan_for_absent_class(self):
        recall = MetricsService.per_class_recall(ConfusionMatrix(counts=[[3, 1], [0, 0]]))
        self.assertEqual(recall[0], 0.75)
        self.assertTrue(math.isnan(recall[1]))

    def test_group_accuracy_singleton_groups(self):
        """
        Recalls (0.9, 0.5, 1.0) on singleton groups come back unchanged
        """
        print("\n=== Testing Group Accuracy ===")

        cm = ConfusionMatrix(counts=[[9, 1, 0], [5, 5, 0], [0, 0, 10]])
        train = ClassDistribution.from_counts([500, 50, 5])
        groups = MetricsService.group_accuracy(cm, train, GroupSpec())
        self.assertEqual(groups.as_tuple(), (0.9, 0.5, 1.0))

        print(f"Many/Medium/Few: {groups.as_tuple()}")
        print("✅ Group Accuracy Test PASSED!")

    def test_single_group_equals_top1(self):
        cm = ConfusionMatrix(counts=[[9, 1, 0], [5, 5, 0], [0, 2, 8]])
        train = ClassDistribution.from_counts([500, 400, 300])
        groups = MetricsService.group_accuracy(cm, train, GroupSpec())
        self.assertAlmostEqual(groups.many, MetricsService.top1_accuracy(cm), places=14)
        self.assertTrue(math.isnan(groups.medium))
        self.assertTrue(math.isnan(groups.few))

    def test_top1_within_group_range_for_balanced_groups(self):
        cm = ConfusionMatrix(counts=[[68, 32, 0], [30, 69, 1], [33, 0, 67]])
        train = ClassDistribution.from_counts([500, 50, 5])
        groups = MetricsService.group_accuracy(cm, train, GroupSpec()).as_tuple()
        top1 = MetricsService.top1_accuracy(cm)
        self.assertGreaterEqual(top1, min(groups))
        self.assertLessEqual(top1, max(groups))

    def test_restricted_mode(self):
        """
        Argmax restricted to the group rescues samples lost to other groups
        """
        log = [
            PredictionRecord('a', 0, (3.0, 0.0, 0.0)),
            PredictionRecord('b', 1, (5.0, 3.0, 0.0)),
            PredictionRecord('c', 2, (0.0, 4.0, 1.0)),
        ]
        cm = ConfusionMatrix(counts=[[1, 0, 0], [1, 0, 0], [0, 1, 0]])
        train = ClassDistribution.from_counts([500, 50, 5])

        standard = MetricsService.group_accuracy(cm, train, GroupSpec())
        restricted = MetricsService.group_accuracy(cm, train, GroupSpec(), GroupAccuracyMode.RESTRICTED, log)
        self.assertEqual(standard.as_tuple(), (1.0, 0.0, 0.0))
        self.assertEqual(restricted.as_tuple(), (1.0, 1.0, 1.0))

        with self.assertRaises(ValidationError) as ctx:
            MetricsService.group_accuracy(cm, train, GroupSpec(), GroupAccuracyMode.RESTRICTED)
        self.assertEqual(ctx.exception.code, ErrorCode.INVALID_PARAMETER)

    def test_group_prediction_share(self):
        cm = ConfusionMatrix(counts=[[1, 0, 0], [1, 0, 0], [0, 1, 0]])
        share = MetricsService.group_prediction_share(cm, ClassDistribution.from_counts([500, 50, 5]), GroupSpec())
        self.assertAlmostEqual(share.true_share['many'], 1 / 3)
        self.assertAlmostEqual(share.predicted_share['many'], 2 / 3)
        self.assertAlmostEqual(share.predicted_share['medium'], 1 / 3)
        self.assertEqual(share.predicted_share['few'], 0.0)


class VarianceAndRankingTestCase(SimpleTestCase):
    """
    PDC variance across imbalance factors and method rankings
    """

    def test_sample_variance_convention(self):
        """
        (0.46, 1.31, 2.25) -> 0.80 and (0.34, 0.62, 0.64) -> 0.03 at two decimals
        """
        print("\n=== Testing PDC Variance ===")

        bce = MetricsService.pdc_variance([0.46, 1.31, 2.25])
        ce = MetricsService.pdc_variance([0.34, 0.62, 0.64])
        print(f"BCE-like: {bce:.4f}  CE-like: {ce:.4f}")
        self.assertEqual(round(bce, 2), 0.80)
        self.assertEqual(round(ce, 2), 0.03)
        self.assertEqual(MetricsService.pdc_variance([0.5, 0.5, 0.5]), 0.0)

        with self.assertRaises(ValidationError) as ctx:
            MetricsService.pdc_variance([0.5])
        self.assertEqual(ctx.exception.code, ErrorCode.INVALID_PARAMETER)

        print("✅ PDC Variance Test PASSED!")

    def test_rank_methods(self):
        rows = [
            MethodScore('A', accuracy=0.8, pdc=0.5),
            MethodScore('B', accuracy=0.7, pdc=0.1),
            MethodScore('C', accuracy=0.6, pdc=0.3),
        ]
        ranking = MetricsService.rank_methods(rows)
        ranks = {r.name: (r.accuracy_rank, r.pdc_rank) for r in ranking.rankings}
        self.assertEqual(ranks, {'A': (1, 3), 'B': (2, 1), 'C': (3, 2)})
        self.assertEqual(ranking.discordant_pairs, [('A', 'B'), ('A', 'C')])
        self.assertAlmostEqual(ranking.kendall_tau, -1 / 3, places=12)
        self.assertFalse(ranking.is_concordant())

        with self.assertRaises(ValidationError):
            MetricsService.rank_methods(rows[:1])


class AccTrapTestCase(SimpleTestCase):
    """
    Equal accuracy, different predictive bias
    """

    def test_equal_accuracy_different_pdc(self):
        """
        Errors piled on the head column cost PDC, not accuracy
        """
        print("\n=== Testing Accuracy Trap ===")

        train = ClassDistribution.from_counts(TRAP_TRAIN_COUNTS)
        head = MetricsService.build_report(ConfusionMatrix(counts=HEAD_BIASED), train)
        spread = MetricsService.build_report(ConfusionMatrix(counts=SPREAD), train)

        print(f"top1: {head.top1_acc} vs {spread.top1_acc}")
        print(f"pdc: {head.pdc:.6f} vs {spread.pdc:.6f}")
        self.assertAlmostEqual(head.top1_acc, spread.top1_acc, delta=1e-12)
        self.assertGreaterEqual(head.pdc, 2 * spread.pdc)

        print("✅ Accuracy Trap Test PASSED!")

    def test_trap_pairs(self):
        pairs = MetricsService.acc_trap_pairs(ConfusionMatrix(counts=HEAD_BIASED))
        self.assertEqual([(p.head_class, p.tail_class) for p in pairs], [(0, 1), (0, 2), (0, 3)])
        self.assertEqual(pairs[0].count_ratio, 2.0)
        self.assertEqual(MetricsService.acc_trap_pairs(ConfusionMatrix(counts=SPREAD)), [])


class BuildReportTestCase(SimpleTestCase):

    def test_perfect_balanced_predictions(self):
        cm = ConfusionMatrix(counts=np.diag([50] * 4))
        report = MetricsService.build_report(cm, ClassDistribution.from_counts(TRAP_TRAIN_COUNTS))
        self.assertEqual(report.top1_acc, 1.0)
        self.assertEqual(report.pdc, 0.0)
        self.assertEqual(report.predicted_counts, (50, 50, 50, 50))
        self.assertEqual(report.num_samples, 200)

    def test_report_fields(self):
        train = ClassDistribution.from_counts(TRAP_TRAIN_COUNTS)
        report = MetricsService.build_report(ConfusionMatrix(counts=HEAD_BIASED), train, alpha=0.5, epsilon=1e-6)
        self.assertEqual(report.predicted_counts, (160, 80, 80, 80))
        self.assertEqual(report.test_counts, (100, 100, 100, 100))
        self.assertAlmostEqual(report.pdc, report.kl_pred_target / (report.kl_train_target + 1e-6), places=14)
        self.assertEqual(report.smoothing_alpha, 0.5)
        self.assertEqual(report.predicted_counts[0] / report.num_samples, 0.4)
        self.assertAlmostEqual(report.group_share.predicted_share['many'], 0.6)

    def test_class_count_mismatch(self):
        with self.assertRaises(ValidationError) as ctx:
            MetricsService.build_report(ConfusionMatrix(counts=np.eye(3, dtype=int)),
                                        ClassDistribution.from_counts([5, 1]))
        self.assertEqual(ctx.exception.code, ErrorCode.INCONSISTENT_INPUT)
