"""
Test Cases for class distributions, prediction records and confusion matrices
"""
import random

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase, override_settings

from distributions.services import DistributionService
from distributions.types import ClassDistribution, ConfusionMatrix, GroupSpec, PredictionRecord
from utils.enums import ClassGroup, ErrorCode


def _record(sample_id, true_label, predicted):
    return PredictionRecord(sample_id=sample_id, true_label=true_label, predicted=predicted)


class ClassDistributionTestCase(SimpleTestCase):
    """
    Construction rules and normalization
    """

    def test_normalize_examples(self):
        """
        (2, 2) and (500, 5) normalize to the obvious fractions
        """
        print("\n=== Testing normalize ===")

        half = DistributionService.normalize(ClassDistribution.from_counts([2, 2]))
        np.testing.assert_array_equal(half.probabilities, [0.5, 0.5])
        self.assertTrue(half.normalized)

        skewed = DistributionService.normalize(ClassDistribution.from_counts([500, 5]))
        np.testing.assert_allclose(skewed.probabilities, [500 / 505, 5 / 505], rtol=0, atol=1e-15)
        print(f"(500, 5) -> {skewed.probabilities.tolist()}")

        print("✅ Normalize Test PASSED!")

    def test_normalize_long_tailed_profile(self):
        """
        An exponential profile with IF=100 keeps its max/min ratio
        """
        counts = [round(500 * 100 ** (-k / 99)) for k in range(100)]
        dist = DistributionService.normalize(ClassDistribution.from_counts(counts))
        probabilities = dist.probabilities
        self.assertAlmostEqual(probabilities.sum(), 1.0, delta=1e-12)
        self.assertAlmostEqual(probabilities.max() / probabilities.min(), 100.0, delta=1e-9)

    def test_empty_distribution_rejected(self):
        with self.assertRaises(ValidationError) as ctx:
            DistributionService.normalize(ClassDistribution.from_counts([0, 0, 0]))
        self.assertEqual(ctx.exception.code, ErrorCode.EMPTY_DISTRIBUTION)

    def test_invalid_mass_rejected(self):
        """
        Negative mass, a single class and a bad normalized sum are all refused
        """
        for kwargs in (
            {'mass': [1, -1]},
            {'mass': [1]},
            {'mass': [0.5, 0.6], 'normalized': True},
            {'mass': [float('nan'), 1.0]},
        ):
            with self.assertRaises(ValidationError) as ctx:
                ClassDistribution(**kwargs)
            self.assertEqual(ctx.exception.code, ErrorCode.INVALID_DISTRIBUTION)

    def test_mass_is_read_only(self):
        dist = ClassDistribution.from_counts([3, 1])
        with self.assertRaises(ValueError):
            dist.mass[0] = 7


class ConfusionFromLogTestCase(SimpleTestCase):
    """
    Building confusion matrices from prediction logs
    """

    def test_direct_count(self):
        """
        {(0->0), (0->1), (1->1)} with C=2 gives [[1, 1], [0, 1]]
        """
        print("\n=== Testing confusion_from_log ===")

        log = [_record('a', 0, 0), _record('b', 0, 1), _record('c', 1, 1)]
        cm = DistributionService.confusion_from_log(log, 2)
        self.assertEqual(cm.to_list(), [[1, 1], [0, 1]])
        self.assertEqual(cm.total, 3)

        print("✅ Confusion Direct Count Test PASSED!")

    def test_empty_log(self):
        cm = DistributionService.confusion_from_log([], 3)
        self.assertEqual(cm.to_list(), [[0] * 3] * 3)
        self.assertTrue(cm.is_empty)

    def test_matches_naive_tally(self):
        """
        1000 random records agree with a per-record tally, in any order
        """
        rng = random.Random(7)
        num_classes = 6
        log = [_record(f"r{i}", rng.randrange(num_classes), rng.randrange(num_classes)) for i in range(1000)]

        tally = [[0] * num_classes for _ in range(num_classes)]
        for record in log:
            tally[record.true_label][record.predicted] += 1

        cm = DistributionService.confusion_from_log(log, num_classes)
        self.assertEqual(cm.to_list(), tally)

        shuffled = list(log)
        rng.shuffle(shuffled)
        self.assertEqual(DistributionService.confusion_from_log(shuffled, num_classes).to_list(), tally)

    def test_logits_argmax_ties_go_to_lowest_index(self):
        log = [
            _record('tie', 1, (2.0, 2.0, 1.0)),
            _record('clear', 2, (0.0, 0.1, 3.0)),
            _record('flat', 0, (0.0, 0.0, 0.0)),
        ]
        cm = DistributionService.confusion_from_log(log, 3)
        self.assertEqual(cm.counts[1, 0], 1)
        self.assertEqual(cm.counts[2, 2], 1)
        self.assertEqual(cm.counts[0, 0], 1)

    def test_label_out_of_range_names_sample(self):
        """
        The error names the offending sample id
        """
        print("\n=== Testing Label Range Check ===")

        for record in (_record('bad-true', 3, 0), _record('bad-pred', 0, 5), _record('bad-width', 0, (1.0, 2.0))):
            with self.assertRaises(ValidationError) as ctx:
                DistributionService.confusion_from_log([_record('ok', 0, 0), record], 3)
            self.assertEqual(ctx.exception.code, ErrorCode.LABEL_OUT_OF_RANGE)
            self.assertIn(record.sample_id, ctx.exception.messages[0])
            print(f"{record.sample_id}: {ctx.exception.messages[0]}")

        print("✅ Label Range Check Test PASSED!")


class MarginalTestCase(SimpleTestCase):
    """
    Predicted (column) and true (row) marginals
    """

    def test_marginals_of_small_matrix(self):
        cm = ConfusionMatrix(counts=[[1, 1], [0, 1]])
        np.testing.assert_allclose(DistributionService.predicted_marginal(cm).probabilities, [1 / 3, 2 / 3])
        np.testing.assert_allclose(DistributionService.true_marginal(cm).probabilities, [2 / 3, 1 / 3])

    def test_balanced_diagonal(self):
        cm = ConfusionMatrix(counts=np.diag([10, 10]))
        np.testing.assert_array_equal(DistributionService.predicted_marginal(cm).probabilities, [0.5, 0.5])

    def test_balanced_test_set_gives_uniform_target(self):
        counts = np.full((100, 100), 0)
        np.fill_diagonal(counts, 100)
        target = DistributionService.true_marginal(ConfusionMatrix(counts=counts))
        np.testing.assert_allclose(target.probabilities, np.full(100, 0.01), atol=1e-15)

    def test_head_heavy_columns(self):
        """
        Off-diagonal mass piled on the first columns makes a head-heavy marginal
        """
        counts = np.zeros((10, 10), dtype=int)
        for label in range(10):
            counts[label, label] = 50
            counts[label, 0] += 30
            counts[label, 1] += 20
        predicted = DistributionService.predicted_marginal(ConfusionMatrix(counts=counts)).probabilities
        np.testing.assert_allclose(predicted, counts.sum(axis=0) / counts.sum())
        self.assertTrue(np.all(predicted[:2] > predicted[2:].max()))

    def test_marginals_sum_to_one(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            cm = ConfusionMatrix(counts=rng.integers(0, 50, size=(7, 7)) + np.eye(7, dtype=int))
            self.assertAlmostEqual(DistributionService.predicted_marginal(cm).probabilities.sum(), 1.0, delta=1e-12)
            self.assertAlmostEqual(DistributionService.true_marginal(cm).probabilities.sum(), 1.0, delta=1e-12)

    def test_empty_matrix_rejected(self):
        for marginal in (DistributionService.predicted_marginal, DistributionService.true_marginal):
            with self.assertRaises(ValidationError) as ctx:
                marginal(ConfusionMatrix.zeros(3))
            self.assertEqual(ctx.exception.code, ErrorCode.EMPTY_DISTRIBUTION)


class GroupSpecTestCase(SimpleTestCase):
    """
    Many / Medium / Few partition
    """

    def test_default_partition(self):
        spec = GroupSpec()
        groups = spec.assign(ClassDistribution.from_counts([500, 101, 100, 20, 19, 1]))
        self.assertEqual(groups, (
            ClassGroup.MANY, ClassGroup.MANY, ClassGroup.MEDIUM,
            ClassGroup.MEDIUM, ClassGroup.FEW, ClassGroup.FEW,
        ))

    def test_every_class_in_exactly_one_group(self):
        counts = ClassDistribution.from_counts(np.arange(1, 300, 7))
        members = GroupSpec().members(counts)
        joined = np.sort(np.concatenate(list(members.values())))
        np.testing.assert_array_equal(joined, np.arange(counts.num_classes))

    def test_invalid_thresholds(self):
        for many_min, few_max in ((20, 20), (10, 20), (5, 0)):
            with self.assertRaises(ValidationError) as ctx:
                GroupSpec(many_min=many_min, few_max=few_max)
            self.assertEqual(ctx.exception.code, ErrorCode.INVALID_PARAMETER)

    @override_settings(GROUP_MANY_MIN=50, GROUP_FEW_MAX=5)
    def test_thresholds_from_settings(self):
        self.assertEqual(GroupSpec.from_settings(), GroupSpec(many_min=50, few_max=5))

    def test_rank_thresholds(self):
        counts = ClassDistribution.from_counts([500 - 5 * k for k in range(100)])
        spec = GroupSpec.from_ranks(counts)
        self.assertEqual(spec.many_min, 500 - 5 * 34)
        self.assertEqual(spec.few_max, 500 - 5 * 67)
