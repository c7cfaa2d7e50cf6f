"""
Test Cases for long-tailed profiles, splits, synthetic data and the prior-shift simulator
"""
import math

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from distributions.services import DistributionService
from distributions.types import ClassDistribution
from ltdata.services import PriorShiftService, ProfileService, SplitService, SyntheticDataService
from ltdata.types import LTProfile
from metrics.services import MetricsService
from utils.enums import ErrorCode


class ExpProfileTestCase(SimpleTestCase):
    """
    Exponential long-tailed profiles
    """

    def test_cifar_scale_profile(self):
        """
        C=100, n_max=500, IF=100 runs from 500 down to 5
        """
        print("\n=== Testing Exponential Profile ===")

        profile = ProfileService.exp_profile(100, 500, 100)
        print(f"head={profile.counts[0]} tail={profile.counts[-1]} total={profile.total}")
        self.assertEqual(len(profile.counts), 100)
        self.assertEqual(profile.counts[0], 500)
        self.assertEqual(profile.counts[-1], 5)
        self.assertTrue(all(a >= b for a, b in zip(profile.counts, profile.counts[1:])))
        self.assertEqual(profile.realized_imbalance_factor, 100.0)

        print("✅ Exponential Profile Test PASSED!")

    def test_formula(self):
        profile = ProfileService.exp_profile(10, 500, 100)
        expected = [round(500 * 100 ** (-i / 9)) for i in range(10)]
        self.assertEqual(list(profile.counts), expected)

    def test_flat_profiles(self):
        self.assertEqual(set(ProfileService.exp_profile(5, 200, 1).counts), {200})
        self.assertEqual(set(ProfileService.exp_profile(5, 200, 1.0001).counts), {200})

    def test_infeasible_names_tail_class(self):
        with self.assertRaises(ValidationError) as ctx:
            ProfileService.exp_profile(10, 50, 100)
        self.assertEqual(ctx.exception.code, ErrorCode.INFEASIBLE_PROFILE)
        self.assertIn('class 9', ctx.exception.messages[0])

    def test_invalid_parameters(self):
        for args in ((1, 500, 10), (10, 0, 10), (10, 500, 0.5)):
            with self.assertRaises(ValidationError) as ctx:
                ProfileService.exp_profile(*args)
            self.assertEqual(ctx.exception.code, ErrorCode.INVALID_PARAMETER)

    def test_prior_matches_counts(self):
        profile = ProfileService.exp_profile(4, 100, 10)
        np.testing.assert_allclose(profile.prior().probabilities, np.array(profile.counts) / profile.total)


class SubsampleTestCase(SimpleTestCase):
    """
    Drawing a long-tailed split from a label pool
    """

    def setUp(self):
        self.labels = np.repeat(np.arange(100), 500)
        np.random.default_rng(0).shuffle(self.labels)
        self.profile = ProfileService.exp_profile(100, 500, 100)

    def test_counts_follow_profile(self):
        indices = SplitService.subsample_indices(self.labels, self.profile, seed=3)
        counts = np.bincount(self.labels[indices], minlength=100)
        self.assertEqual(tuple(counts.tolist()), self.profile.counts)
        self.assertTrue(np.all(np.diff(indices) > 0))

    def test_deterministic(self):
        """
        Same seed, same bytes; another seed, another split
        """
        print("\n=== Testing Split Determinism ===")

        first = SplitService.subsample_indices(self.labels, self.profile, seed=7)
        second = SplitService.subsample_indices(self.labels, self.profile, seed=7)
        self.assertEqual(first.tobytes(), second.tobytes())

        other = SplitService.subsample_indices(self.labels, self.profile, seed=8)
        self.assertFalse(np.array_equal(first, other))

        print("✅ Split Determinism Test PASSED!")

    def test_insufficient_samples(self):
        labels = np.array([0] * 10 + [1] * 2)
        profile = LTProfile(num_classes=2, n_max=10, imbalance_factor=2.0, counts=(10, 5))
        with self.assertRaises(ValidationError) as ctx:
            SplitService.subsample_indices(labels, profile, seed=0)
        self.assertEqual(ctx.exception.code, ErrorCode.INSUFFICIENT_SAMPLES)
        self.assertIn('Class 1', ctx.exception.messages[0])

    def test_label_out_of_range(self):
        with self.assertRaises(ValidationError) as ctx:
            SplitService.subsample_indices([0, 1, 5], LTProfile.flat(2, 1), seed=0)
        self.assertEqual(ctx.exception.code, ErrorCode.INCONSISTENT_INPUT)

    def test_negative_seed(self):
        with self.assertRaises(ValidationError) as ctx:
            SplitService.subsample_indices(self.labels, self.profile, seed=-1)
        self.assertEqual(ctx.exception.code, ErrorCode.INVALID_PARAMETER)


class SyntheticDataTestCase(SimpleTestCase):
    """
    Gaussian-mixture datasets
    """

    def test_shapes_and_counts(self):
        profile = ProfileService.exp_profile(10, 100, 10)
        data = SyntheticDataService.synth_gaussian_mixture(10, 20, 3.0, profile, 1.0, seed=0)
        self.assertEqual(data.features.shape, (profile.total, 20))
        self.assertEqual(tuple(data.class_counts().tolist()), profile.counts)
        self.assertEqual(data.dim, 20)
        self.assertFalse(data.features.flags.writeable)

    def test_means_on_sphere(self):
        for num_classes, dim in ((5, 8), (12, 4)):
            means = SyntheticDataService.class_means(num_classes, dim, 2.5, seed=1)
            np.testing.assert_allclose(np.linalg.norm(means, axis=1), 2.5, atol=1e-12)

    def test_orthogonal_means_equidistant(self):
        means = SyntheticDataService.class_means(4, 6, 3.0, seed=2)
        distances = [np.linalg.norm(means[i] - means[j]) for i in range(4) for j in range(i + 1, 4)]
        np.testing.assert_allclose(distances, 3.0 * math.sqrt(2), atol=1e-12)

    def test_reproducible_and_streams_differ(self):
        profile = ProfileService.exp_profile(3, 40, 4)
        a = SyntheticDataService.synth_gaussian_mixture(3, 5, 3.0, profile, 1.0, seed=9)
        b = SyntheticDataService.synth_gaussian_mixture(3, 5, 3.0, profile, 1.0, seed=9)
        c = SyntheticDataService.synth_gaussian_mixture(3, 5, 3.0, profile, 1.0, seed=9, stream=2)
        self.assertEqual(a.features.tobytes(), b.features.tobytes())
        np.testing.assert_array_equal(a.class_means, c.class_means)
        self.assertFalse(np.array_equal(a.features, c.features))

    def test_balanced_test_set(self):
        profile = ProfileService.exp_profile(4, 100, 20)
        train = SyntheticDataService.synth_gaussian_mixture(4, 6, 3.0, profile, 1.0, seed=0)
        test = SyntheticDataService.balanced_test_set(train, 30)
        self.assertEqual(test.class_counts().tolist(), [30] * 4)
        np.testing.assert_array_equal(test.class_means, train.class_means)

        with self.assertRaises(ValidationError):
            SyntheticDataService.balanced_test_set(train, 30, stream=0)

    def test_noiseless_samples_sit_on_means(self):
        profile = ProfileService.exp_profile(5, 40, 8)
        data = SyntheticDataService.synth_gaussian_mixture(5, 7, 2.0, profile, 0.0, seed=3)
        np.testing.assert_array_equal(data.features, data.class_means[data.labels])

    def test_well_separated_nearest_mean(self):
        """
        Separation 10 against sigma 0.5: the nearest class mean recovers at least
        99% balanced accuracy
        """
        print("\n=== Testing Nearest-Mean Separability ===")

        profile = ProfileService.exp_profile(10, 100, 10)
        train = SyntheticDataService.synth_gaussian_mixture(10, 20, 10.0, profile, 0.5, seed=0)
        test = SyntheticDataService.balanced_test_set(train, 50)
        distances = np.linalg.norm(test.features[:, None, :] - train.class_means[None, :, :], axis=2)
        cm = DistributionService.confusion_from_labels(test.labels, np.argmin(distances, axis=1), 10)
        balanced_accuracy = float(np.mean(MetricsService.per_class_recall(cm)))
        print(f"balanced accuracy {balanced_accuracy:.4f}")
        self.assertGreaterEqual(balanced_accuracy, 0.99)

        print("✅ Nearest-Mean Separability Test PASSED!")

    def test_invalid_parameters(self):
        profile = ProfileService.exp_profile(3, 10, 2)
        with self.assertRaises(ValidationError) as ctx:
            SyntheticDataService.synth_gaussian_mixture(3, 5, 0.0, profile, 1.0, seed=0)
        self.assertEqual(ctx.exception.code, ErrorCode.INVALID_PARAMETER)
        with self.assertRaises(ValidationError) as ctx:
            SyntheticDataService.synth_gaussian_mixture(4, 5, 1.0, profile, 1.0, seed=0)
        self.assertEqual(ctx.exception.code, ErrorCode.DIMENSION_MISMATCH)


class PriorShiftTestCase(SimpleTestCase):
    """
    Bayes prior shift and the biased-classifier simulator
    """

    def test_prior_shift(self):
        shifted = PriorShiftService.prior_shift(
            ClassDistribution.from_probabilities([0.3, 0.7]),
            ClassDistribution.uniform(2),
            ClassDistribution.from_probabilities([0.9, 0.1]),
        )
        np.testing.assert_allclose(shifted.probabilities, [0.27 / 0.34, 0.07 / 0.34])

    def test_prior_shift_round_trip(self):
        posterior = ClassDistribution.from_probabilities([0.2, 0.5, 0.3])
        skewed = ClassDistribution.from_probabilities([0.6, 0.3, 0.1])
        uniform = ClassDistribution.uniform(3)
        there = PriorShiftService.prior_shift(posterior, uniform, skewed)
        back = PriorShiftService.prior_shift(there, skewed, uniform)
        np.testing.assert_allclose(back.probabilities, posterior.probabilities, atol=1e-14)

    def test_simulator_is_head_biased(self):
        """
        IF=100, confusability 0.5, 200 per class: PDC above 0.2 and the head column
        collects well over 1/C of the predictions
        """
        print("\n=== Testing Prior-Shift Simulator ===")

        num_classes, per_class = 10, 200
        profile = ProfileService.exp_profile(num_classes, 500, 100)
        log = PriorShiftService.simulate_biased_log(0.5, profile.prior(), per_class, seed=0)
        cm = DistributionService.confusion_from_log(log, num_classes)
        report = MetricsService.build_report(cm, profile.as_distribution())

        total = num_classes * per_class
        share = report.predicted_counts[0] / report.num_samples
        sigma = math.sqrt((1 / num_classes) * (1 - 1 / num_classes) / total)
        print(f"pdc={report.pdc:.4f} head share={share:.4f} (1/C + 3 sigma = {1 / num_classes + 3 * sigma:.4f})")
        self.assertEqual(cm.total, total)
        self.assertGreater(report.pdc, 0.2)
        self.assertGreaterEqual(share - 1 / num_classes, 3 * sigma)

        print("✅ Prior-Shift Simulator Test PASSED!")

    def test_simulator_balanced_prior(self):
        profile = ProfileService.exp_profile(10, 500, 1)
        log = PriorShiftService.simulate_biased_log(0.5, profile.prior(), 200, seed=0)
        report = MetricsService.build_report(DistributionService.confusion_from_log(log, 10),
                                             profile.as_distribution())
        self.assertLess(report.pdc, 0.02)
        self.assertEqual(report.top1_acc, 1.0)

    def test_simulator_without_confusion_is_exact(self):
        """
        Confusability 0 leaves no mass for the prior to move: every prediction is
        correct and PDC is 0 even under IF=100
        """
        profile = ProfileService.exp_profile(10, 500, 100)
        log = PriorShiftService.simulate_biased_log(0.0, profile.prior(), 100, seed=0)
        report = MetricsService.build_report(DistributionService.confusion_from_log(log, 10),
                                             profile.as_distribution())
        self.assertEqual(report.top1_acc, 1.0)
        self.assertEqual(report.predicted_counts, (100,) * 10)
        self.assertAlmostEqual(report.pdc, 0.0, places=12)

    def test_simulator_pdc_grows_with_imbalance(self):
        print("\n=== Testing Simulator PDC over IF ===")

        values = []
        for imbalance_factor in (1, 10, 100):
            profile = ProfileService.exp_profile(10, 500, imbalance_factor)
            log = PriorShiftService.simulate_biased_log(0.5, profile.prior(), 200, seed=0)
            report = MetricsService.build_report(DistributionService.confusion_from_log(log, 10),
                                                 profile.as_distribution())
            values.append(report.pdc)
            print(f"IF={imbalance_factor}: pdc={report.pdc:.4f}")
        self.assertTrue(all(a <= b for a, b in zip(values, values[1:])), values)

        print("✅ Simulator PDC over IF Test PASSED!")

    def test_simulator_deterministic(self):
        prior = ProfileService.exp_profile(5, 100, 10).prior()
        first = PriorShiftService.simulate_biased_log(0.6, prior, 50, seed=4)
        second = PriorShiftService.simulate_biased_log(0.6, prior, 50, seed=4)
        self.assertEqual(first, second)
        self.assertEqual(first[0].sample_id, 'sim-0-0')

    def test_simulator_rejects_bad_input(self):
        prior = ClassDistribution.uniform(3)
        for kwargs in ({'class_confusability': 1.0}, {'n_test_per_class': 0}, {'seed': -2}):
            arguments = {'class_confusability': 0.5, 'train_prior': prior, 'n_test_per_class': 5, 'seed': 0}
            arguments.update(kwargs)
            with self.assertRaises(ValidationError) as ctx:
                PriorShiftService.simulate_biased_log(**arguments)
            self.assertEqual(ctx.exception.code, ErrorCode.INVALID_PARAMETER)
