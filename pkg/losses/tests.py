"""
Test Cases for the loss families, their gradients and logit adjustment
"""
import math

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from distributions.types import ClassDistribution
from losses.services import LossService
from losses.types import LossSpec
from ltdata.services import PriorShiftService
from utils.enums import ErrorCode, LossFamily

FD_STEP = 1e-5
FD_TOLERANCE = 1e-5
# below this gradient norm the check is absolute; round-off in the loss is ~1e-11
FD_SCALE_FLOOR = 1e-4


def _finite_difference(fn, z):
    grad = np.zeros_like(z)
    for i in range(z.size):
        up, down = z.copy(), z.copy()
        up[i] += FD_STEP
        down[i] -= FD_STEP
        grad[i] = (fn(up) - fn(down)) / (2 * FD_STEP)
    return grad


def _relative_error(analytic, numeric):
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), FD_SCALE_FLOOR)
    return float(np.linalg.norm(analytic - numeric) / scale)


class SoftmaxTestCase(SimpleTestCase):

    def test_examples(self):
        np.testing.assert_allclose(LossService.softmax([0, 0]).probabilities, [0.5, 0.5])
        np.testing.assert_allclose(LossService.softmax([math.log(2), 0]).probabilities, [2 / 3, 1 / 3], atol=1e-15)

        saturated = LossService.softmax([1000, 0]).probabilities
        self.assertTrue(np.all(np.isfinite(saturated)))
        self.assertAlmostEqual(saturated[0], 1.0, places=15)

    def test_shift_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            z = rng.normal(0, 3, size=int(rng.integers(2, 20)))
            shifted = LossService.softmax(z + rng.normal(0, 50)).probabilities
            np.testing.assert_allclose(LossService.softmax(z).probabilities, shifted, rtol=0, atol=1e-12)

    def test_non_finite_rejected(self):
        with self.assertRaises(ValidationError):
            LossService.softmax([float('inf'), 0])


class LossValuesTestCase(SimpleTestCase):
    """
    Closed-form values of each loss family
    """

    def test_ce(self):
        """
        Logits (0, 0), label 0: value ln 2, gradient (-0.5, 0.5)
        """
        print("\n=== Testing CE Loss ===")

        out = LossService.ce_loss([0.0, 0.0], 0)
        self.assertAlmostEqual(out.value, math.log(2), places=15)
        np.testing.assert_allclose(out.grad, [-0.5, 0.5])

        confident = LossService.ce_loss([50.0, 0.0, 0.0], 0)
        self.assertLess(confident.value, 1e-20)

        with self.assertRaises(ValidationError) as ctx:
            LossService.ce_loss([0.0, 0.0], 2)
        self.assertEqual(ctx.exception.code, ErrorCode.LABEL_OUT_OF_RANGE)

        print("✅ CE Loss Test PASSED!")

    def test_bce(self):
        self.assertAlmostEqual(LossService.bce_loss([0.0, 0.0], 0).value, 2 * math.log(2), places=15)
        self.assertLess(LossService.bce_loss([40.0, -40.0, -40.0], 0).value, 1e-15)

    def test_cb_weights(self):
        np.testing.assert_array_equal(LossService.cb_weights([100, 10, 1], 0.0), [1.0, 1.0, 1.0])

        raw = LossService.cb_weights([100, 1], 0.9999, rescale=False)
        self.assertAlmostEqual(raw[1] / raw[0], 100.0, delta=1.0)
        self.assertEqual(raw[1], 1.0)

        rescaled = LossService.cb_weights([500, 50, 5], 0.99)
        self.assertAlmostEqual(rescaled.sum(), 3.0, places=12)
        self.assertTrue(np.all(np.diff(rescaled) >= 0))

        with self.assertRaises(ValidationError) as ctx:
            LossService.cb_weights([10, 1], 1.0)
        self.assertEqual(ctx.exception.code, ErrorCode.INVALID_PARAMETER)

    def test_cb_weights_nonincreasing_in_count(self):
        counts = np.arange(1, 200)
        for beta in (0.5, 0.9, 0.99, 0.9999):
            weights = LossService.cb_weights(counts, beta, rescale=False)
            self.assertTrue(np.all(np.diff(weights) <= 0), beta)

    def test_cb_ce_scales_ce(self):
        weights = [2.0, 0.5, 1.0]
        z = [0.3, -1.2, 0.8]
        ce = LossService.ce_loss(z, 1)
        weighted = LossService.cb_ce_loss(z, 1, weights)
        self.assertAlmostEqual(weighted.value, 0.5 * ce.value, places=15)
        np.testing.assert_allclose(weighted.grad, 0.5 * ce.grad)

    def test_ldam_margins(self):
        """
        n = 16 with margin_scale 1 gives a margin of 0.5
        """
        np.testing.assert_allclose(LossService.ldam_margins([16, 1], 1.0), [0.5, 1.0])

        defaults = LossService.ldam_margins([500, 50, 5])
        self.assertAlmostEqual(defaults.max(), 0.5, places=12)
        self.assertEqual(int(np.argmax(defaults)), 2)

    def test_ldam_zero_margin_is_ce(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            z = rng.normal(size=5)
            label = int(rng.integers(5))
            ldam = LossService.ldam_loss(z, label, [50, 40, 30, 20, 10], 0.0, 1.0)
            ce = LossService.ce_loss(z, label)
            self.assertAlmostEqual(ldam.value, ce.value, delta=1e-12)
            np.testing.assert_allclose(ldam.grad, ce.grad, rtol=0, atol=1e-12)

    def test_balanced_ce(self):
        """
        Prior (0.9, 0.1), logits (0, 0), label 1: value -ln 0.1
        """
        out = LossService.balanced_ce_loss([0.0, 0.0], 1, ClassDistribution.from_probabilities([0.9, 0.1]))
        self.assertAlmostEqual(out.value, -math.log(0.1), places=12)

        with self.assertRaises(ValidationError) as ctx:
            LossService.balanced_ce_loss([0.0, 0.0], 1, ClassDistribution.from_probabilities([1.0, 0.0]))
        self.assertEqual(ctx.exception.code, ErrorCode.INVALID_DISTRIBUTION)

    def test_balanced_ce_uniform_prior_is_ce(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            num_classes = int(rng.integers(2, 12))
            z = rng.normal(0, 2, size=num_classes)
            label = int(rng.integers(num_classes))
            balanced = LossService.balanced_ce_loss(z, label, ClassDistribution.uniform(num_classes))
            ce = LossService.ce_loss(z, label)
            self.assertAlmostEqual(balanced.value, ce.value, delta=1e-12)
            np.testing.assert_allclose(balanced.grad, ce.grad, rtol=0, atol=1e-12)


class GradientCheckTestCase(SimpleTestCase):
    """
    Every analytic gradient against central finite differences
    """

    def _check(self, name, loss_fn, draws=100, seed=0, ce_family=True):
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(draws):
            num_classes = int(rng.integers(2, 11))
            z = rng.normal(0, 2, size=num_classes)
            label = int(rng.integers(num_classes))
            counts = np.sort(rng.integers(1, 500, size=num_classes))[::-1]
            out = loss_fn(z, label, counts)
            numeric = _finite_difference(lambda v: loss_fn(v, label, counts).value, z)
            error = _relative_error(out.grad, numeric)
            worst = max(worst, error)
            self.assertLessEqual(error, FD_TOLERANCE, f"{name}: logits={z.tolist()} label={label}")
            if ce_family:
                self.assertAlmostEqual(float(out.grad.sum()), 0.0, delta=1e-10)
        print(f"{name}: worst relative error {worst:.2e}")

    def test_all_families(self):
        """
        100 random draws per family, step 1e-5, relative error <= 1e-5
        """
        print("\n=== Testing Gradients ===")

        self._check('CE', lambda z, y, n: LossService.ce_loss(z, y), seed=1)
        self._check('BCE', lambda z, y, n: LossService.bce_loss(z, y), seed=2, ce_family=False)
        self._check('CB-CE', lambda z, y, n: LossService.cb_ce_loss(z, y, LossService.cb_weights(n, 0.999)), seed=3)
        self._check('LDAM', lambda z, y, n: LossService.ldam_loss(z, y, n, 0.5 * n.min() ** 0.25, 5.0), seed=4)
        self._check('BalCE', lambda z, y, n: LossService.balanced_ce_loss(
            z, y, ClassDistribution.from_counts(n)), seed=5)

        print("✅ Gradient Check Test PASSED!")

    def test_vanishing_gradient_draw(self):
        """
        A saturated LDAM row has a ~4e-8 gradient; finite differences only
        agree with it in absolute terms
        """
        z = np.array([-2.34, 1.885])
        counts = np.array([400, 20])
        fn = lambda v: LossService.ldam_loss(v, 1, counts, 0.5 * counts.min() ** 0.25, 5.0)
        out = fn(z)
        self.assertLess(np.linalg.norm(out.grad), 1e-6)
        self.assertLessEqual(_relative_error(out.grad, _finite_difference(lambda v: fn(v).value, z)), FD_TOLERANCE)

    def test_batch_gradient_is_row_mean(self):
        rng = np.random.default_rng(8)
        counts = [300, 100, 30, 10]
        z = rng.normal(size=(6, 4))
        labels = rng.integers(0, 4, size=6)
        for spec in (
            LossSpec.ce(), LossSpec.bce(), LossSpec.cb_ce(counts, beta=0.99),
            LossSpec.ldam(counts, logit_scale=5.0), LossSpec.balanced_ce(class_counts=counts),
        ):
            mean, grad = LossService.evaluate_batch(spec, z, labels)
            singles = [LossService.evaluate(spec, row, label) for row, label in zip(z, labels)]
            self.assertAlmostEqual(mean, np.mean([s.value for s in singles]), places=12)
            np.testing.assert_allclose(grad, np.array([s.grad for s in singles]) / 6, rtol=0, atol=1e-14)


class LossSpecTestCase(SimpleTestCase):

    def test_required_fields(self):
        with self.assertRaises(ValidationError) as ctx:
            LossSpec(family=LossFamily.CB_CE, beta=0.9)
        self.assertEqual(ctx.exception.code, ErrorCode.INVALID_PARAMETER)

        with self.assertRaises(ValidationError):
            LossSpec(family=LossFamily.BALANCED_CE)

        with self.assertRaises(ValidationError):
            LossSpec(family='focal')

    def test_labels(self):
        self.assertEqual(LossSpec.ce().label, 'CE')
        self.assertEqual(LossSpec.ce(tau=1.0).label, 'CE+LA(tau=1)')
        self.assertEqual(LossSpec.balanced_ce(class_counts=[5, 1]).label, 'BalCE')
        self.assertEqual(LossSpec.bce(name='one-vs-all').label, 'one-vs-all')

    def test_class_count_mismatch(self):
        with self.assertRaises(ValidationError) as ctx:
            LossService.evaluate(LossSpec.cb_ce([10, 5, 1], beta=0.9), [0.0, 1.0], 0)
        self.assertEqual(ctx.exception.code, ErrorCode.DIMENSION_MISMATCH)


class LogitAdjustmentTestCase(SimpleTestCase):
    """
    Post-hoc logit adjustment
    """

    def test_tau_zero_is_identity(self):
        z = np.array([0.2, -1.0, 3.0])
        adjusted = LossService.logit_adjust_inference(
            z, ClassDistribution.from_probabilities([0.7, 0.2, 0.1]), ClassDistribution.uniform(3), 0.0
        )
        np.testing.assert_array_equal(adjusted, z)

    def test_uniform_train_prior_keeps_argmax(self):
        rng = np.random.default_rng(12)
        z = rng.normal(size=(50, 4))
        adjusted = LossService.logit_adjust_inference(
            z, ClassDistribution.uniform(4), ClassDistribution.from_counts([5, 5, 5, 5]), 1.0
        )
        differences = adjusted - z
        np.testing.assert_allclose(differences, np.broadcast_to(differences[0], differences.shape), atol=1e-14)
        np.testing.assert_array_equal(np.argmax(adjusted, axis=1), np.argmax(z, axis=1))

    def test_recovers_balanced_argmax(self):
        """
        A balanced posterior pushed onto a skewed prior is pulled back by tau = 1
        """
        print("\n=== Testing Logit Adjustment ===")

        balanced = ClassDistribution.from_probabilities([0.3, 0.7])
        train_prior = ClassDistribution.from_probabilities([0.9, 0.1])
        uniform = ClassDistribution.uniform(2)
        biased = PriorShiftService.prior_shift(balanced, uniform, train_prior)
        logits = np.log(biased.probabilities)
        self.assertEqual(int(np.argmax(logits)), 0)

        adjusted = LossService.logit_adjust_inference(logits, train_prior, uniform, 1.0)
        self.assertEqual(int(np.argmax(adjusted)), int(np.argmax(balanced.probabilities)))
        print(f"biased posterior {biased.probabilities.tolist()} -> adjusted logits {adjusted.tolist()}")

        print("✅ Logit Adjustment Test PASSED!")

    def test_negative_tau_rejected(self):
        with self.assertRaises(ValidationError):
            LossService.logit_adjust_inference([0.0, 1.0], ClassDistribution.uniform(2), ClassDistribution.uniform(2), -1)
