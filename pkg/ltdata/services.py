"""
Long-tailed split generation, synthetic Gaussian-mixture data and the
prior-shift simulator used to synthesize biased classifiers.

Randomness is position-based: every class draws from its own generator
seeded with (seed, stream, class index), so per-class generation can run in
any order and still reproduce bit for bit.
"""
import logging
from typing import List, Sequence

import numpy as np
from django.core.exceptions import ValidationError
from scipy import stats

from distributions.types import ClassDistribution, PredictionRecord
from utils.enums import ErrorCode
from .types import LTProfile, SyntheticDataset

logger = logging.getLogger(__name__)

MEANS_STREAM = 0


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if seed < 0:
        raise ValidationError(f"Seed must be nonnegative, got {seed}", code=ErrorCode.INVALID_PARAMETER)
    return seed


class ProfileService:

    @staticmethod
    def exp_profile(num_classes: int, n_max: int, imbalance_factor: float) -> LTProfile:
        """
        n_i = round(n_max * IF^(-i / (C - 1))), round half to even, clamped to >= 1.
        IF = 1 gives a flat profile.
        """
        if num_classes < 2 or n_max < 1:
            raise ValidationError(
                f"Profile needs C >= 2 and n_max >= 1 (got C={num_classes}, n_max={n_max})",
                code=ErrorCode.INVALID_PARAMETER,
            )
        if imbalance_factor < 1:
            raise ValidationError(
                f"Imbalance factor must be >= 1, got {imbalance_factor}",
                code=ErrorCode.INVALID_PARAMETER,
            )
        if n_max < imbalance_factor:
            raise ValidationError(
                f"tail class would be empty: class {num_classes - 1} needs n_max >= IF "
                f"(n_max={n_max}, IF={imbalance_factor})",
                code=ErrorCode.INFEASIBLE_PROFILE,
                params={'class': num_classes - 1, 'n_max': n_max, 'imbalance_factor': imbalance_factor},
            )

        exponents = np.arange(num_classes) / (num_classes - 1)
        counts = np.rint(n_max * np.power(float(imbalance_factor), -exponents))
        counts = np.maximum(counts, 1).astype(np.int64)

        profile = LTProfile(
            num_classes=num_classes,
            n_max=int(n_max),
            imbalance_factor=float(imbalance_factor),
            counts=tuple(counts.tolist()),
        )
        logger.info(
            f"Profile C={num_classes} n_max={n_max} IF={imbalance_factor}: "
            f"realized IF={profile.realized_imbalance_factor:.4f}, total={profile.total}"
        )
        return profile


class SplitService:

    @staticmethod
    def subsample_indices(labels: Sequence[int], profile: LTProfile, seed: int) -> np.ndarray:
        """
        Per class, the first counts[c] indices of a seeded shuffle of that
        class's pool. Returned sorted ascending.
        """
        seed = _check_seed(seed)
        labels = np.asarray(labels, dtype=np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= profile.num_classes):
            raise ValidationError(
                f"Labels must lie in [0, {profile.num_classes})",
                code=ErrorCode.INCONSISTENT_INPUT,
            )

        selected = []
        for label, wanted in enumerate(profile.counts):
            pool = np.flatnonzero(labels == label)
            if pool.size < wanted:
                raise ValidationError(
                    f"Class {label} has {pool.size} samples, profile needs {wanted}",
                    code=ErrorCode.INSUFFICIENT_SAMPLES,
                    params={'class': label, 'available': int(pool.size), 'required': wanted},
                )
            rng = np.random.default_rng([seed, label])
            selected.append(rng.permutation(pool)[:wanted])

        return np.sort(np.concatenate(selected))


class SyntheticDataService:

    @staticmethod
    def class_means(num_classes: int, dim: int, separation: float, seed: int) -> np.ndarray:
        """
        Means on the radius-`separation` sphere. With C <= d they start on
        orthogonal axes (all pairs equidistant); otherwise on random
        directions. A seeded random rotation is applied either way.
        """
        rng = np.random.default_rng([seed, MEANS_STREAM])
        if num_classes <= dim:
            base = np.eye(num_classes, dim)
        else:
            base = rng.standard_normal((num_classes, dim))
            base /= np.linalg.norm(base, axis=1, keepdims=True)
        rotation = stats.special_ortho_group.rvs(dim=dim, random_state=rng)
        return separation * base @ rotation.T

    @staticmethod
    def _sample(class_means: np.ndarray, counts: Sequence[int], noise_sigma: float,
                seed: int, stream: int):
        features = []
        labels = []
        dim = class_means.shape[1]
        for label, count in enumerate(counts):
            rng = np.random.default_rng([seed, stream + 1, label])
            noise = rng.standard_normal((count, dim))
            features.append(class_means[label] + noise_sigma * noise)
            labels.append(np.full(count, label, dtype=np.int64))
        return np.vstack(features), np.concatenate(labels)

    @staticmethod
    def synth_gaussian_mixture(num_classes: int, dim: int, separation: float, profile: LTProfile,
                               noise_sigma: float, seed: int, stream: int = 0) -> SyntheticDataset:
        """
        Isotropic Gaussian clusters around seeded class means; class sizes
        follow the profile. `stream` selects an independent noise draw over
        the same means (0 = train, 1 = test by convention).
        """
        seed = _check_seed(seed)
        if num_classes < 2 or dim < 2 or not separation > 0 or noise_sigma < 0 or stream < 0:
            raise ValidationError(
                f"Degenerate mixture parameters (C={num_classes}, d={dim}, "
                f"separation={separation}, sigma={noise_sigma}, stream={stream})",
                code=ErrorCode.INVALID_PARAMETER,
            )
        if profile.num_classes != num_classes:
            raise ValidationError(
                f"Profile has {profile.num_classes} classes, mixture {num_classes}",
                code=ErrorCode.DIMENSION_MISMATCH,
            )

        means = SyntheticDataService.class_means(num_classes, dim, separation, seed)
        features, labels = SyntheticDataService._sample(means, profile.counts, noise_sigma, seed, stream)
        return SyntheticDataset(
            features=features,
            labels=labels,
            class_means=means,
            noise_sigma=float(noise_sigma),
            seed=seed,
            profile=profile,
        )

    @staticmethod
    def balanced_test_set(dataset: SyntheticDataset, per_class: int, stream: int = 1) -> SyntheticDataset:
        """Fresh balanced draw around the means of an existing dataset"""
        if per_class < 1 or stream < 1:
            raise ValidationError(
                "Balanced test set needs per_class >= 1 and a stream other than the training one",
                code=ErrorCode.INVALID_PARAMETER,
            )
        profile = LTProfile.flat(dataset.num_classes, per_class)
        features, labels = SyntheticDataService._sample(
            dataset.class_means, profile.counts, dataset.noise_sigma, dataset.seed, stream
        )
        return SyntheticDataset(
            features=features,
            labels=labels,
            class_means=dataset.class_means,
            noise_sigma=dataset.noise_sigma,
            seed=dataset.seed,
            profile=profile,
        )


class PriorShiftService:

    @staticmethod
    def _positive(distribution: ClassDistribution, role: str) -> np.ndarray:
        probabilities = distribution.probabilities
        if np.any(probabilities <= 0):
            raise ValidationError(f"{role} has a zero entry", code=ErrorCode.INVALID_DISTRIBUTION)
        return probabilities

    @staticmethod
    def shift_rows(posteriors: np.ndarray, ratio: np.ndarray) -> np.ndarray:
        """Row-wise posterior * ratio, renormalized; zero posterior entries stay zero"""
        shifted = posteriors * ratio
        return shifted / shifted.sum(axis=-1, keepdims=True)

    @staticmethod
    def prior_shift(posterior: ClassDistribution, from_prior: ClassDistribution,
                    to_prior: ClassDistribution) -> ClassDistribution:
        """
        Move a posterior from one label prior to another:
        q_i proportional to posterior_i * to_prior_i / from_prior_i.
        """
        if len({posterior.num_classes, from_prior.num_classes, to_prior.num_classes}) != 1:
            raise ValidationError("Prior shift inputs disagree on the class count", code=ErrorCode.DIMENSION_MISMATCH)
        p = PriorShiftService._positive(posterior, "Posterior")
        ratio = PriorShiftService._positive(to_prior, "Target prior") / PriorShiftService._positive(from_prior, "Source prior")
        return ClassDistribution.from_probabilities(PriorShiftService.shift_rows(p, ratio))

    @staticmethod
    def simulate_biased_log(class_confusability: float, train_prior: ClassDistribution,
                            n_test_per_class: int, seed: int) -> List[PredictionRecord]:
        """
        Synthesize the prediction log of a classifier trained under train_prior
        and tested on balanced data.

        Each test sample of class y gets a balanced posterior with mass
        1 - confusability on y and the rest spread over the other classes by a
        flat Dirichlet draw. The posterior is moved from the uniform prior to
        train_prior and the argmax is the prediction.
        """
        seed = _check_seed(seed)
        if not 0 <= class_confusability < 1:
            raise ValidationError(
                f"Confusability must lie in [0, 1), got {class_confusability}",
                code=ErrorCode.INVALID_PARAMETER,
            )
        if n_test_per_class < 1:
            raise ValidationError("n_test_per_class must be >= 1", code=ErrorCode.INVALID_PARAMETER)

        num_classes = train_prior.num_classes
        prior = PriorShiftService._positive(train_prior, "Train prior")
        # the uniform source prior cancels after renormalization
        ratio = prior * num_classes

        records = []
        for label in range(num_classes):
            rng = np.random.default_rng([seed, label])
            others = np.delete(np.arange(num_classes), label)
            posteriors = np.zeros((n_test_per_class, num_classes))
            posteriors[:, label] = 1.0 - class_confusability
            posteriors[:, others] = class_confusability * rng.dirichlet(np.ones(num_classes - 1), size=n_test_per_class)
            predictions = np.argmax(PriorShiftService.shift_rows(posteriors, ratio), axis=1)
            records.extend(
                PredictionRecord(sample_id=f"sim-{label}-{k}", true_label=label, predicted=int(pred))
                for k, pred in enumerate(predictions)
            )

        logger.info(
            f"Simulated {len(records)} predictions: C={num_classes}, "
            f"confusability={class_confusability}, seed={seed}"
        )
        return records
