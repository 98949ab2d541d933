import itertools

import numpy as np
import pytest

from src.metrics import LN2
from src.models import Mechanism, Mode, ScoreTable
from src.rejection import (
    CombineRule,
    UncertaintyMatrix,
    build_mask,
    class_confident,
    combine_masks,
    mask_from_thresholds,
    rejection_rate,
    score_uncertainty,
)
from src.utils.errors import ErrorCode, RejectKitError
from tests.conftest import make_artifact, make_table


def random_table(rng: np.random.Generator, n: int = 400, n_classes: int = 3) -> ScoreTable:
    probs = rng.random((n, n_classes))
    probs[np.abs(probs - 0.5) < 0.01] = 0.3
    labels = (rng.random((n, n_classes)) < 0.3).astype(int)
    return make_table(probs, labels)


class TestConfidence:
    def test_equality_is_never_confident(self) -> None:
        assert not class_confident(0.3, 0.3, Mechanism.ENTROPY)
        assert not class_confident(0.3, 0.3, Mechanism.INTERVAL)
        assert class_confident(0.29, 0.3, Mechanism.ENTROPY)
        assert class_confident(0.31, 0.3, Mechanism.INTERVAL)

    def test_margin_rule_matches_interval_side(self, rng: np.random.Generator) -> None:
        p = rng.random(2000)
        delta = rng.random(2000) * 0.5
        theta = 0.5
        one_sided = (p - delta > theta) | (p + delta < theta)
        np.testing.assert_array_equal(
            class_confident(np.abs(p - theta), delta, Mechanism.INTERVAL), one_sided
        )


class TestMasks:
    def test_vacuous_thresholds(self, rng: np.random.Generator) -> None:
        table = random_table(rng)
        entropy = score_uncertainty(table, Mechanism.ENTROPY)
        interval = score_uncertainty(table, Mechanism.INTERVAL)
        assert mask_from_thresholds(entropy, LN2, Mode.PER_CLASS).accepted.all()
        assert not mask_from_thresholds(entropy, 0.0, Mode.PER_CLASS).accepted.any()
        assert mask_from_thresholds(interval, 0.0, Mode.PER_CLASS).accepted.all()
        assert not mask_from_thresholds(interval, 0.5, Mode.PER_CLASS).accepted.any()

    def test_coverage_is_monotone_in_threshold(self, rng: np.random.Generator) -> None:
        taus = np.linspace(0.0, LN2, 50)
        deltas = np.linspace(0.0, 0.5, 50)
        for _ in range(100):
            table = random_table(rng, n=int(rng.integers(20, 300)), n_classes=int(rng.integers(1, 6)))
            entropy = score_uncertainty(table, Mechanism.ENTROPY)
            interval = score_uncertainty(table, Mechanism.INTERVAL)
            for mode in Mode:
                entropy_masks = [mask_from_thresholds(entropy, tau, mode).accepted for tau in taus]
                interval_masks = [mask_from_thresholds(interval, delta, mode).accepted for delta in deltas]
                for smaller, larger in itertools.pairwise(entropy_masks):
                    assert (larger | ~smaller).all()
                for smaller, larger in itertools.pairwise(interval_masks):
                    assert (smaller | ~larger).all()
                entropy_coverage = [mask.mean() for mask in entropy_masks]
                interval_coverage = [mask.mean() for mask in interval_masks]
                assert entropy_coverage == sorted(entropy_coverage)
                assert interval_coverage == sorted(interval_coverage, reverse=True)

    @pytest.mark.parametrize('theta', [0.5, 0.3])
    def test_interval_mask_matches_direct_rule(self, rng: np.random.Generator, theta: float) -> None:
        for _ in range(20):
            probs = rng.random((500, 4))
            table = make_table(probs, (rng.random((500, 4)) < 0.3).astype(int), theta=theta)
            deltas = rng.uniform(0.0, min(theta, 1.0 - theta), 4)
            artifact = make_artifact(table, list(deltas), mechanism=Mechanism.INTERVAL)
            mask = build_mask(score_uncertainty(table, Mechanism.INTERVAL), artifact)
            direct = (probs - deltas > theta) | (probs + deltas < theta)
            np.testing.assert_array_equal(mask.accepted, direct)

    def test_image_level_accepts_whole_rows(self) -> None:
        table = make_table([[0.99, 0.5], [0.5, 0.55], [0.45, 0.02]], [[1, 0], [0, 1], [0, 0]])
        uncertainty = score_uncertainty(table, Mechanism.ENTROPY)
        per_class = mask_from_thresholds(uncertainty, 0.2, Mode.PER_CLASS)
        image = mask_from_thresholds(uncertainty, 0.2, Mode.IMAGE_LEVEL)
        np.testing.assert_array_equal(per_class.accepted, [[True, False], [False, False], [False, True]])
        np.testing.assert_array_equal(image.accepted, [[True, True], [False, False], [True, True]])
        np.testing.assert_array_equal(image.image_accepted, per_class.image_accepted)

    def test_per_class_thresholds(self) -> None:
        table = make_table([[0.9, 0.9]], [[1, 1]])
        uncertainty = score_uncertainty(table, Mechanism.INTERVAL)
        mask = mask_from_thresholds(uncertainty, [0.3, 0.45], Mode.PER_CLASS)
        np.testing.assert_array_equal(mask.accepted, [[True, False]])

    def test_build_mask_uses_artifact_mode(self, small_table: ScoreTable) -> None:
        artifact = make_artifact(small_table, [0.5], mode=Mode.IMAGE_LEVEL)
        uncertainty = score_uncertainty(small_table, Mechanism.ENTROPY)
        assert build_mask(uncertainty, artifact).mode is Mode.IMAGE_LEVEL
        assert build_mask(uncertainty, artifact, Mode.PER_CLASS).mode is Mode.PER_CLASS

    def test_build_mask_mechanism_mismatch(self, small_table: ScoreTable) -> None:
        artifact = make_artifact(small_table, [0.2], mechanism=Mechanism.INTERVAL)
        with pytest.raises(RejectKitError) as err:
            build_mask(score_uncertainty(small_table, Mechanism.ENTROPY), artifact)
        assert err.value.code is ErrorCode.MECHANISM_MISMATCH

    def test_uncertainty_range_checked(self) -> None:
        with pytest.raises(RejectKitError) as err:
            UncertaintyMatrix(Mechanism.ENTROPY, np.array([[0.8]]), 0.5)
        assert err.value.code is ErrorCode.DOMAIN


class TestRejectionRate:
    def test_per_class_and_image(self) -> None:
        table = make_table([[0.99, 0.5], [0.5, 0.55], [0.45, 0.02]], [[1, 0], [0, 1], [0, 0]])
        mask = mask_from_thresholds(score_uncertainty(table, Mechanism.ENTROPY), 0.2, Mode.PER_CLASS)
        np.testing.assert_allclose(rejection_rate(mask), [2 / 3, 2 / 3])
        assert rejection_rate(mask, per_class=False) == pytest.approx(1 / 3)

    def test_empty_mask(self) -> None:
        table = make_table(np.empty((0, 2)), np.empty((0, 2)))
        mask = mask_from_thresholds(score_uncertainty(table, Mechanism.ENTROPY), 0.2, Mode.PER_CLASS)
        with pytest.raises(RejectKitError) as err:
            rejection_rate(mask)
        assert err.value.code is ErrorCode.EMPTY_MASK


class TestCombine:
    def test_and_or(self, rng: np.random.Generator) -> None:
        table = random_table(rng)
        entropy = mask_from_thresholds(score_uncertainty(table, Mechanism.ENTROPY), 0.4, Mode.PER_CLASS)
        interval = mask_from_thresholds(score_uncertainty(table, Mechanism.INTERVAL), 0.2, Mode.PER_CLASS)
        both = combine_masks(entropy, interval, CombineRule.AND)
        either = combine_masks(entropy, interval, CombineRule.OR)
        np.testing.assert_array_equal(both.accepted, entropy.accepted & interval.accepted)
        np.testing.assert_array_equal(either.accepted, entropy.accepted | interval.accepted)

    def test_image_level_stays_row_uniform(self, rng: np.random.Generator) -> None:
        table = random_table(rng)
        first = mask_from_thresholds(score_uncertainty(table, Mechanism.ENTROPY), 0.3, Mode.IMAGE_LEVEL)
        second = mask_from_thresholds(score_uncertainty(table, Mechanism.INTERVAL), 0.3, Mode.IMAGE_LEVEL)
        for rule in CombineRule:
            accepted = combine_masks(first, second, rule).accepted
            assert (accepted.all(axis=1) | ~accepted.any(axis=1)).all()

    def test_mode_mismatch(self, small_table: ScoreTable) -> None:
        uncertainty = score_uncertainty(small_table, Mechanism.ENTROPY)
        with pytest.raises(RejectKitError) as err:
            combine_masks(
                mask_from_thresholds(uncertainty, 0.3, Mode.PER_CLASS),
                mask_from_thresholds(uncertainty, 0.3, Mode.IMAGE_LEVEL),
            )
        assert err.value.code is ErrorCode.SHAPE_MISMATCH


def test_interval_rejects_boundary_hugging_class_more_than_entropy(rng: np.random.Generator) -> None:
    n = 1000
    hugging = rng.random(n) < 0.5
    spread = rng.random(n) < 0.5
    probs = np.column_stack(
        [
            np.where(hugging, rng.uniform(0.28, 0.32, n), rng.uniform(0.9, 0.99, n)),
            np.where(spread, rng.uniform(0.45, 0.55, n), rng.uniform(0.9, 0.99, n)),
        ]
    )
    table = make_table(probs, rng.integers(0, 2, (n, 2)), theta=0.3)
    entropy = rejection_rate(
        mask_from_thresholds(score_uncertainty(table, Mechanism.ENTROPY), 0.65, Mode.PER_CLASS)
    )
    interval = rejection_rate(
        mask_from_thresholds(score_uncertainty(table, Mechanism.INTERVAL), 0.1, Mode.PER_CLASS)
    )
    assert entropy.mean() == pytest.approx(interval.mean(), abs=0.05)
    assert interval[0] > entropy[0]
    np.testing.assert_allclose(interval, [hugging.mean(), 0.0])
    np.testing.assert_allclose(entropy, [0.0, spread.mean()])
