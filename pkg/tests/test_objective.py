import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from glare.errors import InvalidArgumentError
from glare.lightfield import LightSource, LightingConfig
from glare.objective import (
    LabelSet,
    LossWeights,
    adversarial_loss,
    breakdown,
    distance_loss,
    fitness,
    perceptual_loss,
    similarity_vector,
)


def nll_oracle(values, truth_index):
    """High-precision softmax NLL, no stabilization tricks."""
    import mpmath

    with mpmath.workdps(60):
        exps = [mpmath.e**v for v in values]
        total = mpmath.fsum(exps)
        return float(-mpmath.log(exps[truth_index] / total))


class TestLabelSet:
    def test_valid(self):
        ls = LabelSet(("dog", "cat"), truth_index=1)
        assert ls.truth_label == "cat"

    def test_needs_two_labels(self):
        with pytest.raises(InvalidArgumentError):
            LabelSet(("solo",), truth_index=0)

    def test_rejects_duplicates(self):
        with pytest.raises(InvalidArgumentError):
            LabelSet(("dog", "dog"), truth_index=0)

    def test_truth_in_range(self):
        with pytest.raises(InvalidArgumentError):
            LabelSet(("dog", "cat"), truth_index=2)


class TestSimilarityVector:
    def test_self_similarity(self, rng):
        v = rng.normal(size=8)
        sims = similarity_vector(v, [v, rng.normal(size=8)])
        assert sims[0] == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        sims = similarity_vector(np.array([1.0, 0.0]), [np.array([0.0, 1.0])])
        assert sims[0] == pytest.approx(0.0, abs=1e-12)

    def test_known_value(self):
        sims = similarity_vector(np.array([1.0, 1.0]), [np.array([1.0, 0.0])])
        assert sims[0] == pytest.approx(0.7071067811865476, abs=1e-9)

    def test_zero_norm_rejected(self):
        with pytest.raises(InvalidArgumentError):
            similarity_vector(np.zeros(4), [np.ones(4)])

    def test_dim_mismatch_rejected(self):
        with pytest.raises(InvalidArgumentError):
            similarity_vector(np.ones(4), [np.ones(5)])

    def test_scale_invariance(self, rng):
        img = rng.normal(size=16)
        texts = rng.normal(size=(5, 16))
        np.testing.assert_allclose(
            similarity_vector(3.7 * img, texts), similarity_vector(img, texts), atol=1e-12
        )


class TestAdversarialLoss:
    def test_uniform_vector_gives_log_n(self):
        assert adversarial_loss(np.full(30, 0.25), 7) == pytest.approx(math.log(30), abs=1e-12)

    def test_two_entry_value(self):
        assert adversarial_loss(np.array([2.0, 0.0]), 0) == pytest.approx(0.126928011, abs=1e-9)

    @given(shift=st.floats(-100, 100))
    def test_shift_invariance(self, shift):
        v = np.array([0.3, -0.2, 0.9, 0.0, -0.7])
        assert adversarial_loss(v + shift, 2) == pytest.approx(
            adversarial_loss(v, 2), abs=1e-12
        )

    def test_monotone_in_truth_entry(self):
        v = np.array([0.1, 0.4, -0.3])
        losses = [adversarial_loss(np.array([t, 0.4, -0.3]), 0) for t in (-0.5, 0.0, 0.5, 1.0)]
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_monotone_in_other_entry(self):
        losses = [adversarial_loss(np.array([0.1, t, -0.3]), 0) for t in (-0.5, 0.0, 0.5, 1.0)]
        assert all(b > a for a, b in zip(losses, losses[1:]))

    def test_finite_for_huge_magnitudes(self):
        v = np.array([1e4, -1e4, 5e3, 0.0])
        for t in range(4):
            assert math.isfinite(adversarial_loss(v, t))

    def test_matches_oracle_small_batch(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 81))
            v = rng.uniform(-1, 1, size=n)
            t = int(rng.integers(n))
            assert adversarial_loss(v, t) == pytest.approx(nll_oracle(v, t), abs=1e-12)

    def test_positive_for_finite_vectors(self, rng):
        for _ in range(20):
            v = rng.normal(size=10)
            assert adversarial_loss(v, 3) > 0.0


class TestPerceptualLoss:
    def test_zero_on_identical(self, rng):
        feats = [rng.normal(size=(4, 4)), rng.normal(size=(2, 2))]
        assert perceptual_loss(feats, [f.copy() for f in feats]) == 0.0

    def test_single_layer_value(self):
        assert perceptual_loss([np.array([1.0, 2.0])], [np.array([0.0, 0.0])]) == pytest.approx(5.0)

    def test_symmetry(self, rng):
        fx = [rng.normal(size=(3, 5))]
        fy = [rng.normal(size=(3, 5))]
        assert perceptual_loss(fx, fy) == pytest.approx(perceptual_loss(fy, fx), rel=1e-15)

    def test_tuple_layers(self, rng):
        fx = [(rng.normal(size=(2, 2)), rng.normal(size=(2, 1)))]
        fy = [(fx[0][0] + 1.0, fx[0][1])]
        assert perceptual_loss(fx, fy) == pytest.approx(4.0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InvalidArgumentError):
            perceptual_loss([np.ones((2, 2))], [np.ones((2, 3))])

    def test_layer_count_mismatch_rejected(self):
        with pytest.raises(InvalidArgumentError):
            perceptual_loss([np.ones(2)], [np.ones(2), np.ones(2)])


def spread_config(positions):
    return LightingConfig(tuple(LightSource(x, y, 0.8, 20) for x, y in positions))


class TestDistanceLoss:
    def test_inactive_beyond_threshold(self):
        assert distance_loss(spread_config([(0, 0), (60, 0)]), 50.0) == 0.0

    def test_two_colocated(self):
        assert distance_loss(spread_config([(5, 5), (5, 5)]), 50.0) == pytest.approx(50.0)

    def test_three_colocated(self):
        assert distance_loss(spread_config([(5, 5), (5, 5), (5, 5)]), 50.0) == pytest.approx(150.0)

    def test_brute_force_oracle_exact(self, rng):
        for _ in range(100):
            n = int(rng.integers(1, 6))
            pos = [tuple(rng.uniform(0, 100, 2)) for _ in range(n)]
            cfg = spread_config(pos)
            expected = sum(
                max(0.0, 50.0 - math.hypot(a[0] - b[0], a[1] - b[1]))
                for a, b in combinations(pos, 2)
            )
            assert distance_loss(cfg, 50.0) == expected

    def test_permutation_invariance(self, rng):
        pos = [tuple(rng.uniform(0, 80, 2)) for _ in range(4)]
        base = distance_loss(spread_config(pos), 50.0)
        assert distance_loss(spread_config(pos[::-1]), 50.0) == pytest.approx(base, abs=1e-12)

    def test_translation_invariance(self, rng):
        pos = [tuple(rng.uniform(0, 80, 2)) for _ in range(3)]
        moved = [(x + 17.5, y - 40.25) for x, y in pos]
        assert distance_loss(spread_config(moved), 50.0) == pytest.approx(
            distance_loss(spread_config(pos), 50.0), abs=1e-12
        )

    def test_non_increasing_in_separation(self):
        losses = [distance_loss(spread_config([(0, 0), (d, 0)]), 50.0) for d in (0, 10, 25, 49, 50, 70)]
        assert all(b <= a for a, b in zip(losses, losses[1:]))

    def test_empty_and_single_source(self):
        assert distance_loss(LightingConfig(), 50.0) == 0.0
        assert distance_loss(spread_config([(3, 3)]), 50.0) == 0.0


class TestFitness:
    def test_pure_adversarial_case(self):
        w = LossWeights(alpha=0.1, beta=0.01, dist_threshold=50)
        assert fitness(math.log(30), 0.0, 0.0, w) == pytest.approx(-3.4011973816621555, abs=1e-9)

    def test_penalty_case(self):
        w = LossWeights(alpha=0.1, beta=0.01, dist_threshold=50)
        assert fitness(0.0, 5.0, 50.0, w) == pytest.approx(1.0, abs=1e-12)

    def test_degenerate_weights(self):
        w = LossWeights(alpha=0.0, beta=0.0, dist_threshold=50)
        assert fitness(2.345, 99.0, 1000.0, w) == -2.345

    @given(pecp=st.floats(0, 100), dis=st.floats(0, 500))
    def test_affine_slopes(self, pecp, dis):
        w = LossWeights(alpha=0.1, beta=0.01, dist_threshold=50)
        base = fitness(1.0, pecp, dis, w)
        assert fitness(1.0, pecp + 1.0, dis, w) - base == pytest.approx(0.1, abs=1e-9)
        assert fitness(1.0, pecp, dis + 1.0, w) - base == pytest.approx(0.01, abs=1e-9)

    def test_non_finite_rejected(self):
        w = LossWeights()
        with pytest.raises(InvalidArgumentError):
            fitness(math.nan, 0.0, 0.0, w)
        with pytest.raises(InvalidArgumentError):
            fitness(0.0, math.inf, 0.0, w)

    def test_breakdown_composes(self):
        w = LossWeights(alpha=0.1, beta=0.01, dist_threshold=50)
        b = breakdown(1.0, 2.0, 3.0, w)
        assert b.fitness == pytest.approx(-1.0 + 0.2 + 0.03, abs=1e-12)

    def test_weights_validate(self):
        with pytest.raises(InvalidArgumentError):
            LossWeights(alpha=-0.1)
