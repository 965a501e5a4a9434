import numpy as np
import pytest

from robust_domains import (
    ContractViolationError,
    InvalidInputError,
    SimplexDistribution,
    SupportMismatchError,
    kl_divergence,
    multiplicative_update,
    project_to_simplex,
)

from oracles import projection_by_enumeration, projection_by_grid


class TestProjection:
    def test_point_already_on_simplex_is_unchanged(self):
        v = np.array([0.2, 0.3, 0.5])
        assert project_to_simplex(v).weights.tolist() == [0.2, 0.3, 0.5]

    def test_mass_above_one_clips_to_vertex(self):
        # brute-force grid oracle agrees with the exact [1, 0]
        assert np.allclose(projection_by_grid([1.5, 0.5]), [1.0, 0.0], atol=1e-2)
        assert project_to_simplex([1.5, 0.5]).weights.tolist() == [1.0, 0.0]

    def test_negative_coordinate_is_zeroed(self):
        assert np.allclose(projection_by_grid([0.5, 0.5, -1.0]), [0.5, 0.5, 0.0], atol=1e-2)
        assert project_to_simplex([0.5, 0.5, -1.0]).weights.tolist() == [0.5, 0.5, 0.0]

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            k = int(rng.integers(2, 7))
            v = rng.uniform(-3, 3, size=k)
            expected = projection_by_enumeration(v)
            got = project_to_simplex(v).weights
            assert np.abs(got - expected).max() < 1e-9

    def test_idempotent_exactly(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            k = int(rng.integers(1, 8))
            v = rng.normal(scale=2.0, size=k)
            once = project_to_simplex(v).weights
            twice = project_to_simplex(once).weights
            assert np.array_equal(once, twice)

    def test_translation_invariant_along_ones(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            k = int(rng.integers(2, 7))
            v = rng.normal(size=k)
            shift = rng.uniform(-5, 5)
            base = project_to_simplex(v).weights
            shifted = project_to_simplex(v + shift).weights
            assert np.abs(base - shifted).max() < 1e-12

    def test_tied_coordinates_split_evenly(self):
        got = project_to_simplex([2.0, 2.0]).weights
        assert np.allclose(got, [0.5, 0.5], atol=1e-15)

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            project_to_simplex([np.nan, 0.5])
        with pytest.raises(InvalidInputError):
            project_to_simplex([np.inf, 0.5])
        with pytest.raises(InvalidInputError):
            project_to_simplex([])


class TestMultiplicativeUpdate:
    def test_zero_losses_keep_p(self):
        p = SimplexDistribution([0.5, 0.5])
        assert multiplicative_update(p, [0.0, 0.0], 1.0).weights.tolist() == [0.5, 0.5]

    def test_hand_evaluated_update(self):
        # exp(ln 3) = 3 against exp(0) = 1 turns [1/2, 1/2] into [3/4, 1/4]
        p = SimplexDistribution([0.5, 0.5])
        got = multiplicative_update(p, [np.log(3.0), 0.0], 1.0).weights
        assert np.allclose(got, [0.75, 0.25], atol=1e-15)

    def test_uniform_losses_preserve_p(self):
        p = SimplexDistribution([1 / 3, 1 / 3, 1 / 3])
        for c in (0.0, 1.0, 17.5):
            got = multiplicative_update(p, [c, c, c], 2.0).weights
            assert np.abs(got - p.weights).max() < 1e-15

    def test_sums_to_one_and_preserves_zeros(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            k = int(rng.integers(2, 8))
            raw = rng.uniform(size=k)
            raw[rng.integers(0, k)] = 0.0
            p = SimplexDistribution(raw / raw.sum())
            zeros = p.weights == 0
            out = multiplicative_update(p, rng.uniform(0, 5, size=k), rng.uniform(0.01, 2))
            assert abs(out.weights.sum() - 1.0) < 1e-12
            assert np.all(out.weights[zeros] == 0.0)

    def test_huge_losses_do_not_overflow(self):
        p = SimplexDistribution([0.25, 0.75])
        out = multiplicative_update(p, [1e6, 2e6], 1.0)
        assert np.all(np.isfinite(out.weights))
        assert out.weights[1] > 0.999999

    def test_persistently_larger_loss_gains_mass(self):
        # the weight ratio of a dominating stream is non-decreasing
        p = SimplexDistribution([0.5, 0.5])
        rng = np.random.default_rng(8)
        previous_ratio = 1.0
        for _ in range(50):
            high = rng.uniform(1.0, 2.0)
            low = rng.uniform(0.0, high - 0.5)
            p = multiplicative_update(p, [high, low], 0.3)
            ratio = p.weights[0] / p.weights[1]
            assert ratio >= previous_ratio - 1e-12
            previous_ratio = ratio

    def test_negative_loss_rejected(self):
        p = SimplexDistribution([0.5, 0.5])
        with pytest.raises(ContractViolationError):
            multiplicative_update(p, [-0.1, 0.0], 1.0)

    def test_bad_step_rejected(self):
        p = SimplexDistribution([0.5, 0.5])
        with pytest.raises(InvalidInputError):
            multiplicative_update(p, [0.1, 0.0], 0.0)


class TestKLDivergence:
    def test_identical_distributions(self):
        p = SimplexDistribution([0.5, 0.5])
        assert kl_divergence(p, p) == 0.0

    def test_one_hot_against_uniform(self):
        p = SimplexDistribution([1.0, 0.0])
        q = SimplexDistribution([0.5, 0.5])
        assert np.isclose(kl_divergence(p, q), np.log(2.0), atol=1e-15)

    def test_direct_evaluation(self):
        p = SimplexDistribution([0.25, 0.75])
        q = SimplexDistribution([0.5, 0.5])
        expected = 0.25 * np.log(0.5) + 0.75 * np.log(1.5)
        assert np.isclose(kl_divergence(p, q), expected, atol=1e-15)

    def test_support_mismatch(self):
        p = SimplexDistribution([0.5, 0.5])
        q = SimplexDistribution([1.0, 0.0])
        with pytest.raises(SupportMismatchError):
            kl_divergence(p, q)

    def test_pinsker_lower_bound(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            k = int(rng.integers(2, 7))
            p = SimplexDistribution(rng.dirichlet(np.ones(k)))
            q = SimplexDistribution(rng.dirichlet(np.ones(k) * 2) + 1e-9)
            l1 = np.abs(p.weights - q.weights).sum()
            assert kl_divergence(p, q) >= l1 * l1 / 2.0 - 1e-12


class TestSimplexDistribution:
    def test_renormalizes_only_beyond_drift_tolerance(self):
        drifted = np.array([0.5, 0.5 + 5e-13])
        kept = SimplexDistribution(drifted)
        assert np.array_equal(kept.weights, drifted)
        scaled = SimplexDistribution([2.0, 2.0])
        assert scaled.weights.tolist() == [0.5, 0.5]

    def test_rejects_negative_and_empty(self):
        with pytest.raises(InvalidInputError):
            SimplexDistribution([-0.1, 1.1])
        with pytest.raises(InvalidInputError):
            SimplexDistribution([])
        with pytest.raises(InvalidInputError):
            SimplexDistribution([0.0, 0.0])

    def test_uniform(self):
        assert SimplexDistribution.uniform(4).weights.tolist() == [0.25] * 4
