import numpy as np
import pytest

from htgd.designs import (
    InclusionProbabilities,
    SurveySample,
    equal_probabilities,
    poisson_second_order,
    rejective_second_order,
)
from htgd.estimators import (
    conditional_variance_fixed_size,
    ht_gradient,
    ht_total,
    poisson_variance,
    sen_yates_grundy_variance,
)
from htgd.models import LossModel, QuadraticLocationModel
from htgd.oracles import (
    ht_total_moments,
    poisson_outcomes,
    rejective_outcomes,
    relative_error,
)
from htgd.rng import derive_rng


def full_sample(n):
    return SurveySample.from_indicators(np.ones(n, dtype=np.uint8))


class TestHTTotal:
    def test_census_recovers_total(self):
        q = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        probs = InclusionProbabilities(np.ones(3), 3)
        assert np.allclose(ht_total(q, full_sample(3), probs), q.sum(axis=0))

    def test_empty_sample_is_zero(self):
        q = np.array([1.0, 2.0, 3.0])
        probs = InclusionProbabilities(np.full(3, 0.5), 3)
        empty = SurveySample.from_indicators(np.zeros(3, dtype=np.uint8))
        assert ht_total(q, empty, probs) == 0.0

    def test_enumerated_mean_is_exact_total(self):
        # all 8 outcomes of the half-probability design average to sum(Q) = 6
        q = np.array([1.0, 2.0, 3.0])
        probs = InclusionProbabilities(np.full(3, 0.5), 3)
        mean, _ = ht_total_moments(q, probs, ht_total)
        assert mean[0] == pytest.approx(6.0, rel=1e-14)

    def test_selected_unit_needs_positive_probability(self):
        q = np.array([1.0, 2.0])
        s = SurveySample.from_indicators([1, 1])
        with pytest.raises(ValueError, match="nonpositive"):
            ht_total(q, s, np.array([0.5, 0.0]))

    def test_unbiased_for_random_instances(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 8))
            q = rng.normal(size=(n, int(rng.integers(1, 3))))
            probs = InclusionProbabilities(rng.uniform(0.15, 0.95, n), n)
            mean, total_var = ht_total_moments(q, probs, ht_total)
            assert relative_error(mean, q.sum(axis=0)) <= 1e-12
            assert relative_error(total_var, poisson_variance(q, probs)) <= 1e-12


class TestPoissonVariance:
    def test_census_variance_zero(self):
        q = np.array([1.0, 2.0])
        assert poisson_variance(q, np.ones(2)) == 0.0

    def test_half_probability_example(self):
        # (1-p)/p = 1 for each unit: 1 + 4 + 9
        q = np.array([1.0, 2.0, 3.0])
        probs = InclusionProbabilities(np.full(3, 0.5), 3)
        assert poisson_variance(q, probs) == pytest.approx(14.0)

    def test_two_unit_example(self):
        q = np.array([1.0, 1.0])
        probs = InclusionProbabilities(np.array([0.2, 0.8]), 2)
        assert poisson_variance(q, probs) == pytest.approx(0.8 / 0.2 + 0.2 / 0.8)


class CountingModel(LossModel):
    """Quadratic location model that records which rows it differentiates."""

    def __init__(self):
        self.inner = QuadraticLocationModel(np.eye(1))
        self.param_dim = 1
        self.data_dim = 1
        self.rows_seen = []

    def values(self, data, theta):
        return self.inner.values(data, theta)

    def gradients(self, data, theta):
        self.rows_seen.append(np.asarray(data, dtype=float).reshape(-1).copy())
        return self.inner.gradients(data, theta)


class TestHTGradient:
    def test_census_equals_empirical_gradient(self):
        model = QuadraticLocationModel(np.eye(2))
        data = np.array([[1.0, 0.0], [0.0, 2.0], [3.0, 1.0]])
        theta = np.array([0.5, -0.5])
        probs = InclusionProbabilities(np.ones(3), 3)
        est = ht_gradient(model, theta, data, full_sample(3), probs)
        assert np.allclose(est.vector, model.empirical_gradient(data, theta))
        assert est.contributing_units == 3

    def test_uniform_design_is_subsample_mean(self):
        # pi = n/N turns the HT sum into the plain mini-batch average
        model = QuadraticLocationModel(np.eye(1))
        data = np.array([[1.0], [2.0], [5.0], [9.0]])
        theta = np.array([0.0])
        probs = equal_probabilities(4, 2.0)
        sample = SurveySample.from_indicators([1, 0, 0, 1])
        est = ht_gradient(model, theta, data, sample, probs)
        sub_mean = model.gradients(data[[0, 3]], theta).mean(axis=0)
        assert np.allclose(est.vector, sub_mean)

    def test_enumerated_unbiasedness(self):
        model = QuadraticLocationModel(np.eye(1))
        data = np.array([[1.0], [2.0], [3.0]])
        theta = np.array([0.5])
        probs = InclusionProbabilities(np.array([0.3, 0.5, 0.7]), 3)
        masks, weights = poisson_outcomes(probs.probs)
        mean = sum(
            w * ht_gradient(model, theta, data,
                            SurveySample.from_indicators(m), probs).vector
            for m, w in zip(masks, weights)
        )
        assert relative_error(mean, model.empirical_gradient(data, theta)) <= 1e-12

    def test_linearity_in_the_loss(self, rng):
        a1 = QuadraticLocationModel(np.array([[2.0]]))
        a2 = QuadraticLocationModel(np.array([[0.5]]))
        combined = QuadraticLocationModel(3.0 * np.array([[2.0]])
                                          + 2.0 * np.array([[0.5]]))
        data = rng.normal(size=(6, 1))
        theta = np.array([0.3])
        probs = InclusionProbabilities(rng.uniform(0.3, 0.9, 6), 6)
        sample = SurveySample.from_indicators(rng.random(6) < probs.probs)
        est = (3.0 * ht_gradient(a1, theta, data, sample, probs).vector
               + 2.0 * ht_gradient(a2, theta, data, sample, probs).vector)
        direct = ht_gradient(combined, theta, data, sample, probs).vector
        assert np.allclose(est, direct)

    def test_only_selected_rows_touched(self):
        model = CountingModel()
        data = np.array([[1.0], [2.0], [3.0], [4.0]])
        probs = InclusionProbabilities(np.full(4, 0.5), 4)
        sample = SurveySample.from_indicators([0, 1, 0, 1])
        ht_gradient(model, np.array([0.0]), data, sample, probs)
        seen = np.concatenate(model.rows_seen)
        assert set(seen) == {2.0, 4.0}


class TestFixedSizeVariance:
    def test_zero_when_ratios_equal(self):
        # Q_i proportional to pi_i: all Q_i/pi_i identical
        pi = np.array([0.4, 0.6, 0.8])
        q = 5.0 * pi
        so = poisson_second_order(InclusionProbabilities(pi, 3))
        assert conditional_variance_fixed_size(q, so) == pytest.approx(0.0)

    def test_zero_for_census_design(self):
        q = np.array([1.0, 7.0])
        so = poisson_second_order(InclusionProbabilities(np.ones(2), 2))
        assert conditional_variance_fixed_size(q, so) == pytest.approx(0.0)

    def test_sign_vs_enumerated_rejective_variance(self):
        # the SYG-signed sum equals Var(ht_total); the as-printed sum is
        # its negative (documented design decision)
        q = np.array([1.0, 2.0, 3.0])
        probs = InclusionProbabilities(np.full(3, 2.0 / 3.0), 3)
        so = rejective_second_order(probs, 2)
        masks, weights = rejective_outcomes(probs.probs, 2)
        pi = so.first_order
        est = np.array([(m / pi * q).sum() for m in masks])
        mean = weights @ est
        var = float(weights @ (est - mean) ** 2)
        syg = sen_yates_grundy_variance(q, so)
        printed = conditional_variance_fixed_size(q, so)
        assert syg == pytest.approx(var, rel=1e-10)
        assert printed == pytest.approx(-var, rel=1e-10)
