import csv

import numpy as np
import pytest

from htgd.datagen import generate_symmetric_data
from htgd.designs import equal_probabilities, normalize_weights
from htgd.engine import (
    OptimizerConfig,
    RunTrace,
    run_full_gd,
    run_htgd,
    run_minibatch_sgd,
    run_optimizer,
    write_trace_csv,
)
from htgd.estimators import ht_gradient, poisson_variance
from htgd.models import (
    ConstantLink,
    GradientNormLink,
    KernelSymmetricModel,
    LogisticRegressionModel,
    LossModel,
    QuadraticLocationModel,
)
from htgd.designs import draw_poisson
from htgd.rng import derive_rng, derive_seed


class ZeroGradientModel(LossModel):
    param_dim = 2
    data_dim = 2

    def values(self, data, theta):
        return np.zeros(len(data))

    def gradients(self, data, theta):
        return np.zeros((len(data), 2))


def quad_setup(rng, n=40, q=2):
    a = np.eye(q)
    model = QuadraticLocationModel(a)
    data = rng.normal(size=(n, q))
    return model, data


class TestConfig:
    def test_learning_rate_schedule(self):
        cfg = OptimizerConfig(gamma0=2.0, alpha=0.5, iterations=10,
                              expected_size=5.0)
        assert cfg.learning_rate(1) == pytest.approx(2.0)
        assert cfg.learning_rate(4) == pytest.approx(1.0)

    @pytest.mark.parametrize("kw", [
        dict(gamma0=-1.0), dict(alpha=0.0), dict(alpha=1.2),
        dict(iterations=-1), dict(expected_size=0.0),
        dict(optimizer_kind="sgd"), dict(design_kind="bernoulli"),
    ])
    def test_invalid_configs_rejected(self, kw):
        base = dict(gamma0=1.0, alpha=0.8, iterations=5, expected_size=2.0)
        base.update(kw)
        with pytest.raises(ValueError):
            OptimizerConfig(**base)

    def test_boundary_alpha_half_accepted(self):
        OptimizerConfig(gamma0=1.0, alpha=0.5, iterations=5, expected_size=2.0)


class TestRunHtgd:
    def test_census_design_reproduces_full_gd(self, logistic_data):
        model = LogisticRegressionModel(3)
        cfg = dict(gamma0=0.5, alpha=0.6, iterations=30, expected_size=60.0)
        ht = run_htgd(model, logistic_data, ConstantLink(),
                      OptimizerConfig(seed=5, **cfg))
        gd = run_full_gd(model, logistic_data, OptimizerConfig(seed=5, **cfg))
        assert np.array_equal(ht.thetas, gd.thetas)
        assert ht.gradient_evals == 30 * 60

    def test_zero_gradient_model_stays_put(self, rng):
        model = ZeroGradientModel()
        data = rng.normal(size=(20, 2))
        cfg = OptimizerConfig(gamma0=1.0, alpha=0.8, iterations=15,
                              expected_size=5.0, seed=1)
        trace = run_htgd(model, data, ConstantLink(), cfg,
                         theta0=np.array([1.0, -2.0]))
        assert np.all(trace.thetas == np.array([1.0, -2.0]))

    def test_deterministic_reruns(self, rng):
        model, data = quad_setup(rng)
        cfg = OptimizerConfig(gamma0=1.0, alpha=0.8, iterations=40,
                              expected_size=8.0, seed=9, run_id=3)
        link = GradientNormLink(model)
        t1 = run_htgd(model, data, link, cfg)
        t2 = run_htgd(model, data, link, cfg)
        assert np.array_equal(t1.thetas, t2.thetas)
        assert np.array_equal(t1.realized_sizes, t2.realized_sizes)

    def test_projection_keeps_iterates_in_ball(self, rng):
        model, data = quad_setup(rng)
        data += 10.0  # optimum far outside the ball
        cfg = OptimizerConfig(gamma0=1.0, alpha=0.6, iterations=50,
                              expected_size=10.0, seed=2,
                              projection_radius=1.5)
        trace = run_htgd(model, data, ConstantLink(), cfg)
        norms = np.linalg.norm(trace.thetas, axis=1)
        assert np.all(norms <= 1.5 + 1e-12)

    def test_nonfinite_iterate_aborts_with_diagnostic(self, rng):
        model = QuadraticLocationModel(np.array([[100.0]]))
        data = rng.normal(size=(30, 1))
        cfg = OptimizerConfig(gamma0=10.0, alpha=0.5, iterations=500,
                              expected_size=30.0, seed=3,
                              projection_radius=np.inf)
        with pytest.raises(RuntimeError, match="non-finite"):
            run_htgd(model, data, ConstantLink(), cfg)

    def test_rejective_design_runs_with_fixed_sizes(self, rng):
        model, data = quad_setup(rng, n=25)
        cfg = OptimizerConfig(gamma0=1.0, alpha=0.8, iterations=20,
                              expected_size=6.0, seed=4,
                              design_kind="rejective")
        trace = run_htgd(model, data, GradientNormLink(model), cfg)
        assert np.all(trace.realized_sizes == 6)

    def test_uniform_design_ignores_link(self, rng):
        model, data = quad_setup(rng, n=25)
        cfg = OptimizerConfig(gamma0=1.0, alpha=0.8, iterations=20,
                              expected_size=5.0, seed=4,
                              design_kind="uniform")
        t1 = run_htgd(model, data, GradientNormLink(model), cfg)
        t2 = run_htgd(model, data, ConstantLink(), cfg)
        assert np.array_equal(t1.thetas, t2.thetas)

    def test_budget_concentration(self, rng):
        model, data = quad_setup(rng, n=100)
        t_iter, n0 = 200, 20.0
        cfg = OptimizerConfig(gamma0=1.0, alpha=0.8, iterations=t_iter,
                              expected_size=n0, seed=11)
        trace = run_htgd(model, data, ConstantLink(), cfg)
        assert abs(trace.gradient_evals - t_iter * n0) <= 4.0 * np.sqrt(t_iter * n0)

    def test_large_population_convergence_shape(self):
        # single N=5000 population, budgets 10 and 100 per step: the tracked
        # coordinate travels from 0 well toward its target within 2000 steps
        from htgd.datagen import generate_logistic_data
        from htgd.models import SubFeatureLogisticLink

        true_theta = np.array([-9, 0, 3, -9, 4, -9, 15, 0, -7, 1, 0], float)
        model = LogisticRegressionModel(10)
        data = generate_logistic_data(5000, true_theta, derive_rng(787, 3))
        link = SubFeatureLogisticLink(np.array([1, 2, 3, 4, 5, 7]))
        for n in (10, 100):
            cfg = OptimizerConfig(gamma0=10.0, alpha=0.5, iterations=2000,
                                  expected_size=float(n),
                                  seed=derive_seed(787, 4, n))
            trace = run_htgd(model, data, link, cfg)
            assert trace.final_theta[5] < -3.0

    def test_step_direction_conditionally_unbiased(self, rng):
        # averaging the HT gradient over fresh draws approaches the full
        # empirical gradient within a 4-sigma band from the exact variance
        model, data = quad_setup(rng, n=30)
        theta = rng.normal(size=2)
        weights = rng.uniform(0.5, 2.0, 30)
        probs = normalize_weights(weights, 8.0)
        draws = 10_000
        gen = derive_rng(77)
        total = np.zeros(2)
        for _ in range(draws):
            sample = draw_poisson(probs, gen)
            total += ht_gradient(model, theta, data, sample, probs).vector
        mean = total / draws
        target = model.empirical_gradient(data, theta)
        grads = model.gradients(data, theta)
        total_var = poisson_variance(grads, probs) / 30**2
        assert np.linalg.norm(mean - target) <= 4.0 * np.sqrt(total_var / draws)


class TestBaselines:
    def test_minibatch_full_size_equals_gd(self, logistic_data):
        model = LogisticRegressionModel(3)
        cfg = dict(gamma0=0.4, alpha=0.7, iterations=25, expected_size=60.0)
        sgd = run_minibatch_sgd(model, logistic_data, OptimizerConfig(seed=6, **cfg))
        gd = run_full_gd(model, logistic_data, OptimizerConfig(seed=6, **cfg))
        assert np.allclose(sgd.thetas, gd.thetas)

    def test_full_gd_monotone_on_strongly_convex(self, rng):
        model, data = quad_setup(rng)
        cfg = OptimizerConfig(gamma0=0.5, alpha=0.6, iterations=60,
                              expected_size=40.0, seed=0)
        trace = run_full_gd(model, data, cfg)
        risks = [model.empirical_risk(data, th) for th in trace.thetas]
        assert np.all(np.diff(risks) <= 1e-12)

    def test_full_gd_converges_on_scalar_quadratic(self, rng):
        # error after T steps is prod(1 - gamma(t) a) times the initial one
        model = QuadraticLocationModel(np.array([[2.0]]))
        data = rng.normal(size=(50, 1)) + 3.0
        minimizer = data.mean()
        cfg = OptimizerConfig(gamma0=0.4, alpha=0.6, iterations=200,
                              expected_size=50.0, seed=0)
        trace = run_full_gd(model, data, cfg)
        assert abs(trace.final_theta[0] - minimizer) <= 1e-6

    def test_symmetric_model_uses_ascent(self):
        data = generate_symmetric_data(400, rng=derive_rng(31, 4))
        model = KernelSymmetricModel()
        cfg = OptimizerConfig(gamma0=1.0, alpha=0.5, iterations=200,
                              expected_size=400.0, seed=8,
                              projection_radius=2.0)
        trace = run_full_gd(model, data, cfg)
        # ascent on the mean score walks the estimate toward the center
        assert abs(trace.final_theta[0]) < abs(trace.thetas[0][0])

    def test_run_optimizer_dispatch(self, rng):
        model, data = quad_setup(rng)
        cfg = OptimizerConfig(gamma0=0.5, alpha=0.8, iterations=5,
                              expected_size=10.0, seed=1,
                              optimizer_kind="minibatch_sgd")
        trace = run_optimizer(model, data, None, cfg)
        assert trace.iterations == 5
        with pytest.raises(ValueError, match="link"):
            run_optimizer(model, data, None, OptimizerConfig(
                gamma0=0.5, alpha=0.8, iterations=5, expected_size=10.0,
                optimizer_kind="htgd"))


class TestRunTrace:
    def test_consistency_validation(self):
        with pytest.raises(ValueError):
            RunTrace(thetas=np.zeros((3, 2)), realized_sizes=np.array([5, 5]),
                     gradient_evals=11, wall_time=0.0)

    def test_trace_csv_roundtrip(self, rng, tmp_path):
        model, data = quad_setup(rng)
        cfg = OptimizerConfig(gamma0=1.0, alpha=0.8, iterations=12,
                              expected_size=6.0, seed=13, run_id=7)
        trace = run_htgd(model, data, ConstantLink(), cfg)
        path = tmp_path / "trace.csv"
        write_trace_csv(path, 7, trace)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["run_id", "t", "theta_0", "theta_1", "realized_size"]
        assert len(rows) == 1 + 13
        assert rows[1][:2] == ["7", "0"] and rows[1][-1] == "0"
        got = np.array([[float(r[2]), float(r[3])] for r in rows[1:]])
        assert np.array_equal(got, trace.thetas)
        sizes = np.array([int(r[-1]) for r in rows[2:]])
        assert np.array_equal(sizes, trace.realized_sizes)
