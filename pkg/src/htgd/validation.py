"""Bundled oracle checks: every closed form validated against enumeration,
finite differences or brute force, at fixed seeds.

Each check returns (ok, detail); `run_validation` executes the whole
battery and reports one line per check.  The same functions back the
test suite, so `htgd validate` on a fresh checkout is the fast way to
confirm the formula layer is intact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import norm as scipy_norm

from . import oracles
from .asymptotics import (
    empirical_gain_stats,
    gain_comparison,
    gamma_matrix_from_gradients,
    hessian_estimate,
    lyapunov_residual,
    optimal_poisson_probs,
    solve_lyapunov,
)
from .datagen import generate_symmetric_data
from .designs import (
    InclusionProbabilities,
    draw_poisson,
    draw_rejective,
    draw_uniform_without_replacement,
    equal_probabilities,
    normalize_weights,
    poisson_second_order,
    rejective_second_order,
)
from .engine import OptimizerConfig, run_full_gd, run_htgd
from .estimators import (
    ht_gradient,
    ht_total,
    poisson_variance,
    sen_yates_grundy_variance,
)
from .models import (
    AbsoluteDeviationLink,
    ConstantLink,
    FixedWeightsLink,
    KernelSymmetricModel,
    LogisticRegressionModel,
    QuadraticLocationModel,
    QuadraticMarginModel,
)
from .oracles import relative_error
from .rng import derive_rng

VALIDATION_SEED = 20270117


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_probs(rng, n, lo=0.1, hi=0.95) -> InclusionProbabilities:
    return InclusionProbabilities(rng.uniform(lo, hi, n), n)


# ---------------------------------------------------------------------------
# sampling designs


def check_normalize_capping(seed=VALIDATION_SEED) -> CheckResult:
    """Iterative cap-and-redistribute agrees with the bisection oracle."""
    rng = derive_rng(seed, 1)
    worst = 0.0
    cases = [(np.array([10.0, 1.0, 1.0]), 2.0)]
    for _ in range(20):
        n = int(rng.integers(3, 12))
        w = rng.uniform(0.0, 5.0, n)
        w[rng.integers(0, n)] += 10.0  # force at least one likely cap
        n0 = float(rng.uniform(1.0, n - 0.5))
        cases.append((w, n0))
    for w, n0 in cases:
        if not np.any(w > 0):
            continue
        got = normalize_weights(w, n0, floor=1e-12).probs
        want = oracles.capped_probabilities_bisection(w, n0)
        worst = max(worst, float(np.abs(got - want).max()))
    ok = worst < 1e-9
    return CheckResult("designs.normalize_weights capping vs bisection",
                       ok, f"max deviation {worst:.2e}")


def check_poisson_frequencies(seed=VALIDATION_SEED, draws=100_000) -> CheckResult:
    rng = derive_rng(seed, 2)
    p = np.array([0.15, 0.3, 0.5, 0.7, 0.9, 0.45])
    probs = InclusionProbabilities(p, p.size)
    counts = np.zeros(p.size)
    for _ in range(draws):
        counts[draw_poisson(probs, rng).indices] += 1
    freq = counts / draws
    band = 4.0 * np.sqrt(p * (1.0 - p) / draws)
    ok = bool(np.all(np.abs(freq - p) < band))
    return CheckResult("designs.draw_poisson inclusion frequencies", ok,
                       f"max |freq - p| = {np.abs(freq - p).max():.2e}")


def check_poisson_joint_law(seed=VALIDATION_SEED, draws=100_000) -> CheckResult:
    """All 8 outcomes of p = (1/2,1/2,1/2) uniform; (0.2,0.8) exact product."""
    rng = derive_rng(seed, 3)
    probs = InclusionProbabilities(np.full(3, 0.5), 3)
    counts = np.zeros(8)
    for _ in range(draws):
        s = draw_poisson(probs, rng)
        counts[int(s.indicators @ (1 << np.arange(3)))] += 1
    freq = counts / draws
    band = 4.0 * np.sqrt((1 / 8) * (7 / 8) / draws)
    ok = bool(np.all(np.abs(freq - 1 / 8) < band))

    probs2 = InclusionProbabilities(np.array([0.2, 0.8]), 2)
    both = sum(
        draw_poisson(probs2, rng).realized_size == 2 for _ in range(draws)
    ) / draws
    se = np.sqrt(0.16 * 0.84 / draws)
    ok = ok and abs(both - 0.16) < 3.0 * se
    return CheckResult("designs.draw_poisson joint law", ok,
                       f"uniform-outcome dev {np.abs(freq - 1/8).max():.2e}, "
                       f"P(1,1) dev {abs(both - 0.16):.2e}")


def check_rejective(seed=VALIDATION_SEED, draws=100_000) -> CheckResult:
    rng = derive_rng(seed, 4)
    # equal probabilities, n = 2 of N = 4: uniform over the 6 pairs
    probs = equal_probabilities(4, 2.0)
    counts: dict[tuple, int] = {}
    for _ in range(draws):
        s = draw_rejective(probs, 2, rng)
        key = tuple(s.indices)
        counts[key] = counts.get(key, 0) + 1
    freqs = np.array([counts.get(k, 0) for k in counts]) / draws
    band = 4.0 * np.sqrt((1 / 6) * (5 / 6) / draws)
    ok = len(counts) == 6 and bool(np.all(np.abs(freqs - 1 / 6) < band))

    # skewed probabilities, n = 1: exact law by enumerating the 8 outcomes
    p = np.array([0.9, 0.1, 0.5])
    probs3 = InclusionProbabilities(p, 3)
    masks, weights = oracles.rejective_outcomes(p, 1)
    exact_first = weights @ masks
    hits = np.zeros(3)
    for _ in range(draws):
        hits[draw_rejective(probs3, 1, rng).indices] += 1
    freq = hits / draws
    band = 4.0 * np.sqrt(exact_first * (1 - exact_first) / draws)
    ok = ok and bool(np.all(np.abs(freq - exact_first) < band))
    return CheckResult("designs.draw_rejective conditional law", ok,
                       f"max dev {np.abs(freq - exact_first).max():.2e}")


def check_uniform_design(seed=VALIDATION_SEED, draws=100_000) -> CheckResult:
    rng = derive_rng(seed, 5)
    hits = np.zeros(5)
    for _ in range(draws):
        hits[draw_uniform_without_replacement(1, 5, rng).indices] += 1
    freq = hits / draws
    band = 4.0 * np.sqrt(0.2 * 0.8 / draws)
    ok = bool(np.all(np.abs(freq - 0.2) < band))

    pair_counts: dict[tuple, int] = {}
    for _ in range(draws):
        key = tuple(draw_uniform_without_replacement(2, 4, rng).indices)
        pair_counts[key] = pair_counts.get(key, 0) + 1
    freqs = np.array(list(pair_counts.values())) / draws
    band = 4.0 * np.sqrt((1 / 6) * (5 / 6) / draws)
    ok = ok and len(pair_counts) == 6 and bool(np.all(np.abs(freqs - 1 / 6) < band))
    return CheckResult("designs.draw_uniform_without_replacement frequencies",
                       ok, f"max pair dev {np.abs(freqs - 1/6).max():.2e}")


def check_second_order(seed=VALIDATION_SEED) -> CheckResult:
    p = np.array([0.2, 0.8, 0.4])
    second = poisson_second_order(InclusionProbabilities(p, 3))
    masks, weights = oracles.poisson_outcomes(p)
    joint = (weights[:, None, None] *
             (masks[:, :, None] * masks[:, None, :])).sum(axis=0)
    err = float(np.abs(second.pairwise - joint).max())
    return CheckResult("designs.poisson_second_order vs enumeration",
                       err < 1e-14, f"max deviation {err:.2e}")


# ---------------------------------------------------------------------------
# HT estimation


def check_ht_exactness(seed=VALIDATION_SEED, instances=50) -> CheckResult:
    """Enumerated mean and variance of ht_total match the closed forms."""
    rng = derive_rng(seed, 6)
    worst_mean = worst_var = 0.0
    for _ in range(instances):
        n = int(rng.integers(2, 9))
        k = int(rng.integers(1, 4))
        q = rng.normal(size=(n, k)) * rng.uniform(0.5, 3.0)
        probs = _random_probs(rng, n)
        mean, total_var = oracles.ht_total_moments(q, probs, ht_total)
        worst_mean = max(worst_mean, relative_error(mean, q.sum(axis=0)))
        worst_var = max(worst_var,
                        relative_error(total_var, poisson_variance(q, probs)))
    ok = worst_mean <= 1e-12 and worst_var <= 1e-12
    return CheckResult("estimators.ht_total enumerated mean/variance", ok,
                       f"mean err {worst_mean:.2e}, var err {worst_var:.2e}")


def check_ht_gradient_unbiased(seed=VALIDATION_SEED) -> CheckResult:
    model = QuadraticLocationModel(np.eye(1))
    data = np.array([[1.0], [2.0], [3.0]])
    theta = np.array([0.5])
    probs = InclusionProbabilities(np.array([0.3, 0.5, 0.7]), 3)
    masks, weights = oracles.poisson_outcomes(probs.probs)
    mean = np.zeros(1)
    for m, w in zip(masks, weights):
        sample = oracles.SurveySample.from_indicators(m)
        mean += w * ht_gradient(model, theta, data, sample, probs).vector
    err = relative_error(mean, model.empirical_gradient(data, theta))
    return CheckResult("estimators.ht_gradient enumerated unbiasedness",
                       err <= 1e-12, f"relative error {err:.2e}")


def check_variance_sign(seed=VALIDATION_SEED) -> CheckResult:
    """Which sign of the fixed-size variance double sum matches enumeration.

    For the rejective design the Sen-Yates-Grundy-signed sum equals the
    enumerated variance; the as-printed sum is its negative.
    """
    q = np.array([1.0, 2.0, 3.0])
    p = np.full(3, 2.0 / 3.0)
    probs = InclusionProbabilities(p, 3)
    second = rejective_second_order(probs, 2)
    masks, weights = oracles.rejective_outcomes(p, 2)
    pi = second.first_order
    estimates = np.array([(m / pi * q).sum() for m in masks])
    mean = float(weights @ estimates)
    var = float(weights @ (estimates - mean) ** 2)
    syg = sen_yates_grundy_variance(q, second)
    err = relative_error(syg, var)
    return CheckResult("estimators fixed-size variance sign (SYG = +Var)",
                       err <= 1e-10, f"SYG vs enumerated Var error {err:.2e}")


# ---------------------------------------------------------------------------
# models


def _fd_check_model(model, data, rng, n_pairs=20,
                    grad_tol=1e-5, hess_tol=1e-4) -> float:
    worst = 0.0
    n = len(data)
    for _ in range(n_pairs):
        record = data[int(rng.integers(0, n))]
        theta = rng.normal(scale=1.5, size=model.param_dim)
        grad = model.gradient(record, theta)
        fd = oracles.fd_gradient(lambda th: model.value(record, th), theta)
        worst = max(worst, relative_error(grad, fd) / grad_tol)
        hess = model.hessian(record, theta)
        if hess is not None:
            fd_h = oracles.fd_jacobian(lambda th: model.gradient(record, th), theta)
            worst = max(worst, relative_error(hess, fd_h) / hess_tol)
    return worst


def check_model_gradients(seed=VALIDATION_SEED) -> CheckResult:
    rng = derive_rng(seed, 7)
    worst = 0.0
    log_data = np.column_stack([
        np.where(rng.random(30) < 0.5, 1.0, -1.0), rng.random((30, 4))
    ])
    worst = max(worst, _fd_check_model(LogisticRegressionModel(4), log_data, rng))
    worst = max(worst, _fd_check_model(QuadraticMarginModel(4), log_data, rng))
    a = rng.normal(size=(3, 3))
    quad = QuadraticLocationModel(a @ a.T + 0.5 * np.eye(3))
    worst = max(worst, _fd_check_model(quad, rng.normal(size=(30, 3)), rng))
    return CheckResult("models gradient/Hessian finite differences",
                       worst <= 1.0, f"worst error / tolerance = {worst:.3f}")


def check_kernel_score(seed=VALIDATION_SEED) -> CheckResult:
    """Kernel score derivative: finite differences and an independent
    mixture-of-Gaussians closed form (scipy.stats.norm)."""
    rng = derive_rng(seed, 8)
    data = rng.standard_normal(400)
    model = KernelSymmetricModel(bandwidth=0.35)
    theta = 0.3
    worst = 0.0
    for x in (-1.0, 1.0, 0.4):
        analytic = float(model.density_dtheta(np.array([x]), theta, data)[0])
        fd = oracles.fd_scalar_derivative(
            lambda th: float(model.density(np.array([x]), th, data)[0]), theta)
        worst = max(worst, relative_error(analytic, fd) / 1e-4)
        # independent closed form: f_hat is a mixture of N(X_i - th, h) and
        # N(th - X_i, h); d/dth moves the centers by -1 resp. +1, and
        # d/dloc pdf = (x - loc)/h^2 * pdf
        h = model.bandwidth_for(data)
        mix = 0.5 * (scipy_norm.pdf(x, loc=data - theta, scale=h)
                     + scipy_norm.pdf(x, loc=theta - data, scale=h)).mean()
        dmix = 0.5 * (-(x - (data - theta)) / h**2
                      * scipy_norm.pdf(x, loc=data - theta, scale=h)
                      + (x - (theta - data)) / h**2
                      * scipy_norm.pdf(x, loc=theta - data, scale=h)).mean()
        dens = float(model.density(np.array([x]), theta, data)[0])
        worst = max(worst, relative_error(dens, mix) / 1e-10)
        worst = max(worst, relative_error(analytic, dmix) / 1e-10)
    return CheckResult("models kernel score derivative (fd + closed form)",
                       worst <= 1.0, f"worst error / tolerance = {worst:.3f}")


def check_symmetric_mean_field(seed=VALIDATION_SEED) -> CheckResult:
    """Mixture data: the score mean field pulls theta = 1 back toward 0.

    The absolute-deviation link's Pearson correlation with the score
    magnitude is reported but not gated: measured on this mixture it is
    mildly negative at the symmetry point and sign-unstable elsewhere, so
    the link's worth shows up in the end-to-end variance comparison, not
    in this marginal statistic.
    """
    rng = derive_rng(seed, 9)
    data = generate_symmetric_data(1000, rng=rng)
    model = KernelSymmetricModel()
    pull = model.mean_field(np.array([1.0]), data)
    terms = model.score_terms(np.array([0.0]), data)
    link = AbsoluteDeviationLink().weights(data, np.array([0.0]))
    corr = float(np.corrcoef(link, np.abs(terms))[0, 1])
    return CheckResult("models symmetric mean field direction",
                       pull < 0.0,
                       f"mean field at 1 = {pull:.4f}, corr(|X|, |s|) = {corr:.3f}")


# ---------------------------------------------------------------------------
# asymptotics


def check_lyapunov_suite(seed=VALIDATION_SEED, instances=100) -> CheckResult:
    rng = derive_rng(seed, 10)
    worst_res = worst_id = 0.0
    for _ in range(instances):
        q = int(rng.integers(1, 7))
        a = rng.normal(size=(q, q))
        h = a @ a.T + 0.1 * np.eye(q)
        b = rng.normal(size=(q, q))
        g = b @ b.T
        eta = float(rng.choice([0.0, rng.uniform(0.0, 1.0)]))
        sigma = solve_lyapunov(h, g, eta)
        res = lyapunov_residual(h, sigma, g, eta)
        worst_res = max(worst_res, res / max(np.linalg.norm(g), 1e-300))
        sigma0 = solve_lyapunov(h, g, 0.0)
        lhs = 2.0 * np.trace(sigma0)
        rhs = np.trace(np.linalg.solve(h, g))
        worst_id = max(worst_id, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
    ok = worst_res <= 1e-10 and worst_id <= 1e-10
    return CheckResult("asymptotics.solve_lyapunov residual + trace identity",
                       ok, f"residual {worst_res:.2e}, identity {worst_id:.2e}")


def _random_gain_instance(rng):
    n = int(rng.integers(10, 51))
    q = int(rng.integers(1, 4))
    a = rng.normal(size=(q, q))
    model = QuadraticLocationModel(a @ a.T + 0.5 * np.eye(q))
    data = rng.normal(size=(n, q)) * rng.uniform(0.5, 2.0)
    theta = rng.normal(size=q)
    link = FixedWeightsLink(rng.uniform(0.5, 1.5, n))
    n0 = 0.2 * n  # keeps all three designs interior (no cap, no floor)
    return model, data, theta, link, n0


def check_gain_identities(seed=VALIDATION_SEED, instances=50) -> CheckResult:
    """Exact identities tying the design gaps to c_N and sigma2_N."""
    rng = derive_rng(seed, 11)
    worst = 0.0
    for _ in range(instances):
        model, data, theta, link, n0 = _random_gain_instance(rng)
        report = gain_comparison(model, data, theta, link, n0)
        scale = max(2.0 * n0 * report.trace_equal, 1e-300)
        worst = max(worst, report.gain_gap_residual / scale,
                    report.equal_gap_residual / scale)
    return CheckResult("asymptotics gain identities (link/equal/optimal)",
                       worst <= 1e-10, f"worst relative residual {worst:.2e}")


def check_optimality(seed=VALIDATION_SEED, instances=20, tries=200) -> CheckResult:
    """No random feasible design beats the optimal probabilities."""
    rng = derive_rng(seed, 12)
    margin = np.inf
    for _ in range(instances):
        model, data, theta, _, n0 = _random_gain_instance(rng)
        hessian = hessian_estimate(model, data, theta)
        p_star = optimal_poisson_probs(model, data, theta, hessian, n0)
        grads = model.gradients(data, theta)
        tr_star = float(np.trace(solve_lyapunov(
            hessian, gamma_matrix_from_gradients(grads, p_star), 0.0)))
        for _ in range(tries):
            w = rng.uniform(0.3, 3.0, len(data))
            probs = normalize_weights(w, n0)
            tr = float(np.trace(solve_lyapunov(
                hessian, gamma_matrix_from_gradients(grads, probs), 0.0)))
            margin = min(margin, tr - tr_star)
    return CheckResult("asymptotics optimal design beats random designs",
                       margin >= -1e-10, f"worst trace margin {margin:.2e}")


def check_gamma_enumerated(seed=VALIDATION_SEED) -> CheckResult:
    """Gamma equals the enumerated second moment E[g_HT g_HT'] (N=3 toy),
    and the census design gives the outer product of the mean gradient."""
    model = QuadraticLocationModel(np.eye(1))
    data = np.array([[1.0], [2.0], [4.0]])
    theta = np.array([0.0])
    probs = InclusionProbabilities(np.array([0.3, 0.5, 0.7]), 3)
    second = oracles.ht_gradient_second_moment(model, theta, data, probs,
                                               ht_gradient)
    grads = model.gradients(data, theta)
    gamma = gamma_matrix_from_gradients(grads, probs)
    err = relative_error(gamma, second)

    census = InclusionProbabilities(np.ones(3), 3)
    gamma_census = gamma_matrix_from_gradients(grads, census)
    mean = grads.mean(axis=0)
    err2 = relative_error(gamma_census, np.outer(mean, mean))
    ok = err <= 1e-12 and err2 <= 1e-12
    return CheckResult("asymptotics.gamma_matrix enumerated second moment",
                       ok, f"toy err {err:.2e}, census err {err2:.2e}")


def check_gain_stats_special_cases(seed=VALIDATION_SEED) -> CheckResult:
    """Constant link gives c_N = 0 exactly; gradient-norm-type link at
    H = I closes the gap (c_N = sigma2_N)."""
    rng = derive_rng(seed, 13)
    model = QuadraticLocationModel(np.eye(2))
    data = rng.normal(size=(25, 2))
    theta = rng.normal(size=2)
    c0, _ = empirical_gain_stats(model, data, theta, ConstantLink(),
                                 hessian=np.eye(2))
    grads = model.gradients(data, theta)
    link = FixedWeightsLink(np.sqrt((grads**2).sum(axis=1)))
    c1, s1 = empirical_gain_stats(model, data, theta, link, hessian=np.eye(2))
    ok = abs(c0) <= 1e-12 and abs(c1 - s1) <= 1e-12 * max(abs(s1), 1e-300)
    return CheckResult("asymptotics gain statistics special cases",
                       ok, f"constant c_N = {c0:.2e}, gap closure {abs(c1-s1):.2e}")


# ---------------------------------------------------------------------------
# engine


def check_engine_census_equals_gd(seed=VALIDATION_SEED) -> CheckResult:
    """Expected size N with a constant link selects everyone: the survey
    optimizer reproduces full gradient descent step for step."""
    rng = derive_rng(seed, 14)
    model = LogisticRegressionModel(2)
    data = np.column_stack([
        np.where(rng.random(40) < 0.5, 1.0, -1.0), rng.random((40, 2))
    ])
    cfg = dict(gamma0=0.5, alpha=0.6, iterations=25, expected_size=40.0)
    htgd_trace = run_htgd(model, data, ConstantLink(),
                          OptimizerConfig(seed=3, **cfg))
    gd_trace = run_full_gd(model, data, OptimizerConfig(seed=3, **cfg))
    err = float(np.abs(htgd_trace.thetas - gd_trace.thetas).max())
    return CheckResult("engine census design reproduces full GD",
                       err == 0.0, f"max |difference| = {err:.2e}")


def check_engine_determinism(seed=VALIDATION_SEED) -> CheckResult:
    rng = derive_rng(seed, 15)
    model = QuadraticLocationModel(np.eye(2))
    data = rng.normal(size=(60, 2))
    cfg = OptimizerConfig(gamma0=1.0, alpha=0.8, iterations=50,
                          expected_size=10.0, seed=11, run_id=4)
    link = ConstantLink()
    t1 = run_htgd(model, data, link, cfg)
    t2 = run_htgd(model, data, link, cfg)
    same = (np.array_equal(t1.thetas, t2.thetas)
            and np.array_equal(t1.realized_sizes, t2.realized_sizes))
    return CheckResult("engine bit-identical reruns", same,
                       "traces identical" if same else "traces differ")


ALL_CHECKS: tuple[Callable[..., CheckResult], ...] = (
    check_normalize_capping,
    check_poisson_frequencies,
    check_poisson_joint_law,
    check_rejective,
    check_uniform_design,
    check_second_order,
    check_ht_exactness,
    check_ht_gradient_unbiased,
    check_variance_sign,
    check_model_gradients,
    check_kernel_score,
    check_symmetric_mean_field,
    check_lyapunov_suite,
    check_gain_identities,
    check_optimality,
    check_gamma_enumerated,
    check_gain_stats_special_cases,
    check_engine_census_equals_gd,
    check_engine_determinism,
)


def run_validation(seed: int = VALIDATION_SEED, echo=print) -> list[CheckResult]:
    """Run the whole battery; one PASS/FAIL line per check."""
    results = []
    for check in ALL_CHECKS:
        result = check(seed)
        results.append(result)
        status = "PASS" if result.passed else "FAIL"
        echo(f"[{status}] {result.name}: {result.detail}")
    return results
