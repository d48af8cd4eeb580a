"""Asymptotic covariance machinery for the survey-sampled optimizer.

The rescaled iterates (theta(t) - theta*) / sqrt(gamma(t)) are
asymptotically normal with covariance Sigma solving the Lyapunov
equation H Sigma + Sigma H + 2 eta Sigma = Gamma, where H is the
empirical-risk Hessian at the stationary point and Gamma is the second
moment of the HT gradient estimator there,

    Gamma = (1/N^2) sum_{i,j} (pi_ij / (pi_i pi_j)) g_i g_j^T,

with g_i the per-record gradients.  At a stationary point the empirical
gradient vanishes, so Gamma coincides with the sampling-noise covariance.
Everything downstream (optimal designs, the gain identities between
link-based, equal and optimal probabilities, and the limiting loss-error
law) is computed from (H, Gamma, Sigma).

Scalar summaries use the Hilbert-Schmidt norm: ||Sigma^{1/2}||_HS^2 =
trace(Sigma).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .designs import (
    InclusionProbabilities,
    SecondOrderProbs,
    equal_probabilities,
    first_order_array,
    normalize_weights,
)
from .models import LinkFunction, LossModel
from .oracles import fd_jacobian

MIN_RATE_TRACES = 30

# Log-log MSE slopes steeper than any admissible polynomial rate flag a
# deterministic (super-polynomial) decay.
_SUPERPOLYNOMIAL_SLOPE = -5.0
_MSE_FLOOR = 1e-280


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def sqrt_psd(a: np.ndarray) -> np.ndarray:
    """Symmetric square root, clipping tiny negative eigenvalues to zero."""
    vals, vecs = np.linalg.eigh(_symmetrize(np.asarray(a, dtype=float)))
    return vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def inv_sqrt_pd(a: np.ndarray) -> np.ndarray:
    """Inverse symmetric square root of a positive-definite matrix."""
    vals, vecs = np.linalg.eigh(_symmetrize(np.asarray(a, dtype=float)))
    if np.any(vals <= 0.0):
        raise ValueError("matrix is singular or indefinite")
    return vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T


def step_size_eta(alpha: float, gamma0: float) -> float:
    """The Lyapunov shift eta implied by the step-size schedule.

    eta = 1/(2 gamma0) at alpha = 1, zero for alpha in (1/2, 1).  Slower
    schedules are rejected: the normal limit needs alpha > 1/2.
    """
    if not 0.5 < alpha <= 1.0:
        raise ValueError("normal-limit analysis needs alpha in (1/2, 1]")
    if alpha == 1.0:
        if gamma0 <= 0.0:
            raise ValueError("gamma0 must be positive")
        return 1.0 / (2.0 * gamma0)
    return 0.0


def gamma_matrix_from_gradients(grads: np.ndarray, probs,
                                second_order: SecondOrderProbs | None = None) -> np.ndarray:
    """Second moment E[g_HT g_HT^T] of the HT gradient from raw gradients.

    With no second-order probabilities the design is taken to be Poisson,
    collapsing the cross terms:  Gamma = (1/N^2) sum_i ((1-p_i)/p_i)
    g_i g_i^T + g_bar g_bar^T with g_bar the full empirical gradient.
    """
    g = np.asarray(grads, dtype=float)
    if g.ndim != 2:
        raise ValueError("gradients must be (N, q)")
    p = first_order_array(probs)
    n = g.shape[0]
    if p.size != n:
        raise ValueError("gradients and probabilities lengths disagree")
    if second_order is None:
        w = (1.0 - p) / p
        noise = (g * w[:, None]).T @ g / n**2
        mean = g.mean(axis=0)
        return _symmetrize(noise + np.outer(mean, mean))
    ratio = second_order.pairwise / np.outer(p, p)
    return _symmetrize(g.T @ ratio @ g / n**2)


def gamma_matrix(model: LossModel, data, theta, probs,
                 second_order: SecondOrderProbs | None = None) -> np.ndarray:
    """Gamma at theta for a fitted model; see gamma_matrix_from_gradients."""
    grads = model.gradients(np.asarray(data, dtype=float), theta)
    return gamma_matrix_from_gradients(grads, probs, second_order)


def solve_lyapunov(hessian: np.ndarray, gamma: np.ndarray, eta: float = 0.0) -> np.ndarray:
    """Solve H Sigma + Sigma H + 2 eta Sigma = Gamma for symmetric H.

    Eigendecompose H = U diag(lam) U'; in that basis the solution is
    elementwise (U' Gamma U)_ij / (lam_i + lam_j + 2 eta).

    Raises:
        ValueError: "unstable Lyapunov pair" when some lam_i + lam_j +
            2 eta <= 0 (no positive-semidefinite solution exists).
    """
    h = _symmetrize(np.asarray(hessian, dtype=float))
    g = _symmetrize(np.asarray(gamma, dtype=float))
    vals, vecs = np.linalg.eigh(h)
    denom = vals[:, None] + vals[None, :] + 2.0 * eta
    if np.any(denom <= 0.0):
        raise ValueError("unstable Lyapunov pair: eigenvalue sum not positive")
    m = (vecs.T @ g @ vecs) / denom
    return _symmetrize(vecs @ m @ vecs.T)


def lyapunov_residual(hessian, sigma, gamma, eta: float = 0.0) -> float:
    """Hilbert-Schmidt norm of H Sigma + Sigma H + 2 eta Sigma - Gamma."""
    h = np.asarray(hessian, dtype=float)
    s = np.asarray(sigma, dtype=float)
    g = np.asarray(gamma, dtype=float)
    return float(np.linalg.norm(h @ s + s @ h + 2.0 * eta * s - g))


def hessian_estimate(model: LossModel, data, theta) -> np.ndarray:
    """Empirical-risk Hessian: analytic per-record average when the model
    provides one, otherwise central differences of the empirical gradient."""
    data = np.asarray(data, dtype=float)
    h = model.mean_hessian(data, theta)
    if h is None:
        h = fd_jacobian(lambda th: model.empirical_gradient(data, th),
                        np.asarray(theta, dtype=float))
    return _symmetrize(h)


def variance_optimal_probs(model: LossModel, data, theta, expected_size: float,
                           floor: float | None = None) -> InclusionProbabilities:
    """Poisson probabilities minimizing the HT gradient's L2 error.

    Weights proportional to the per-record gradient norms; this optimizes
    one-shot gradient estimation, which is not the same thing as
    optimizing the optimizer's asymptotic covariance (see
    :func:`optimal_poisson_probs`).
    """
    g = model.gradients(np.asarray(data, dtype=float), theta)
    norms = np.sqrt((g * g).sum(axis=1))
    if not np.any(norms > 0.0):
        raise ValueError("all per-record gradients vanish at theta")
    kwargs = {} if floor is None else {"floor": floor}
    return normalize_weights(norms, expected_size, **kwargs)


def optimal_poisson_probs(model: LossModel, data, theta, hessian: np.ndarray,
                          expected_size: float,
                          floor: float | None = None) -> InclusionProbabilities:
    """Poisson probabilities minimizing ||Sigma^{1/2}||_HS at fixed budget.

    Weights proportional to ||H^{-1/2} g_i||; requires a positive-definite
    Hessian.
    """
    q_mat = inv_sqrt_pd(hessian)
    g = model.gradients(np.asarray(data, dtype=float), theta)
    norms = np.sqrt(((g @ q_mat) ** 2).sum(axis=1))
    if not np.any(norms > 0.0):
        raise ValueError("all per-record gradients vanish at theta")
    kwargs = {} if floor is None else {"floor": floor}
    return normalize_weights(norms, expected_size, **kwargs)


def empirical_gain_stats(model: LossModel, data, theta, link: LinkFunction,
                         hessian: np.ndarray | None = None) -> tuple[float, float]:
    """The covariance and variance statistics governing the sampling gain.

    With a_i = ||H^{-1/2} g_i|| and raw link weights rho_i:

        c_N      = mean(a^2) - (1/N^2) sum(a^2 / rho) * sum(rho)
        sigma2_N = mean(a^2) - mean(a)^2

    c_N is the empirical covariance between a^2/rho and rho (up to sign
    conventions): positive c_N means the link weights track the weighted
    gradient norms, which is exactly when unequal probabilities beat equal
    ones.  A constant link gives c_N = 0 identically.  sigma2_N uses the
    H^{-1/2}-weighted norms, which is the version making the optimality
    gap identity exact.
    """
    data = np.asarray(data, dtype=float)
    if hessian is None:
        hessian = hessian_estimate(model, data, theta)
    q_mat = inv_sqrt_pd(hessian)
    g = model.gradients(data, theta)
    a = np.sqrt(((g @ q_mat) ** 2).sum(axis=1))
    rho = np.asarray(link.weights(data, theta), dtype=float)
    if np.any(rho <= 0.0) or not np.all(np.isfinite(rho)):
        raise ValueError("gain statistics need strictly positive link weights")
    n = a.size
    a2 = a * a
    c_n = float(a2.mean() - (a2 / rho).sum() * rho.sum() / n**2)
    sigma2_n = float(a2.mean() - a.mean() ** 2)
    return c_n, sigma2_n


@dataclass(frozen=True)
class GainReport:
    """Asymptotic-variance comparison of link-based, equal and optimal designs."""

    trace_link: float
    trace_equal: float
    trace_optimal: float
    c_n: float
    sigma2_n: float
    expected_size: float
    # Absolute residuals of the two exact identities:
    #   2 N0 (tr_link - tr_optimal) = sigma2_N - c_N
    #   2 N0 (tr_equal - tr_link)   = c_N
    gain_gap_residual: float
    equal_gap_residual: float


def gain_comparison(model: LossModel, data, theta, link: LinkFunction,
                    expected_size: float,
                    hessian: np.ndarray | None = None,
                    floor: float | None = None) -> GainReport:
    """Trace of Sigma under the link design vs equal and optimal designs.

    The identity residuals are exact (1e-10 scale) whenever the three
    probability vectors are interior, i.e. the normalization's cap and
    floor never fire.
    """
    data = np.asarray(data, dtype=float)
    if hessian is None:
        hessian = hessian_estimate(model, data, theta)
    c_n, sigma2_n = empirical_gain_stats(model, data, theta, link, hessian=hessian)

    n = len(data)
    kwargs = {} if floor is None else {"floor": floor}
    p_link = normalize_weights(link.weights(data, theta), expected_size, **kwargs)
    p_equal = equal_probabilities(n, expected_size)
    p_star = optimal_poisson_probs(model, data, theta, hessian, expected_size,
                                   floor=floor)

    grads = model.gradients(data, theta)

    def trace_sigma(probs: InclusionProbabilities) -> float:
        gam = gamma_matrix_from_gradients(grads, probs)
        return float(np.trace(solve_lyapunov(hessian, gam, 0.0)))

    tr_link = trace_sigma(p_link)
    tr_equal = trace_sigma(p_equal)
    tr_star = trace_sigma(p_star)

    gain_gap = 2.0 * expected_size * (tr_link - tr_star)
    equal_gap = 2.0 * expected_size * (tr_equal - tr_link)
    return GainReport(
        trace_link=tr_link,
        trace_equal=tr_equal,
        trace_optimal=tr_star,
        c_n=c_n,
        sigma2_n=sigma2_n,
        expected_size=expected_size,
        gain_gap_residual=abs(gain_gap - (sigma2_n - c_n)),
        equal_gap_residual=abs(equal_gap - c_n),
    )


def limit_loss_error_sample(sigma: np.ndarray, hessian: np.ndarray,
                            rng: np.random.Generator, draws: int) -> np.ndarray:
    """Monte Carlo draws of the limiting rescaled loss error.

    The loss error (L(theta(t)) - L(theta*)) / gamma(t) converges to
    (1/2) U' Sigma^{1/2} H Sigma^{1/2} U with U standard normal; this
    samples that quadratic form for distributional comparisons.
    """
    s = sqrt_psd(sigma)
    m = _symmetrize(s @ _symmetrize(np.asarray(hessian, dtype=float)) @ s)
    u = rng.standard_normal((draws, m.shape[0]))
    return 0.5 * np.einsum("ij,jk,ik->i", u, m, u)


@dataclass(frozen=True)
class RateFit:
    """Log-log fit of the mean squared error decay across traces."""

    slope: float
    intercept: float
    r_squared: float
    superpolynomial: bool = False


def rate_bound_fit(traces, theta_star, t_min: int) -> RateFit:
    """Least-squares slope of log mean ||theta(t) - theta*||^2 vs log t.

    Requires at least MIN_RATE_TRACES traces; iterations before t_min are
    discarded as transient.  Exactly-converged (deterministic) runs whose
    MSE underflows, or slopes steeper than any stochastic-approximation
    rate, are flagged superpolynomial.
    """
    if len(traces) < MIN_RATE_TRACES:
        raise ValueError(f"need at least {MIN_RATE_TRACES} traces, got {len(traces)}")
    if t_min < 1:
        raise ValueError("t_min must be at least 1")
    theta_star = np.asarray(theta_star, dtype=float)
    n_iter = traces[0].iterations
    if t_min >= n_iter:
        raise ValueError("t_min leaves no iterations to fit")

    errs = np.stack([
        ((tr.thetas[t_min:] - theta_star) ** 2).sum(axis=1) for tr in traces
    ])
    mse = errs.mean(axis=0)
    ts = np.arange(t_min, n_iter + 1, dtype=float)

    valid = mse > _MSE_FLOOR
    underflow = bool(np.any(~valid))
    if valid.sum() < 3:
        return RateFit(slope=-np.inf, intercept=np.nan, r_squared=np.nan,
                       superpolynomial=True)

    x = np.log(ts[valid])
    y = np.log(mse[valid])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(((y - fitted) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=r2,
        superpolynomial=underflow or slope < _SUPERPOLYNOMIAL_SLOPE,
    )


@dataclass(frozen=True)
class CovarianceDiagnostics:
    """Everything the normal limit needs at one (design, parameter) pair."""

    gamma: np.ndarray
    sigma: np.ndarray
    hs_sq: float
    c_n: float
    sigma2_n: float
    eta: float
    hessian: np.ndarray
    smallest_eig: float


def covariance_diagnostics(model: LossModel, data, theta, link: LinkFunction,
                           expected_size: float, alpha: float = 0.75,
                           gamma0: float = 1.0,
                           floor: float | None = None) -> CovarianceDiagnostics:
    """Assemble H, Gamma, Sigma and the gain statistics for one link design."""
    data = np.asarray(data, dtype=float)
    hessian = hessian_estimate(model, data, theta)
    eigvals = np.linalg.eigvalsh(hessian)
    smallest = float(eigvals.min())
    if smallest <= 0.0:
        raise ValueError("empirical Hessian is not positive definite")
    eta = step_size_eta(alpha, gamma0)
    kwargs = {} if floor is None else {"floor": floor}
    probs = normalize_weights(link.weights(data, theta), expected_size, **kwargs)
    gamma = gamma_matrix(model, data, theta, probs)
    sigma = solve_lyapunov(hessian, gamma, eta)
    resid = lyapunov_residual(hessian, sigma, gamma, eta)
    if resid > 1e-10 * max(float(np.linalg.norm(gamma)), 1e-300):
        raise RuntimeError("Lyapunov solve lost accuracy")
    c_n, sigma2_n = empirical_gain_stats(model, data, theta, link, hessian=hessian)
    return CovarianceDiagnostics(
        gamma=gamma,
        sigma=sigma,
        hs_sq=float(np.trace(sigma)),
        c_n=c_n,
        sigma2_n=sigma2_n,
        eta=eta,
        hessian=hessian,
        smallest_eig=smallest,
    )


def find_stationary_point(model: LossModel, data, theta0=None,
                          tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    """Deterministic full-data stationary point of the empirical risk.

    Damped Newton on the empirical gradient, iterated until
    ||grad|| <= tol.  Diagnostics use this rather than any stochastic
    run's output so they inherit no sampling noise.
    """
    data = np.asarray(data, dtype=float)
    theta = (np.zeros(model.param_dim) if theta0 is None
             else np.array(theta0, dtype=float))
    identity = np.eye(model.param_dim)
    for _ in range(max_iter):
        grad = model.empirical_gradient(data, theta)
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            return theta
        hess = hessian_estimate(model, data, theta)
        lam = 0.0
        for _ in range(60):
            try:
                step = np.linalg.solve(hess + lam * identity, grad)
            except np.linalg.LinAlgError:
                lam = max(2.0 * lam, 1e-8)
                continue
            candidate = theta - step
            new_norm = float(np.linalg.norm(
                model.empirical_gradient(data, candidate)))
            if new_norm < gnorm or lam > 1e12:
                theta = candidate
                break
            lam = max(2.0 * lam, 1e-8)
    grad = model.empirical_gradient(data, theta)
    if float(np.linalg.norm(grad)) <= tol:
        return theta
    raise RuntimeError(
        f"stationary-point search stalled at ||grad|| = {np.linalg.norm(grad):.3e}"
    )
