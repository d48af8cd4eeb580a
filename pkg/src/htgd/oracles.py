"""Independent oracles: exhaustive enumeration and finite differences.

Everything here recomputes expectations from first principles (all 2^N
Poisson outcomes, central difference quotients) so the closed-form code
paths can be checked against something that shares none of their algebra.
Desk scale only: enumeration is exponential in N by design.
"""

from __future__ import annotations

import numpy as np

from .designs import SurveySample, first_order_array

ENUMERATION_LIMIT = 16


def poisson_outcomes(probs) -> tuple[np.ndarray, np.ndarray]:
    """All 2^N indicator vectors of a Poisson design with their probabilities."""
    p = first_order_array(probs)
    n = p.size
    if n > ENUMERATION_LIMIT:
        raise ValueError(f"enumeration needs N <= {ENUMERATION_LIMIT}, got {n}")
    masks = (np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1
    masks = masks.astype(np.uint8)
    weights = np.where(masks == 1, p[None, :], 1.0 - p[None, :]).prod(axis=1)
    return masks, weights


def rejective_outcomes(probs, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Size-n indicator vectors of the conditioned Poisson design, renormalized."""
    masks, weights = poisson_outcomes(probs)
    keep = masks.sum(axis=1) == n
    masks, weights = masks[keep], weights[keep]
    total = weights.sum()
    if total <= 0.0:
        raise ValueError(f"design gives zero probability to samples of size {n}")
    return masks, weights / total


def expectation_over_outcomes(masks, weights, statistic):
    """Probability-weighted average of a statistic of the survey sample."""
    values = [statistic(SurveySample.from_indicators(m)) for m in masks]
    return np.tensordot(weights, np.asarray(values, dtype=float), axes=(0, 0))


def ht_total_moments(values, probs, ht_total_fn) -> tuple[np.ndarray, float]:
    """Enumerated mean and total variance of an HT-total implementation.

    Calls ``ht_total_fn(values, sample, probs)`` on every Poisson outcome,
    so the implementation itself (not a re-derivation of its formula) is
    what gets averaged.
    """
    masks, weights = poisson_outcomes(probs)
    estimates = np.asarray(
        [np.atleast_1d(ht_total_fn(values, SurveySample.from_indicators(m), probs))
         for m in masks],
        dtype=float,
    )
    mean = weights @ estimates
    total_var = float(weights @ ((estimates - mean) ** 2).sum(axis=1))
    return mean, total_var


def ht_gradient_second_moment(model, theta, data, probs, ht_gradient_fn) -> np.ndarray:
    """Enumerated E[g g^T] of an HT-gradient implementation under Poisson."""
    masks, weights = poisson_outcomes(probs)
    q = model.param_dim
    second = np.zeros((q, q))
    for m, w in zip(masks, weights):
        g = ht_gradient_fn(model, theta, data, SurveySample.from_indicators(m), probs).vector
        second += w * np.outer(g, g)
    return second


def fd_gradient(f, theta: np.ndarray, step: float | None = None) -> np.ndarray:
    """Central-difference gradient of a scalar function of theta."""
    theta = np.asarray(theta, dtype=float)
    if step is None:
        step = 1e-6 * (1.0 + float(np.linalg.norm(theta)))
    out = np.empty_like(theta)
    for k in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[k] += step
        dn[k] -= step
        out[k] = (f(up) - f(dn)) / (2.0 * step)
    return out


def fd_jacobian(f, theta: np.ndarray, step: float | None = None) -> np.ndarray:
    """Central-difference Jacobian of a vector function of theta."""
    theta = np.asarray(theta, dtype=float)
    if step is None:
        step = 1e-6 * (1.0 + float(np.linalg.norm(theta)))
    cols = []
    for k in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[k] += step
        dn[k] -= step
        cols.append((np.asarray(f(up)) - np.asarray(f(dn))) / (2.0 * step))
    return np.stack(cols, axis=-1)


def fd_scalar_derivative(f, x: float, step: float | None = None) -> float:
    """Central difference of a scalar function of a scalar."""
    if step is None:
        step = 1e-6 * (1.0 + abs(x))
    return (f(x + step) - f(x - step)) / (2.0 * step)


def relative_error(approx, exact, scale_floor: float = 1e-12) -> float:
    """Max elementwise deviation relative to the larger of the two scales."""
    a = np.asarray(approx, dtype=float)
    e = np.asarray(exact, dtype=float)
    scale = max(float(np.abs(a).max(initial=0.0)),
                float(np.abs(e).max(initial=0.0)), scale_floor)
    return float(np.abs(a - e).max(initial=0.0)) / scale


def capped_probabilities_bisection(raw_weights, target_size: float) -> np.ndarray:
    """Reference solution of the capped-proportional problem by bisection.

    Solves sum_i min(1, lam * w_i) = target_size for the scalar lam; the
    monotone scalar equation is independent of the iterative
    redistribution used by the production code.
    """
    w = np.asarray(raw_weights, dtype=float)
    positive = w[w > 0.0]
    lo = 0.0
    hi = target_size / positive.sum() if positive.sum() > 0 else 1.0
    while np.minimum(1.0, hi * w).sum() < target_size:
        hi *= 2.0
        if hi > 1e18:
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.minimum(1.0, mid * w).sum() < target_size:
            lo = mid
        else:
            hi = mid
    return np.minimum(1.0, 0.5 * (lo + hi) * w)
