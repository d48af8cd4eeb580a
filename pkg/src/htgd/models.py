"""Loss families with analytic gradients, plus the sampling link functions.

Per-record losses follow the :class:`LossModel` interface (value, gradient,
optional Hessian, and vectorized batch forms).  The symmetric location
model is different: its score couples every record through a kernel
density estimate, so it is exposed through a mean-field interface
(:class:`KernelSymmetricModel`) instead of a per-record gradient.

Link functions map a record and the current parameter to a nonnegative
sampling weight.  They are tagged ``cheap`` when evaluation is cheaper
than a gradient call and ``oracle`` when they need the very quantity the
sampling is meant to avoid computing.

Parameter layout for the regression models: ``theta[0]`` is the
intercept, ``theta[1:]`` the feature coefficients.  Data rows are
``[y, x_1, ..., x_d]`` with labels in {-1, +1}.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np
from scipy.special import expit

_SQRT_2PI = np.sqrt(2.0 * np.pi)

DEFAULT_DENSITY_FLOOR = 1e-12


def _check_labels(y: np.ndarray) -> None:
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")


def _check_theta(theta: np.ndarray, expected: int) -> np.ndarray:
    t = np.asarray(theta, dtype=float)
    if t.shape != (expected,):
        raise ValueError(f"theta must have shape ({expected},), got {t.shape}")
    return t


class LossModel(ABC):
    """Smooth per-record loss psi(z, theta) with analytic first derivatives."""

    param_dim: int
    data_dim: int

    @abstractmethod
    def values(self, data: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Loss at each record; shape (len(data),)."""

    @abstractmethod
    def gradients(self, data: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. theta at each record; shape (len(data), param_dim)."""

    def hessians(self, data: np.ndarray, theta: np.ndarray) -> np.ndarray | None:
        """Per-record Hessians (len(data), q, q), or None when unavailable."""
        return None

    def value(self, record, theta) -> float:
        return float(self.values(np.atleast_2d(np.asarray(record, dtype=float)), theta)[0])

    def gradient(self, record, theta) -> np.ndarray:
        return self.gradients(np.atleast_2d(np.asarray(record, dtype=float)), theta)[0]

    def hessian(self, record, theta) -> np.ndarray | None:
        h = self.hessians(np.atleast_2d(np.asarray(record, dtype=float)), theta)
        return None if h is None else h[0]

    def empirical_risk(self, data: np.ndarray, theta: np.ndarray) -> float:
        return float(self.values(data, theta).mean())

    def empirical_gradient(self, data: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return self.gradients(data, theta).mean(axis=0)

    def mean_hessian(self, data: np.ndarray, theta: np.ndarray) -> np.ndarray | None:
        h = self.hessians(data, theta)
        return None if h is None else h.mean(axis=0)


class LogisticRegressionModel(LossModel):
    """Negative conditional log-likelihood of linear logistic regression.

    psi((x, y), theta) = log(1 + e^h) - h (y+1)/2 with h = alpha + beta'x,
    gradient (sigmoid(h) - (y+1)/2) (1, x).
    """

    def __init__(self, n_features: int) -> None:
        self.n_features = int(n_features)
        self.param_dim = 1 + self.n_features
        self.data_dim = 1 + self.n_features

    def _split(self, data: np.ndarray, theta: np.ndarray):
        theta = _check_theta(theta, self.param_dim)
        y = data[:, 0]
        _check_labels(y)
        x = data[:, 1:]
        h = theta[0] + x @ theta[1:]
        return y, x, h

    def values(self, data, theta):
        y, _, h = self._split(np.asarray(data, dtype=float), theta)
        return np.logaddexp(0.0, h) - h * (y + 1.0) / 2.0

    def gradients(self, data, theta):
        y, x, h = self._split(np.asarray(data, dtype=float), theta)
        r = expit(h) - (y + 1.0) / 2.0
        out = np.empty((data.shape[0], self.param_dim))
        out[:, 0] = r
        out[:, 1:] = r[:, None] * x
        return out

    def hessians(self, data, theta):
        y, x, h = self._split(np.asarray(data, dtype=float), theta)
        s = expit(h)
        w = s * (1.0 - s)
        xt = np.concatenate([np.ones((data.shape[0], 1)), x], axis=1)
        return w[:, None, None] * (xt[:, :, None] * xt[:, None, :])


class QuadraticMarginModel(LossModel):
    """Squared-margin classification cost psi = (1 - y h(x, theta))^2 / 2."""

    def __init__(self, n_features: int) -> None:
        self.n_features = int(n_features)
        self.param_dim = 1 + self.n_features
        self.data_dim = 1 + self.n_features

    def _margin(self, data: np.ndarray, theta: np.ndarray):
        theta = _check_theta(theta, self.param_dim)
        y = data[:, 0]
        _check_labels(y)
        x = data[:, 1:]
        h = theta[0] + x @ theta[1:]
        return y, x, h

    def values(self, data, theta):
        y, _, h = self._margin(np.asarray(data, dtype=float), theta)
        return 0.5 * (1.0 - y * h) ** 2

    def gradients(self, data, theta):
        y, x, h = self._margin(np.asarray(data, dtype=float), theta)
        r = -y * (1.0 - y * h)
        out = np.empty((data.shape[0], self.param_dim))
        out[:, 0] = r
        out[:, 1:] = r[:, None] * x
        return out

    def hessians(self, data, theta):
        data = np.asarray(data, dtype=float)
        _ = self._margin(data, theta)
        x = data[:, 1:]
        xt = np.concatenate([np.ones((data.shape[0], 1)), x], axis=1)
        # y^2 = 1, so the curvature is the outer product alone
        return xt[:, :, None] * xt[:, None, :]


class QuadraticLocationModel(LossModel):
    """Strongly convex toy loss psi(z, theta) = (theta - z)' A (theta - z) / 2.

    The curvature A is a fixed symmetric positive-definite matrix (scalar
    inputs mean A = a I with q = 1), so the empirical Hessian is exactly A
    and the minimizer is the data mean.
    """

    def __init__(self, curvature=1.0) -> None:
        a = np.atleast_2d(np.asarray(curvature, dtype=float))
        if a.shape[0] != a.shape[1]:
            raise ValueError("curvature must be square")
        if not np.allclose(a, a.T):
            raise ValueError("curvature must be symmetric")
        self.curvature = a
        self.param_dim = a.shape[0]
        self.data_dim = a.shape[0]

    def _residuals(self, data: np.ndarray, theta: np.ndarray) -> np.ndarray:
        theta = _check_theta(theta, self.param_dim)
        z = np.asarray(data, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        return theta[None, :] - z

    def values(self, data, theta):
        r = self._residuals(data, theta)
        return 0.5 * ((r @ self.curvature) * r).sum(axis=1)

    def gradients(self, data, theta):
        return self._residuals(data, theta) @ self.curvature

    def hessians(self, data, theta):
        n = len(np.asarray(data))
        return np.broadcast_to(self.curvature, (n, self.param_dim, self.param_dim)).copy()


class KernelSymmetricModel:
    """Location score of the symmetric model via a symmetrized kernel estimate.

    The density of the theta-shifted sample is estimated by a Gaussian
    kernel smoother and symmetrized,

        f_hat(x) = ( f_tilde(x) + f_tilde(-x) ) / 2,
        f_tilde(x) = (1/(N h)) sum_i K((x - (X_i - theta)) / h),

    and the score is s_hat(x) = (d/dtheta f_hat(x)) / f_hat(x), with the
    denominator floored to keep the ratio bounded.  The mean field
    (1/N) sum_j s_hat(X_j - theta) plays the role of the *ascent*
    direction on the kernel log-likelihood; the optimizer adds it instead
    of subtracting a gradient.

    The bandwidth defaults to Silverman's 1.06 * std * N^(-1/5).
    """

    param_dim = 1
    data_dim = 1

    def __init__(self, bandwidth: float | None = None,
                 density_floor: float = DEFAULT_DENSITY_FLOOR) -> None:
        if bandwidth is not None and bandwidth <= 0.0:
            raise ValueError("bandwidth must be positive")
        if density_floor <= 0.0:
            raise ValueError("density floor must be positive")
        self.bandwidth = bandwidth
        self.density_floor = float(density_floor)

    @staticmethod
    def _as_points(data: np.ndarray) -> np.ndarray:
        x = np.asarray(data, dtype=float)
        if x.ndim == 2 and x.shape[1] == 1:
            x = x[:, 0]
        if x.ndim != 1:
            raise ValueError("symmetric-model data must be scalar per record")
        if x.size < 2:
            raise ValueError("need at least two records")
        return x

    def bandwidth_for(self, data: np.ndarray) -> float:
        if self.bandwidth is not None:
            return self.bandwidth
        x = self._as_points(data)
        return 1.06 * float(np.std(x)) * x.size ** (-0.2)

    def _one_sided(self, x: np.ndarray, theta: float, pts: np.ndarray, h: float):
        """f_tilde and its theta-derivative at each evaluation point."""
        u = (x[:, None] - pts[None, :] + theta) / h
        k = np.exp(-0.5 * u * u) / _SQRT_2PI
        dens = k.mean(axis=1) / h
        # K'(u) = -u K(u); d/dtheta f_tilde = (1/(N h^2)) sum K'(u)
        ddens = -(u * k).mean(axis=1) / (h * h)
        return dens, ddens

    def _parts(self, x, theta, data):
        pts = self._as_points(data)
        h = self.bandwidth_for(pts)
        xv = np.atleast_1d(np.asarray(x, dtype=float))
        th = float(np.asarray(theta).reshape(-1)[0])
        d_pos, dd_pos = self._one_sided(xv, th, pts, h)
        d_neg, dd_neg = self._one_sided(-xv, th, pts, h)
        return 0.5 * (d_pos + d_neg), 0.5 * (dd_pos + dd_neg)

    def density(self, x, theta, data) -> np.ndarray:
        """Symmetrized kernel density f_hat evaluated at x (vectorized)."""
        dens, _ = self._parts(x, theta, data)
        return dens

    def density_dtheta(self, x, theta, data) -> np.ndarray:
        """Analytic d/dtheta of the symmetrized density at x."""
        _, ddens = self._parts(x, theta, data)
        return ddens

    def score(self, x, theta, data) -> np.ndarray:
        dens, ddens = self._parts(x, theta, data)
        return ddens / np.maximum(dens, self.density_floor)

    def score_terms(self, theta, data, indices=None) -> np.ndarray:
        """Per-record summands s_hat(X_j - theta) of the mean field.

        Restricting to ``indices`` evaluates only the selected records'
        terms; each still costs O(N) kernel evaluations through f_hat.
        """
        pts = self._as_points(data)
        th = float(np.asarray(theta).reshape(-1)[0])
        sel = pts if indices is None else pts[np.asarray(indices, dtype=np.int64)]
        return self.score(sel - th, th, pts)

    def mean_field(self, theta, data) -> float:
        """(1/N) sum_j s_hat(X_j - theta); the full-population ascent direction."""
        return float(self.score_terms(theta, data).mean())

    def kernel_log_likelihood(self, theta, data) -> float:
        """(1/N) sum_j log f_hat(X_j - theta), floored like the score."""
        pts = self._as_points(data)
        th = float(np.asarray(theta).reshape(-1)[0])
        dens = self.density(pts - th, th, pts)
        return float(np.log(np.maximum(dens, self.density_floor)).mean())


class LinkFunction(ABC):
    """Map (record, theta) to a nonnegative sampling weight."""

    cost_class: str = "cheap"

    @abstractmethod
    def weights(self, data: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Weights for every record; shape (len(data),)."""

    def weight(self, record, theta) -> float:
        rec = np.asarray(record, dtype=float)
        batch = rec[None, ...] if rec.ndim > 0 else rec.reshape(1)
        return float(self.weights(batch, theta)[0])


class ConstantLink(LinkFunction):
    """Equal weights: reproduces the uniform-probability design."""

    cost_class = "cheap"

    def weights(self, data, theta):
        return np.ones(len(data))


class FixedWeightsLink(LinkFunction):
    """Theta-independent weights supplied up front (one per record)."""

    cost_class = "cheap"

    def __init__(self, values) -> None:
        v = np.asarray(values, dtype=float)
        if v.ndim != 1:
            raise ValueError("fixed weights must be a vector")
        if np.any(v < 0.0) or not np.all(np.isfinite(v)):
            raise ValueError("fixed weights must be finite and nonnegative")
        self.values = v

    def weights(self, data, theta):
        if len(data) != self.values.size:
            raise ValueError("fixed weights and data lengths disagree")
        return self.values


class SubFeatureLogisticLink(LinkFunction):
    """Gradient norm of the logistic loss restricted to a low-dim marginal.

    Uses only the features ``feature_indices`` (and the matching slice of
    theta), so each weight costs O(d') instead of the O(d) of a full
    gradient: ||grad psi'|| = |sigmoid(alpha + beta' x') - (y+1)/2| *
    sqrt(1 + ||x'||^2).
    """

    cost_class = "cheap"

    def __init__(self, feature_indices) -> None:
        idx = np.asarray(feature_indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size == 0:
            raise ValueError("need at least one sub-feature index")
        self.feature_indices = idx

    def weights(self, data, theta):
        data = np.asarray(data, dtype=float)
        theta = np.asarray(theta, dtype=float)
        y = data[:, 0]
        _check_labels(y)
        xs = data[:, 1 + self.feature_indices]
        h = theta[0] + xs @ theta[1 + self.feature_indices]
        r = np.abs(expit(h) - (y + 1.0) / 2.0)
        return r * np.sqrt(1.0 + (xs * xs).sum(axis=1))


class AbsoluteDeviationLink(LinkFunction):
    """|x - theta| for scalar records; the symmetric model's cheap weights."""

    cost_class = "cheap"

    def weights(self, data, theta):
        x = np.asarray(data, dtype=float)
        if x.ndim == 2 and x.shape[1] == 1:
            x = x[:, 0]
        th = float(np.asarray(theta).reshape(-1)[0])
        return np.abs(x - th)


class GradientNormLink(LinkFunction):
    """Exact per-record gradient norms ||grad psi(Z_i, theta)||.

    Tagged ``oracle``: computing it touches every record's gradient, which
    defeats the cost-saving purpose; it exists as the reference the cheap
    links approximate.
    """

    cost_class = "oracle"

    def __init__(self, model: LossModel) -> None:
        self.model = model

    def weights(self, data, theta):
        g = self.model.gradients(np.asarray(data, dtype=float), theta)
        return np.sqrt((g * g).sum(axis=1))


class ScoreMagnitudeLink(LinkFunction):
    """|score term| weights for the symmetric model: the gradient-norm
    analogue when the per-record contribution is a kernel score.

    Tagged ``oracle`` for the same reason as the gradient norms: each
    weight costs a full score evaluation (O(N) kernel sums, O(N^2) per
    iteration in total), the very thing the sampling is meant to ration.
    """

    cost_class = "oracle"

    def __init__(self, model: KernelSymmetricModel) -> None:
        self.model = model

    def weights(self, data, theta):
        return np.abs(self.model.score_terms(theta, data))


class InterpolatedScoreLink(LinkFunction):
    """Cheap |score| weights: the score is evaluated on a coarse grid and
    linearly interpolated at the shifted records.

    The kernel score is a smooth function of its argument, so a grid of a
    few dozen points recovers it to well under a percent while costing
    O(grid * N) per iteration instead of the exact link's O(N^2).
    """

    cost_class = "cheap"

    def __init__(self, model: KernelSymmetricModel, grid_size: int = 64) -> None:
        if grid_size < 8:
            raise ValueError("grid too coarse to track the score")
        self.model = model
        self.grid_size = int(grid_size)

    def weights(self, data, theta):
        pts = np.asarray(data, dtype=float).reshape(-1)
        th = float(np.asarray(theta).reshape(-1)[0])
        shifted = pts - th
        lo, hi = shifted.min(), shifted.max()
        pad = 1e-9 + 0.01 * (hi - lo)
        grid = np.linspace(lo - pad, hi + pad, self.grid_size)
        s_grid = self.model.score(grid, th, pts)
        return np.abs(np.interp(shifted, grid, s_grid))
