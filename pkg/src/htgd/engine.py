"""Optimizer loops: survey-sampled gradient descent and its baselines.

One iteration of the survey-sampled optimizer at estimate theta(t):

1. link weights are recomputed at theta(t) (never cached across
   iterations) and normalized into inclusion probabilities with the
   configured expected size;
2. a sample is drawn per the configured design;
3. the HT gradient estimate is formed from the selected records only;
4. theta(t+1) = project( theta(t) - gamma(t+1) * estimate ), with
   gamma(s) = gamma0 * s^(-alpha) indexed from s = 1.

The symmetric location model replaces step 3-4 with the HT average of
its score terms and an ascent step (its mean field is a log-likelihood
ascent direction, not a loss gradient).

Baselines: mini-batch SGD (uniform without-replacement samples of fixed
size) and deterministic full-gradient descent.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import designs
from .designs import InclusionProbabilities, SurveySample
from .estimators import ht_gradient
from .models import KernelSymmetricModel, LinkFunction
from .rng import iteration_rng

OPTIMIZER_KINDS = ("htgd", "minibatch_sgd", "full_gd")
DESIGN_KINDS = ("poisson", "rejective", "uniform")

TRACE_HEADER_PREFIX = ("run_id", "t")


@dataclass
class OptimizerConfig:
    """Tuning parameters of one optimizer run.

    The step size gamma(s) = gamma0 * s^(-alpha) satisfies the usual
    divergent-sum / summable-squares conditions for alpha in (1/2, 1];
    alpha = 1/2 is accepted here for reproducing reference protocols but
    is rejected by the asymptotic-covariance helpers.
    """

    gamma0: float
    alpha: float
    iterations: int
    expected_size: float
    projection_radius: float = 1e3
    seed: int = 0
    run_id: int = 0
    optimizer_kind: str = "htgd"
    design_kind: str = "poisson"
    link_kind: str = ""
    prob_floor: float = designs.DEFAULT_PROB_FLOOR
    rejective_retry_cap: int = designs.DEFAULT_REJECTIVE_RETRY_CAP

    def __post_init__(self) -> None:
        if self.gamma0 <= 0.0:
            raise ValueError("gamma0 must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.expected_size <= 0.0:
            raise ValueError("expected_size must be positive")
        if self.projection_radius <= 0.0:
            raise ValueError("projection radius must be positive")
        if self.optimizer_kind not in OPTIMIZER_KINDS:
            raise ValueError(f"unknown optimizer kind {self.optimizer_kind!r}")
        if self.design_kind not in DESIGN_KINDS:
            raise ValueError(f"unknown design kind {self.design_kind!r}")

    def learning_rate(self, step: int) -> float:
        """gamma(step), step counted from 1."""
        return self.gamma0 * float(step) ** (-self.alpha)


@dataclass
class RunTrace:
    """Full trajectory of one optimizer run plus its cost accounting."""

    thetas: np.ndarray
    realized_sizes: np.ndarray
    gradient_evals: int
    wall_time: float

    def __post_init__(self) -> None:
        if len(self.thetas) != len(self.realized_sizes) + 1:
            raise ValueError("trace must hold T+1 iterates for T sizes")
        if self.gradient_evals != int(np.sum(self.realized_sizes)):
            raise ValueError("gradient_evals must equal the summed sample sizes")

    @property
    def final_theta(self) -> np.ndarray:
        return self.thetas[-1]

    @property
    def iterations(self) -> int:
        return len(self.realized_sizes)


def project_onto_ball(theta: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the centered ball of the given radius."""
    norm = float(np.linalg.norm(theta))
    if norm <= radius:
        return theta
    return theta * (radius / norm)


def default_initial_theta(model, data) -> np.ndarray:
    """Zero vector, except the symmetric model starts at the sample median."""
    if isinstance(model, KernelSymmetricModel):
        pts = np.asarray(data, dtype=float).reshape(-1)
        return np.array([float(np.median(pts))])
    return np.zeros(model.param_dim)


def _check_finite(theta: np.ndarray, t: int) -> None:
    if not np.all(np.isfinite(theta)):
        raise RuntimeError(
            f"non-finite iterate at t={t}; the step size is likely too large"
        )


def _step_direction(model, data, theta, sample: SurveySample,
                    probs: InclusionProbabilities) -> tuple[np.ndarray, bool]:
    """HT update direction; True means the direction is added (ascent)."""
    if isinstance(model, KernelSymmetricModel):
        if sample.realized_size == 0:
            return np.zeros(1), True
        psel = probs.probs[sample.indices]
        terms = model.score_terms(theta, data, indices=sample.indices)
        est = float((terms / psel).sum()) / len(data)
        return np.array([est]), True
    return ht_gradient(model, theta, data, sample, probs).vector, False


def _draw_sample(config: OptimizerConfig, probs: InclusionProbabilities,
                 rng: np.random.Generator) -> SurveySample:
    if config.design_kind == "poisson":
        return designs.draw_poisson(probs, rng)
    if config.design_kind == "rejective":
        return designs.draw_rejective(
            probs, int(round(config.expected_size)), rng,
            retry_cap=config.rejective_retry_cap,
        )
    return designs.draw_uniform_without_replacement(
        int(round(config.expected_size)), len(probs), rng
    )


def run_htgd(model, data, link: LinkFunction, config: OptimizerConfig,
             theta0: np.ndarray | None = None) -> RunTrace:
    """Survey-sampled descent with inverse-probability-weighted gradients.

    Under the uniform design the inclusion probabilities are n/N by
    definition and the link only matters through the design choice; for
    Poisson and rejective designs the link weights at the current iterate
    set the probabilities.
    """
    data = np.asarray(data, dtype=float)
    n_pop = len(data)
    theta = (default_initial_theta(model, data) if theta0 is None
             else np.array(theta0, dtype=float))
    t_start = time.perf_counter()

    n_iter = config.iterations
    thetas = np.empty((n_iter + 1, theta.size))
    thetas[0] = theta
    sizes = np.empty(n_iter, dtype=np.int64)

    for t in range(n_iter):
        rng = iteration_rng(config.seed, config.run_id, t)
        if config.design_kind == "uniform":
            probs = designs.equal_probabilities(
                n_pop, round(config.expected_size)
            )
        else:
            weights = link.weights(data, theta)
            probs = designs.normalize_weights(
                weights, config.expected_size, floor=config.prob_floor
            )
        sample = _draw_sample(config, probs, rng)
        try:
            direction, ascent = _step_direction(model, data, theta, sample, probs)
        except ValueError as err:
            raise RuntimeError(
                f"non-finite gradient estimate at t={t}; "
                "the step size is likely too large"
            ) from err
        gamma = config.learning_rate(t + 1)
        step = gamma * direction if ascent else -gamma * direction
        theta = project_onto_ball(theta + step, config.projection_radius)
        _check_finite(theta, t)
        thetas[t + 1] = theta
        sizes[t] = sample.realized_size

    return RunTrace(
        thetas=thetas,
        realized_sizes=sizes,
        gradient_evals=int(sizes.sum()),
        wall_time=time.perf_counter() - t_start,
    )


def run_minibatch_sgd(model, data, config: OptimizerConfig,
                      theta0: np.ndarray | None = None) -> RunTrace:
    """Uniform without-replacement mini-batches of fixed size n = expected_size."""
    data = np.asarray(data, dtype=float)
    n_pop = len(data)
    n_batch = int(round(config.expected_size))
    theta = (default_initial_theta(model, data) if theta0 is None
             else np.array(theta0, dtype=float))
    mean_field = isinstance(model, KernelSymmetricModel)
    t_start = time.perf_counter()

    n_iter = config.iterations
    thetas = np.empty((n_iter + 1, theta.size))
    thetas[0] = theta
    sizes = np.full(n_iter, n_batch, dtype=np.int64)

    for t in range(n_iter):
        rng = iteration_rng(config.seed, config.run_id, t)
        sample = designs.draw_uniform_without_replacement(n_batch, n_pop, rng)
        if mean_field:
            terms = model.score_terms(theta, data, indices=sample.indices)
            step = config.learning_rate(t + 1) * float(terms.mean())
            theta = theta + np.array([step])
        else:
            grad = model.gradients(data[sample.indices], theta).mean(axis=0)
            theta = theta - config.learning_rate(t + 1) * grad
        theta = project_onto_ball(theta, config.projection_radius)
        _check_finite(theta, t)
        thetas[t + 1] = theta

    return RunTrace(
        thetas=thetas,
        realized_sizes=sizes,
        gradient_evals=int(sizes.sum()),
        wall_time=time.perf_counter() - t_start,
    )


def run_full_gd(model, data, config: OptimizerConfig,
                theta0: np.ndarray | None = None) -> RunTrace:
    """Deterministic descent on the full empirical gradient."""
    data = np.asarray(data, dtype=float)
    n_pop = len(data)
    theta = (default_initial_theta(model, data) if theta0 is None
             else np.array(theta0, dtype=float))
    mean_field = isinstance(model, KernelSymmetricModel)
    t_start = time.perf_counter()

    n_iter = config.iterations
    thetas = np.empty((n_iter + 1, theta.size))
    thetas[0] = theta
    sizes = np.full(n_iter, n_pop, dtype=np.int64)

    for t in range(n_iter):
        if mean_field:
            theta = theta + config.learning_rate(t + 1) * np.array(
                [model.mean_field(theta, data)]
            )
        else:
            theta = theta - config.learning_rate(t + 1) * model.empirical_gradient(
                data, theta
            )
        theta = project_onto_ball(theta, config.projection_radius)
        _check_finite(theta, t)
        thetas[t + 1] = theta

    return RunTrace(
        thetas=thetas,
        realized_sizes=sizes,
        gradient_evals=int(sizes.sum()),
        wall_time=time.perf_counter() - t_start,
    )


def run_optimizer(model, data, link: LinkFunction | None,
                  config: OptimizerConfig,
                  theta0: np.ndarray | None = None) -> RunTrace:
    """Dispatch on config.optimizer_kind."""
    if config.optimizer_kind == "htgd":
        if link is None:
            raise ValueError("htgd requires a link function")
        return run_htgd(model, data, link, config, theta0=theta0)
    if config.optimizer_kind == "minibatch_sgd":
        return run_minibatch_sgd(model, data, config, theta0=theta0)
    return run_full_gd(model, data, config, theta0=theta0)


def write_trace_csv(path, run_id: int, trace: RunTrace) -> None:
    """One row per iterate: run_id, t, theta coordinates, realized size.

    Row t holds the size of the draw that produced theta(t); the initial
    row carries size 0.  Rows are streamed so partial traces of long runs
    are inspectable.
    """
    q = trace.thetas.shape[1]
    header = list(TRACE_HEADER_PREFIX) + [f"theta_{k}" for k in range(q)] + [
        "realized_size"
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in range(len(trace.thetas)):
            size = 0 if t == 0 else int(trace.realized_sizes[t - 1])
            row = [run_id, t] + [f"{v:.17g}" for v in trace.thetas[t]] + [size]
            writer.writerow(row)
            if t % 256 == 0:
                fh.flush()
