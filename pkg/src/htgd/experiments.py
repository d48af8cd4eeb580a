"""Experiment harness: replicated runs, summary statistics, diagnostics.

Each replication draws its own population (or shares one, per config),
runs every configured method on it, and records the full trajectory.
Summaries aggregate the final estimates across replications per method
and coordinate.  Randomness is keyed so that rerunning the same config
reproduces every file byte for byte: data depends on (master_seed,
replication), a method's sampling noise on (master_seed, method,
replication).
"""

from __future__ import annotations

import csv
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import datagen
from .asymptotics import (
    covariance_diagnostics,
    find_stationary_point,
    gain_comparison,
    gamma_matrix,
    solve_lyapunov,
)
from .config import ConfigError, ExperimentConfig
from .designs import normalize_weights
from .engine import OptimizerConfig, RunTrace, run_optimizer, write_trace_csv
from .models import (
    AbsoluteDeviationLink,
    ConstantLink,
    GradientNormLink,
    InterpolatedScoreLink,
    KernelSymmetricModel,
    LogisticRegressionModel,
    QuadraticLocationModel,
    ScoreMagnitudeLink,
    SubFeatureLogisticLink,
)
from .rng import DATA_STREAM, METHOD_STREAM, derive_rng, derive_seed

BUDGET_RATIO_LIMIT = 10.0

SUMMARY_HEADER = ("method", "coordinate", "min", "median", "max", "mean", "sd")


class UnfairBudgetError(RuntimeError):
    """Methods' gradient budgets differ too much to compare fairly."""


def build_model(config: ExperimentConfig):
    if config.kind == "logistic":
        return LogisticRegressionModel(config.n_features)
    if config.kind == "symmetric":
        return KernelSymmetricModel()
    q = config.true_theta.size
    return QuadraticLocationModel(config.curvature * np.eye(q))


def build_link(config: ExperimentConfig, opt: OptimizerConfig, model):
    name = opt.link_kind
    if name == "subfeature":
        if config.subfeature_indices is not None:
            # 1-based feature numbers in the config, 0-based internally
            return SubFeatureLogisticLink(config.subfeature_indices - 1)
        if config.kind != "logistic" or config.subfeature_dims < 1:
            raise ConfigError("subfeature link needs a logistic experiment "
                              "with subfeature_dims >= 1 or subfeature_indices")
        return SubFeatureLogisticLink(np.arange(config.subfeature_dims))
    if name == "absdev":
        return AbsoluteDeviationLink()
    if name == "gradient_norm":
        return GradientNormLink(model)
    if name in ("score_norm", "score_interp"):
        if not isinstance(model, KernelSymmetricModel):
            raise ConfigError(f"link {name!r} needs a symmetric experiment")
        if name == "score_norm":
            return ScoreMagnitudeLink(model)
        return InterpolatedScoreLink(model, grid_size=32)
    if name == "constant" or name == "":
        return ConstantLink()
    raise ConfigError(f"unknown link {name!r}")


def dataset_for_replication(config: ExperimentConfig, replication: int) -> np.ndarray:
    """Population for one replication; shared populations use replication 0."""
    rep = replication if config.fresh_population else 0
    rng = derive_rng(config.master_seed, DATA_STREAM, rep)
    if config.kind == "logistic":
        return datagen.generate_logistic_data(config.population_size,
                                              config.true_theta, rng)
    if config.kind == "symmetric":
        return datagen.generate_symmetric_data(
            config.population_size, means=config.mixture_means,
            sd=config.mixture_sd, rng=rng, center=float(config.true_theta[0]),
        )
    return datagen.generate_quadratic_data(config.population_size,
                                           config.true_theta, rng)


def method_tag(name: str) -> int:
    """Stable integer tag of a method name, for seed derivation."""
    return zlib.crc32(name.encode("utf-8"))


def expected_gradient_evals(config: ExperimentConfig, opt: OptimizerConfig) -> float:
    if opt.optimizer_kind == "full_gd":
        return opt.iterations * config.population_size
    return opt.iterations * opt.expected_size


def check_budget_fairness(config: ExperimentConfig) -> dict[str, float]:
    """Expected gradient evaluations per method; raises when unfairly unequal."""
    budgets = {name: expected_gradient_evals(config, opt)
               for name, opt in config.methods.items()}
    if len(budgets) > 1:
        lo, hi = min(budgets.values()), max(budgets.values())
        if lo > 0 and hi / lo > BUDGET_RATIO_LIMIT:
            raise UnfairBudgetError(
                "gradient budgets differ by more than "
                f"{BUDGET_RATIO_LIMIT:.0f}x: {budgets}; "
                "pass --allow-unfair-budget to run anyway"
            )
    return budgets


def run_one_replication(config: ExperimentConfig, method_name: str,
                        replication: int) -> RunTrace:
    """One (method, replication) cell, fully determined by the config."""
    opt = config.methods[method_name]
    data = dataset_for_replication(config, replication)
    model = build_model(config)
    link = build_link(config, opt, model) if opt.optimizer_kind == "htgd" else None
    run_opt = OptimizerConfig(
        gamma0=opt.gamma0,
        alpha=opt.alpha,
        iterations=opt.iterations,
        expected_size=opt.expected_size,
        projection_radius=opt.projection_radius,
        seed=derive_seed(config.master_seed, METHOD_STREAM,
                         method_tag(method_name), replication),
        run_id=replication,
        optimizer_kind=opt.optimizer_kind,
        design_kind=opt.design_kind,
        link_kind=opt.link_kind,
        prob_floor=opt.prob_floor,
    )
    return run_optimizer(model, data, link, run_opt)


def _replication_worker(args) -> tuple[str, int, RunTrace]:
    config, method_name, replication = args
    return method_name, replication, run_one_replication(config, method_name,
                                                         replication)


@dataclass(frozen=True)
class SummaryRow:
    method: str
    coordinate: int
    min: float
    median: float
    max: float
    mean: float
    sd: float


@dataclass
class ExperimentResult:
    summary_rows: list[SummaryRow]
    finals: dict[str, np.ndarray]
    gradient_evals: dict[str, list[int]]
    summary_path: Path | None
    trace_paths: dict[tuple[str, int], Path]


def summarize_finals(method: str, finals: np.ndarray) -> list[SummaryRow]:
    """Per-coordinate spread of the replications' final estimates."""
    rows = []
    for k in range(finals.shape[1]):
        col = finals[:, k]
        sd = float(col.std(ddof=1)) if len(col) > 1 else 0.0
        rows.append(SummaryRow(
            method=method,
            coordinate=k,
            min=float(col.min()),
            median=float(np.median(col)),
            max=float(col.max()),
            mean=float(col.mean()),
            sd=sd,
        ))
    return rows


def write_summary_csv(path, rows: list[SummaryRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_HEADER)
        for r in rows:
            writer.writerow([
                r.method, r.coordinate,
                f"{r.min:.17g}", f"{r.median:.17g}", f"{r.max:.17g}",
                f"{r.mean:.17g}", f"{r.sd:.17g}",
            ])


def run_experiment(config: ExperimentConfig, out_dir=None, jobs: int = 1,
                   allow_unfair_budget: bool = False,
                   write_files: bool = True) -> ExperimentResult:
    """Run every configured method over all replications and summarize."""
    if not allow_unfair_budget:
        check_budget_fairness(config)

    out = Path(out_dir if out_dir is not None else config.output_dir)
    traces_dir = out / "traces"
    if write_files:
        traces_dir.mkdir(parents=True, exist_ok=True)

    tasks = [(config, name, rep)
             for name in config.methods
             for rep in range(config.replications)]
    results: dict[tuple[str, int], RunTrace] = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for name, rep, trace in pool.map(_replication_worker, tasks):
                results[(name, rep)] = trace
    else:
        for task in tasks:
            name, rep, trace = _replication_worker(task)
            results[(name, rep)] = trace

    trace_paths: dict[tuple[str, int], Path] = {}
    if write_files:
        for (name, rep), trace in sorted(results.items()):
            path = traces_dir / f"{name}_rep{rep:03d}.csv"
            write_trace_csv(path, rep, trace)
            trace_paths[(name, rep)] = path

    summary_rows: list[SummaryRow] = []
    finals: dict[str, np.ndarray] = {}
    evals: dict[str, list[int]] = {}
    for name in config.methods:
        stack = np.stack([results[(name, rep)].final_theta
                          for rep in range(config.replications)])
        finals[name] = stack
        evals[name] = [results[(name, rep)].gradient_evals
                       for rep in range(config.replications)]
        summary_rows.extend(summarize_finals(name, stack))

    summary_path = None
    if write_files:
        summary_path = out / "summary.csv"
        write_summary_csv(summary_path, summary_rows)
        with open(out / "budget.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "replication", "gradient_evals"])
            for name in config.methods:
                for rep, count in enumerate(evals[name]):
                    writer.writerow([name, rep, count])

    return ExperimentResult(
        summary_rows=summary_rows,
        finals=finals,
        gradient_evals=evals,
        summary_path=summary_path,
        trace_paths=trace_paths,
    )


def _first_htgd_method(config: ExperimentConfig) -> tuple[str, OptimizerConfig]:
    for name, opt in config.methods.items():
        if opt.optimizer_kind == "htgd":
            return name, opt
    raise ConfigError("diagnostics need at least one htgd method (for its link)")


def run_diagnostics(config: ExperimentConfig, out_dir=None) -> Path:
    """Covariance diagnostics at the deterministic stationary point.

    Writes quantity,value rows covering the Hessian spectrum, the gain
    statistics, the trace of Sigma under the link/equal/optimal designs
    and the exact-identity residuals; optionally dumps the matrices.
    """
    if config.kind == "symmetric":
        raise ConfigError(
            "diagnostics need per-record gradients; the symmetric model "
            "only has a mean-field score"
        )
    name, opt = _first_htgd_method(config)
    data = dataset_for_replication(config, 0)
    model = build_model(config)
    link = build_link(config, opt, model)

    theta_star = find_stationary_point(model, data)
    diag = covariance_diagnostics(
        model, data, theta_star, link, opt.expected_size,
        alpha=opt.alpha if 0.5 < opt.alpha <= 1.0 else 0.75,
        gamma0=opt.gamma0, floor=opt.prob_floor,
    )
    report = gain_comparison(model, data, theta_star, link, opt.expected_size,
                             hessian=diag.hessian, floor=opt.prob_floor)

    # Residual of 2 tr(Sigma) = tr(H^-1 Gamma) at eta = 0.
    probs = normalize_weights(link.weights(data, theta_star), opt.expected_size,
                              floor=opt.prob_floor)
    gamma0_mat = gamma_matrix(model, data, theta_star, probs)
    sigma0 = solve_lyapunov(diag.hessian, gamma0_mat, 0.0)
    lhs = 2.0 * float(np.trace(sigma0))
    rhs = float(np.trace(np.linalg.solve(diag.hessian, gamma0_mat)))
    scale = max(abs(lhs), abs(rhs), 1e-300)

    grad_norm = float(np.linalg.norm(model.empirical_gradient(data, theta_star)))
    identity_scale = max(2.0 * opt.expected_size * report.trace_equal, 1e-300)

    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows: list[tuple[str, float]] = []
    for k, v in enumerate(theta_star):
        rows.append((f"theta_star_{k}", float(v)))
    rows += [
        ("grad_norm_at_theta_star", grad_norm),
        ("smallest_hessian_eigenvalue", diag.smallest_eig),
        ("eta", diag.eta),
        ("c_n", diag.c_n),
        ("sigma2_n", diag.sigma2_n),
        ("trace_sigma_link", report.trace_link),
        ("trace_sigma_equal", report.trace_equal),
        ("trace_sigma_optimal", report.trace_optimal),
        ("gain_gap_residual_rel", report.gain_gap_residual / identity_scale),
        ("equal_gap_residual_rel", report.equal_gap_residual / identity_scale),
        ("trace_identity_residual_rel", abs(lhs - rhs) / scale),
    ]
    path = out / "diagnostics.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["quantity", "value"])
        for key, value in rows:
            writer.writerow([key, f"{value:.17g}"])

    if config.dump_matrices:
        np.savetxt(out / "hessian.txt", diag.hessian)
        np.savetxt(out / "gamma.txt", diag.gamma)
        np.savetxt(out / "sigma.txt", diag.sigma)
    return path


def generate_data_file(config: ExperimentConfig, out_dir=None,
                       replication: int = 0) -> Path:
    """Write the dataset of one replication as CSV; returns the path."""
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = dataset_for_replication(config, replication)
    path = out / "dataset.csv"
    datagen.write_dataset_csv(path, data, config.kind)
    return path
