"""Secondary acceptance: render the experiment criteria's CSVs.

Runs the primary harness at a reduced replication count (same protocol
otherwise), renders the trajectory and bar figures from the files it
wrote, and checks the bar chart's shortest bar belongs to the
survey-sampled optimizer.  Skipped when the primary package is absent —
the primary suite never needs this package.
"""

import numpy as np
import pytest

htgd_experiments = pytest.importorskip("htgd.experiments")
htgd_config = pytest.importorskip("htgd.config")
htgd_engine = pytest.importorskip("htgd.engine")

from figures.cli import main
from figures.plots import FigureSpec, summary_bar_heights  # noqa: E402


@pytest.fixture(scope="module")
def experiment_outputs(tmp_path_factory):
    out = tmp_path_factory.mktemp("experiment")
    logi = htgd_config.ExperimentConfig(
        kind="logistic", population_size=500, n_features=10,
        subfeature_dims=6, subfeature_indices=np.array([2, 3, 4, 5, 6, 8]),
        true_theta=np.array([-9, 0, 3, -9, 4, -9, 15, 0, -7, 1, 0], float),
        replications=30, master_seed=20240817, fresh_population=False,
        output_dir=str(out / "logistic"),
        methods={
            "htgd": htgd_engine.OptimizerConfig(
                optimizer_kind="htgd", design_kind="poisson",
                link_kind="subfeature", gamma0=10.0, alpha=0.5,
                iterations=4000, expected_size=20.0),
            "sgd": htgd_engine.OptimizerConfig(
                optimizer_kind="minibatch_sgd", gamma0=10.0, alpha=0.5,
                iterations=4000, expected_size=20.0),
        },
    )
    logi_result = htgd_experiments.run_experiment(logi, jobs=2)

    sym = htgd_config.ExperimentConfig(
        kind="symmetric", population_size=1000,
        true_theta=np.array([0.0]), replications=3, master_seed=777,
        fresh_population=False, output_dir=str(out / "symmetric"),
        methods={
            "htgd": htgd_engine.OptimizerConfig(
                optimizer_kind="htgd", design_kind="poisson",
                link_kind="score_interp", gamma0=1.0, alpha=0.5,
                iterations=3000, expected_size=10.0, projection_radius=2.0),
            "sgd": htgd_engine.OptimizerConfig(
                optimizer_kind="minibatch_sgd", gamma0=1.0, alpha=0.5,
                iterations=3000, expected_size=10.0, projection_radius=2.0),
            "gd": htgd_engine.OptimizerConfig(
                optimizer_kind="full_gd", gamma0=1.0, alpha=0.5,
                iterations=30, expected_size=1000.0, projection_radius=2.0),
        },
    )
    sym_result = htgd_experiments.run_experiment(sym, jobs=2)
    return logi_result, sym_result, out


def test_trajectory_figures_render(experiment_outputs):
    logi_result, sym_result, out = experiment_outputs
    logi_traces = [str(p) for (m, r), p in sorted(logi_result.trace_paths.items())
                   if r < 5]
    assert main(["trajectories", "--coord", "5", "--true-value", "-9",
                 "--out", str(out / "beta5.svg")]
                + [arg for p in logi_traces for arg in ("--trace", p)]) == 0
    assert (out / "beta5.svg").stat().st_size > 0

    sym_traces = [str(p) for (m, r), p in sorted(sym_result.trace_paths.items())]
    assert main(["trajectories", "--coord", "0", "--true-value", "0",
                 "--out", str(out / "location.svg")]
                + [arg for p in sym_traces for arg in ("--trace", p)]) == 0
    assert (out / "location.svg").stat().st_size > 0


def test_bar_chart_shortest_bar_is_htgd(experiment_outputs):
    logi_result, _, out = experiment_outputs
    assert main(["bars", "--summary", str(logi_result.summary_path),
                 "--coord", "5", "--out", str(out / "sd_bars.svg")]) == 0
    assert (out / "sd_bars.svg").stat().st_size > 0
    heights = summary_bar_heights(FigureSpec(
        output_path=str(out / "unused.svg"), coordinate=5,
        summary_path=str(logi_result.summary_path)))
    shortest = min(heights, key=lambda m: heights[m][0])
    assert shortest == "htgd"
