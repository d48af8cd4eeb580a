import csv

import numpy as np
import pytest

from htgd.config import ConfigError, ExperimentConfig
from htgd.datagen import (
    generate_logistic_data,
    generate_symmetric_data,
    read_dataset_csv,
    write_dataset_csv,
)
from htgd.engine import OptimizerConfig
from htgd.experiments import (
    UnfairBudgetError,
    check_budget_fairness,
    dataset_for_replication,
    generate_data_file,
    run_diagnostics,
    run_experiment,
    summarize_finals,
)
from htgd.rng import derive_rng


def method(optimizer="htgd", link="gradient_norm", iterations=20,
           expected_size=8.0, gamma0=0.8, alpha=0.8, **kw):
    return OptimizerConfig(
        gamma0=gamma0, alpha=alpha, iterations=iterations,
        expected_size=expected_size, optimizer_kind=optimizer,
        link_kind=link if optimizer == "htgd" else "", **kw,
    )


def quad_config(tmp_path, replications=3, **methods):
    if not methods:
        methods = {"htgd": method(), "sgd": method("minibatch_sgd")}
    return ExperimentConfig(
        kind="quadratic_toy", population_size=40,
        true_theta=np.array([1.0, -1.0]), replications=replications,
        master_seed=314, output_dir=str(tmp_path / "out"),
        fresh_population=False, methods=methods,
    )


class TestDataGeneration:
    def test_symmetric_atoms_and_median(self):
        # near-zero spread leaves two atoms; exactly balanced draws put the
        # median midway between them
        rng = derive_rng(8)
        for _ in range(50):
            data = generate_symmetric_data(400, sd=1e-12, rng=rng)
            if (data < 0).sum() == 200:
                assert abs(np.median(data)) < 1e-9
                break
        else:
            pytest.fail("no exactly balanced draw found")
        assert set(np.round(np.abs(data), 6)) == {4.0}

    def test_logistic_flat_parameter_balances_labels(self):
        rng = derive_rng(9)
        n = 4000
        data = generate_logistic_data(n, np.zeros(4), rng)
        freq = (data[:, 0] == 1.0).mean()
        assert abs(freq - 0.5) <= 4.0 * np.sqrt(0.25 / n)

    def test_dataset_csv_roundtrip_and_determinism(self, tmp_path):
        cfg = quad_config(tmp_path)
        p1 = generate_data_file(cfg, out_dir=tmp_path / "a")
        p2 = generate_data_file(cfg, out_dir=tmp_path / "b")
        assert p1.read_bytes() == p2.read_bytes()
        data = dataset_for_replication(cfg, 0)
        back = read_dataset_csv(p1, cfg.kind)
        assert np.array_equal(back, data)

    def test_logistic_csv_roundtrip(self, tmp_path):
        data = generate_logistic_data(25, np.array([0.5, 1.0, -1.0]),
                                      derive_rng(3))
        path = tmp_path / "d.csv"
        write_dataset_csv(path, data, "logistic")
        with open(path) as fh:
            header = fh.readline().strip()
        assert header == "y,x1,x2"
        assert np.array_equal(read_dataset_csv(path, "logistic"), data)

    def test_fresh_vs_shared_populations(self, tmp_path):
        cfg = quad_config(tmp_path)
        cfg.fresh_population = True
        a = dataset_for_replication(cfg, 0)
        b = dataset_for_replication(cfg, 1)
        assert not np.array_equal(a, b)
        cfg.fresh_population = False
        assert np.array_equal(dataset_for_replication(cfg, 1), a)


class TestRunExperiment:
    def test_summary_shape_and_ordering(self, tmp_path):
        cfg = quad_config(tmp_path)
        result = run_experiment(cfg)
        assert {r.method for r in result.summary_rows} == {"htgd", "sgd"}
        for row in result.summary_rows:
            assert row.min <= row.median <= row.max

    def test_zero_iterations_summary_is_initial_theta(self, tmp_path):
        cfg = quad_config(tmp_path, replications=1,
                          sgd=method("minibatch_sgd", iterations=0))
        result = run_experiment(cfg, allow_unfair_budget=True)
        row0 = [r for r in result.summary_rows if r.coordinate == 0][0]
        assert row0.min == row0.max == row0.mean == 0.0  # theta0 = zeros
        assert row0.sd == 0.0

    def test_byte_identical_reruns(self, tmp_path):
        cfg = quad_config(tmp_path)
        r1 = run_experiment(cfg, out_dir=tmp_path / "x")
        r2 = run_experiment(cfg, out_dir=tmp_path / "y")
        assert r1.summary_path.read_bytes() == r2.summary_path.read_bytes()
        t1 = (tmp_path / "x" / "traces" / "htgd_rep001.csv").read_bytes()
        t2 = (tmp_path / "y" / "traces" / "htgd_rep001.csv").read_bytes()
        assert t1 == t2

    def test_parallel_matches_serial(self, tmp_path):
        cfg = quad_config(tmp_path)
        serial = run_experiment(cfg, out_dir=tmp_path / "s", jobs=1)
        parallel = run_experiment(cfg, out_dir=tmp_path / "p", jobs=2)
        assert serial.summary_path.read_bytes() == parallel.summary_path.read_bytes()

    def test_trace_schema(self, tmp_path):
        cfg = quad_config(tmp_path)
        result = run_experiment(cfg)
        path = result.trace_paths[("htgd", 0)]
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["run_id", "t", "theta_0", "theta_1", "realized_size"]
        assert len(rows) == 1 + 21

    def test_budget_accounting_reported(self, tmp_path):
        cfg = quad_config(tmp_path)
        result = run_experiment(cfg)
        assert result.gradient_evals["sgd"] == [8 * 20] * 3
        assert all(e > 0 for e in result.gradient_evals["htgd"])

    def test_budget_fairness_gate(self, tmp_path):
        cfg = quad_config(
            tmp_path,
            htgd=method(),
            gd=method("full_gd", iterations=200, expected_size=40.0),
        )
        # 200 * 40 = 8000 vs 20 * 8 = 160: gap 50x
        with pytest.raises(UnfairBudgetError):
            check_budget_fairness(cfg)
        with pytest.raises(UnfairBudgetError):
            run_experiment(cfg)
        run_experiment(cfg, allow_unfair_budget=True)


class TestSummaries:
    def test_summarize_finals_values(self):
        finals = np.array([[1.0], [3.0], [2.0]])
        row = summarize_finals("m", finals)[0]
        assert (row.min, row.median, row.max) == (1.0, 2.0, 3.0)
        assert row.mean == pytest.approx(2.0)
        assert row.sd == pytest.approx(np.std([1, 2, 3], ddof=1))


class TestDiagnostics:
    def test_diagnostics_quantities(self, tmp_path):
        cfg = quad_config(tmp_path)
        cfg.dump_matrices = True
        path = run_diagnostics(cfg, out_dir=tmp_path / "diag")
        table = {}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for key, value in reader:
                table[key] = float(value)
        assert table["grad_norm_at_theta_star"] <= 1e-10
        assert table["smallest_hessian_eigenvalue"] > 0
        assert table["gain_gap_residual_rel"] <= 1e-10
        assert table["equal_gap_residual_rel"] <= 1e-10
        assert table["trace_identity_residual_rel"] <= 1e-10
        # gradient-norm link at non-spherical curvature: strictly positive
        # covariance, so the design ordering is strict
        assert table["trace_sigma_optimal"] <= table["trace_sigma_link"] + 1e-12
        if table["c_n"] > 0:
            assert table["trace_sigma_link"] < table["trace_sigma_equal"]
        assert (tmp_path / "diag" / "sigma.txt").exists()
        sigma = np.loadtxt(tmp_path / "diag" / "sigma.txt")
        assert sigma.shape == (2, 2)

    def test_constant_link_zero_covariance_column(self, tmp_path):
        cfg = quad_config(tmp_path, htgd=method(link="constant"))
        path = run_diagnostics(cfg, out_dir=tmp_path / "diag2")
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            table = {k: float(v) for k, v in reader}
        assert abs(table["c_n"]) <= 1e-12
        assert table["trace_sigma_link"] == pytest.approx(
            table["trace_sigma_equal"], rel=1e-12)

    def test_symmetric_diagnostics_rejected(self, tmp_path):
        cfg = ExperimentConfig(
            kind="symmetric", population_size=50,
            true_theta=np.array([0.0]), replications=1, master_seed=1,
            output_dir=str(tmp_path), methods={"htgd": method(link="absdev")},
        )
        with pytest.raises(ConfigError, match="mean-field"):
            run_diagnostics(cfg)
