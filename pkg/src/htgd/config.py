"""Experiment configuration: flat key=value sections, or the same as JSON.

An experiment file names the data generating process once and then one
``[method.NAME]`` section per optimizer to compare::

    [experiment]
    kind = logistic
    population_size = 1000
    n_features = 10
    subfeature_dims = 3
    true_theta = -9,0,3,-9,4,-9,15,0,-7,1,0
    replications = 50
    master_seed = 20240817
    fresh_population = true
    output_dir = out

    [method.htgd]
    optimizer = htgd
    design = poisson
    link = subfeature
    gamma0 = 5.0
    alpha = 0.5
    iterations = 2000
    expected_size = 20

The JSON form is the identical mapping: section names as top-level keys,
flat string/number values inside.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import OPTIMIZER_KINDS, OptimizerConfig

EXPERIMENT_KINDS = ("logistic", "symmetric", "quadratic_toy")
LINK_KINDS = ("subfeature", "absdev", "gradient_norm", "score_norm",
              "score_interp", "constant")


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


def _parse_bool(value: str) -> bool:
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def _parse_floats(value) -> np.ndarray:
    if isinstance(value, (list, tuple)):
        return np.asarray([float(v) for v in value])
    return np.asarray([float(v) for v in str(value).split(",") if v.strip() != ""])


@dataclass
class ExperimentConfig:
    """Everything one experiment needs: data process, methods, bookkeeping."""

    kind: str
    population_size: int
    true_theta: np.ndarray
    replications: int
    master_seed: int
    output_dir: str = "out"
    n_features: int = 0
    subfeature_dims: int = 0
    subfeature_indices: np.ndarray | None = None
    mixture_means: np.ndarray = field(default_factory=lambda: np.array([-4.0, 4.0]))
    mixture_sd: float = 1.0
    curvature: float = 1.0
    fresh_population: bool = True
    dump_matrices: bool = False
    methods: dict[str, OptimizerConfig] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.population_size < 1:
            raise ConfigError("population_size must be positive")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        self.true_theta = np.asarray(self.true_theta, dtype=float)
        if self.kind == "logistic":
            if self.n_features < 1:
                raise ConfigError("logistic experiments need n_features >= 1")
            if self.true_theta.size != 1 + self.n_features:
                raise ConfigError(
                    f"true_theta needs {1 + self.n_features} entries "
                    f"(intercept + features), got {self.true_theta.size}"
                )
            if not 0 <= self.subfeature_dims <= self.n_features:
                raise ConfigError("subfeature_dims must lie in [0, n_features]")
            if self.subfeature_indices is not None:
                idx = np.asarray(self.subfeature_indices, dtype=np.int64)
                if idx.size == 0 or np.any(idx < 1) or np.any(idx > self.n_features):
                    raise ConfigError(
                        "subfeature_indices must name features in [1, n_features]"
                    )
                self.subfeature_indices = idx
        if self.kind == "symmetric" and self.true_theta.size != 1:
            raise ConfigError("symmetric experiments have a scalar parameter")
        if not self.methods:
            raise ConfigError("at least one [method.*] section is required")
        for name, opt in self.methods.items():
            if opt.optimizer_kind == "htgd" and not opt.link_kind:
                raise ConfigError(f"method {name!r}: htgd needs a link")


_METHOD_KEYS = {
    "optimizer", "design", "link", "gamma0", "alpha", "iterations",
    "expected_size", "projection_radius", "prob_floor",
}


def _method_from_mapping(name: str, raw: dict) -> OptimizerConfig:
    unknown = set(raw) - _METHOD_KEYS
    if unknown:
        raise ConfigError(f"method {name!r}: unknown keys {sorted(unknown)}")
    optimizer = str(raw.get("optimizer", "htgd"))
    if optimizer not in OPTIMIZER_KINDS:
        raise ConfigError(f"method {name!r}: unknown optimizer {optimizer!r}")
    link = str(raw.get("link", "")).strip()
    if link and link not in LINK_KINDS:
        raise ConfigError(f"method {name!r}: unknown link {link!r}")
    try:
        return OptimizerConfig(
            gamma0=float(raw["gamma0"]),
            alpha=float(raw["alpha"]),
            iterations=int(raw["iterations"]),
            expected_size=float(raw["expected_size"]),
            projection_radius=float(raw.get("projection_radius", 1e3)),
            optimizer_kind=optimizer,
            design_kind=str(raw.get("design", "poisson")),
            link_kind=link,
            prob_floor=float(raw.get("prob_floor", 1e-6)),
        )
    except KeyError as err:
        raise ConfigError(f"method {name!r}: missing key {err.args[0]!r}") from None
    except ValueError as err:
        raise ConfigError(f"method {name!r}: {err}") from None


def config_from_mapping(mapping: dict) -> ExperimentConfig:
    """Build a config from {section: {key: value}} (INI and JSON both land here)."""
    if "experiment" not in mapping:
        raise ConfigError("missing [experiment] section")
    exp = dict(mapping["experiment"])

    methods: dict[str, OptimizerConfig] = {}
    for section, raw in mapping.items():
        if section == "experiment":
            continue
        if not section.startswith("method."):
            raise ConfigError(f"unexpected section {section!r}")
        name = section[len("method."):]
        if not name:
            raise ConfigError("empty method name")
        methods[name] = _method_from_mapping(name, dict(raw))

    try:
        return ExperimentConfig(
            kind=str(exp["kind"]),
            population_size=int(exp["population_size"]),
            true_theta=_parse_floats(exp.get("true_theta", "0")),
            replications=int(exp["replications"]),
            master_seed=int(exp["master_seed"]),
            output_dir=str(exp.get("output_dir", "out")),
            n_features=int(exp.get("n_features", 0)),
            subfeature_dims=int(exp.get("subfeature_dims", 0)),
            subfeature_indices=(
                _parse_floats(exp["subfeature_indices"]).astype(np.int64)
                if "subfeature_indices" in exp else None
            ),
            mixture_means=_parse_floats(exp.get("mixture_means", "-4,4")),
            mixture_sd=float(exp.get("mixture_sd", 1.0)),
            curvature=float(exp.get("curvature", 1.0)),
            fresh_population=(
                exp["fresh_population"] if isinstance(exp.get("fresh_population"), bool)
                else _parse_bool(exp.get("fresh_population", "true"))
            ),
            dump_matrices=(
                exp["dump_matrices"] if isinstance(exp.get("dump_matrices"), bool)
                else _parse_bool(exp.get("dump_matrices", "false"))
            ),
            methods=methods,
        )
    except KeyError as err:
        raise ConfigError(f"[experiment]: missing key {err.args[0]!r}") from None
    except ConfigError:
        raise
    except ValueError as err:
        raise ConfigError(f"[experiment]: {err}") from None


def load_config(path) -> ExperimentConfig:
    """Load a config file; JSON when it parses as JSON, INI otherwise."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            mapping = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON: {err}") from None
        if not isinstance(mapping, dict):
            raise ConfigError(f"{path}: top-level JSON must be an object")
        return config_from_mapping(mapping)
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as err:
        raise ConfigError(f"{path}: {err}") from None
    mapping = {section: dict(parser[section]) for section in parser.sections()}
    return config_from_mapping(mapping)
