"""Synthetic dataset generation and the CSV dataset format.

Formats (one record per row, header included):
  logistic   y,x1,...,xd   labels in {-1,+1}, features uniform on (0,1)
  symmetric  x             balanced two-component Gaussian mixture
  quadratic  x1,...,xq     Gaussian around the configured center

Floats are written with repr-exact precision so regeneration under the
same seed is byte-identical and reading back loses nothing.
"""

from __future__ import annotations

import csv

import numpy as np
from scipy.special import expit

_FLOAT_FMT = "%.17g"


def generate_logistic_data(n: int, true_theta: np.ndarray,
                           rng: np.random.Generator) -> np.ndarray:
    """Rows [y, x] with P(y = +1 | x) = sigmoid(alpha + beta'x)."""
    theta = np.asarray(true_theta, dtype=float)
    d = theta.size - 1
    x = rng.random((n, d))
    h = theta[0] + x @ theta[1:]
    y = np.where(rng.random(n) < expit(h), 1.0, -1.0)
    return np.column_stack([y, x])


def generate_symmetric_data(n: int, means=(-4.0, 4.0), sd: float = 1.0,
                            rng: np.random.Generator | None = None,
                            center: float = 0.0) -> np.ndarray:
    """Balanced mixture of two Gaussians at center+means with common sd."""
    if rng is None:
        raise ValueError("rng is required")
    means = np.asarray(means, dtype=float)
    comp = rng.integers(0, means.size, size=n)
    return center + means[comp] + sd * rng.standard_normal(n)


def generate_quadratic_data(n: int, center: np.ndarray,
                            rng: np.random.Generator) -> np.ndarray:
    """Standard normal scatter around the given center, shape (n, q)."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    return c[None, :] + rng.standard_normal((n, c.size))


def dataset_header(kind: str, n_features: int) -> list[str]:
    if kind == "logistic":
        return ["y"] + [f"x{k}" for k in range(1, n_features + 1)]
    if kind == "symmetric":
        return ["x"]
    if kind == "quadratic_toy":
        if n_features == 1:
            return ["x1"]
        return [f"x{k}" for k in range(1, n_features + 1)]
    raise ValueError(f"unknown dataset kind {kind!r}")


def write_dataset_csv(path, data: np.ndarray, kind: str) -> None:
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    n_features = data.shape[1] - 1 if kind == "logistic" else data.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(dataset_header(kind, n_features))
        for row in data:
            if kind == "logistic":
                writer.writerow([f"{int(row[0]):d}"]
                                + [_FLOAT_FMT % v for v in row[1:]])
            else:
                writer.writerow([_FLOAT_FMT % v for v in row])


def read_dataset_csv(path, kind: str) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected_prefix = dataset_header(kind, max(len(header) - 1, 1))[0]
        if header[0] != expected_prefix:
            raise ValueError(f"unexpected header {header!r} for kind {kind!r}")
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows, dtype=float)
    if kind == "symmetric":
        return data[:, 0]
    return data
