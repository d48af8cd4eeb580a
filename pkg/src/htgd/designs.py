"""Survey sampling designs with validated inclusion probabilities.

Implements the three designs used by the optimizer: Poisson sampling
(independent Bernoulli inclusions, random size), rejective sampling
(Poisson conditioned on a fixed realized size) and uniform sampling
without replacement.  First-order probabilities are carried by
:class:`InclusionProbabilities`; second-order probabilities are only
materialized where a closed form or desk-scale enumeration exists.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

DEFAULT_PROB_FLOOR = 1e-6
DEFAULT_REJECTIVE_RETRY_CAP = 1_000_000

# Largest population enumerated exactly (2^N outcomes) for rejective
# second-order probabilities.
_ENUMERATION_LIMIT = 12


@dataclass(frozen=True)
class InclusionProbabilities:
    """First-order inclusion probabilities for a finite population.

    Entries are strictly positive and at most 1.  The expected sample
    size is always recomputed from the entries, never cached.
    """

    probs: np.ndarray
    population_size: int

    def __post_init__(self) -> None:
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1:
            raise ValueError(f"probs must be a vector, got shape {p.shape}")
        if p.size != self.population_size:
            raise ValueError(
                f"{p.size} probabilities for population of {self.population_size}"
            )
        if not np.all(np.isfinite(p)):
            raise ValueError("non-finite inclusion probability")
        if np.any(p <= 0.0) or np.any(p > 1.0):
            raise ValueError("inclusion probabilities must lie in (0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def expected_size(self) -> float:
        return float(self.probs.sum())

    def __len__(self) -> int:
        return self.population_size


@dataclass(frozen=True)
class SurveySample:
    """One realized draw: indicator vector plus the selected index set."""

    indicators: np.ndarray
    indices: np.ndarray
    realized_size: int

    def __post_init__(self) -> None:
        eps = np.array(self.indicators, dtype=np.uint8)
        idx = np.array(self.indices, dtype=np.int64)
        if not np.array_equal(idx, np.flatnonzero(eps)):
            raise ValueError("indices inconsistent with indicator vector")
        if self.realized_size != int(eps.sum()):
            raise ValueError("realized_size inconsistent with indicators")
        eps.setflags(write=False)
        idx.setflags(write=False)
        object.__setattr__(self, "indicators", eps)
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_indicators(cls, indicators: np.ndarray) -> "SurveySample":
        eps = np.asarray(indicators).astype(np.uint8)
        idx = np.flatnonzero(eps)
        return cls(indicators=eps, indices=idx, realized_size=int(idx.size))

    @classmethod
    def from_indices(cls, indices: np.ndarray, population_size: int) -> "SurveySample":
        eps = np.zeros(population_size, dtype=np.uint8)
        eps[np.asarray(indices, dtype=np.int64)] = 1
        return cls.from_indicators(eps)


@dataclass(frozen=True)
class SecondOrderProbs:
    """Symmetric matrix of pairwise inclusion probabilities.

    The diagonal carries the first-order probabilities (a unit is always
    jointly included with itself).
    """

    pairwise: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.pairwise, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"pairwise matrix must be square, got {m.shape}")
        if not np.allclose(m, m.T, rtol=0.0, atol=1e-15):
            raise ValueError("pairwise matrix must be symmetric")
        if np.any(m < -1e-15) or np.any(m > 1.0 + 1e-12):
            raise ValueError("pairwise probabilities must lie in [0, 1]")
        m.setflags(write=False)
        object.__setattr__(self, "pairwise", m)

    @property
    def first_order(self) -> np.ndarray:
        return np.diagonal(self.pairwise)


def first_order_array(probs) -> np.ndarray:
    """Accept an InclusionProbabilities or a bare vector of probabilities."""
    if isinstance(probs, InclusionProbabilities):
        return probs.probs
    return np.asarray(probs, dtype=float)


def normalize_weights(
    raw_weights,
    target_size: float,
    floor: float = DEFAULT_PROB_FLOOR,
) -> InclusionProbabilities:
    """Turn nonnegative weights into inclusion probabilities summing to a budget.

    Probabilities are proportional to the weights, ``p_i = target_size *
    w_i / sum(w)``, subject to two adjustments that keep them valid:

    * capping: any entry that would exceed 1 is pinned at 1 and the
      leftover budget is redistributed proportionally among the uncapped
      units, iterated to a fixed point;
    * flooring: entries below ``floor`` are raised to ``floor`` (the sum
      may then drift above the budget by at most ``N * floor``).

    When neither adjustment fires, ``sum(p) == target_size`` exactly and
    the result is scale-invariant in the weights.

    Raises:
        ValueError: on all-zero/negative weights ("degenerate weights"),
            a budget exceeding the population size, or a floor outside
            ``(0, target_size / N)``.
    """
    w = np.asarray(raw_weights, dtype=float)
    if w.ndim != 1:
        raise ValueError(f"weights must be a vector, got shape {w.shape}")
    n = w.size
    if n == 0:
        raise ValueError("empty weight vector")
    if not np.all(np.isfinite(w)) or np.any(w < 0.0):
        raise ValueError("weights must be finite and nonnegative")
    if not np.any(w > 0.0):
        raise ValueError("degenerate weights: all entries are zero")
    if not 0.0 < target_size <= n:
        raise ValueError(f"target size {target_size} outside (0, {n}]")
    if not 0.0 < floor < target_size / n:
        raise ValueError(f"floor {floor} outside (0, target_size/N)")

    p = np.zeros(n)
    capped = np.zeros(n, dtype=bool)
    # Each pass pins at least one new unit at 1, so N passes suffice.
    for _ in range(n):
        free = ~capped
        budget = target_size - float(capped.sum())
        total = float(w[free].sum())
        if budget <= 0.0 or total <= 0.0:
            # Budget exhausted by capped units (or only zero weights left):
            # remaining entries fall through to the floor.
            p[free] = 0.0
            break
        p[free] = budget * (w[free] / total)
        over = free & (p > 1.0)
        if not over.any():
            break
        p[over] = 1.0
        capped |= over

    p = np.maximum(p, floor)
    return InclusionProbabilities(probs=p, population_size=n)


def equal_probabilities(population_size: int, expected_size: float) -> InclusionProbabilities:
    """The equal-probability design p_i = expected_size / N."""
    if not 0.0 < expected_size <= population_size:
        raise ValueError(f"expected size {expected_size} outside (0, {population_size}]")
    p = np.full(population_size, expected_size / population_size)
    return InclusionProbabilities(probs=p, population_size=population_size)


def draw_poisson(probs: InclusionProbabilities, rng: np.random.Generator) -> SurveySample:
    """Poisson draw: independent Bernoulli(p_i) inclusion of each unit."""
    p = first_order_array(probs)
    eps = rng.random(p.size) < p
    return SurveySample.from_indicators(eps)


def draw_rejective(
    probs: InclusionProbabilities,
    n: int,
    rng: np.random.Generator,
    retry_cap: int = DEFAULT_REJECTIVE_RETRY_CAP,
) -> SurveySample:
    """Poisson draw conditioned on realized size n, by rejection.

    Redraws until the Poisson sample has exactly n units.  Exact, and
    cheap whenever n is near the design's expected size.

    Raises:
        ValueError: n outside [1, N].
        RuntimeError: retry cap exceeded ("rejective draw failed"),
            signalling probabilities incompatible with n.
    """
    p = first_order_array(probs)
    if not 1 <= n <= p.size:
        raise ValueError(f"rejective size {n} outside [1, {p.size}]")
    for _ in range(retry_cap):
        eps = rng.random(p.size) < p
        if int(eps.sum()) == n:
            return SurveySample.from_indicators(eps)
    raise RuntimeError(
        f"rejective draw failed: no size-{n} sample in {retry_cap} attempts"
    )


def draw_uniform_without_replacement(
    n: int, population_size: int, rng: np.random.Generator
) -> SurveySample:
    """Uniform draw over all size-n subsets of the population."""
    if not 1 <= n <= population_size:
        raise ValueError(f"sample size {n} outside [1, {population_size}]")
    idx = rng.choice(population_size, size=n, replace=False)
    return SurveySample.from_indices(np.sort(idx), population_size)


def poisson_second_order(probs: InclusionProbabilities) -> SecondOrderProbs:
    """Pairwise probabilities of a Poisson design: p_i p_j off the diagonal."""
    p = first_order_array(probs)
    m = np.outer(p, p)
    np.fill_diagonal(m, p)
    return SecondOrderProbs(pairwise=m)


def rejective_second_order(probs: InclusionProbabilities, n: int) -> SecondOrderProbs:
    """Pairwise probabilities of a rejective design, by exact enumeration.

    Only available at desk scale (N <= 12): sums the conditional Poisson
    law over all size-n subsets.
    """
    p = first_order_array(probs)
    big_n = p.size
    if big_n > _ENUMERATION_LIMIT:
        raise ValueError(
            f"rejective second-order probabilities need N <= {_ENUMERATION_LIMIT}, got {big_n}"
        )
    if not 1 <= n <= big_n:
        raise ValueError(f"rejective size {n} outside [1, {big_n}]")
    none_prob = float(np.prod(1.0 - p))
    odds = p / (1.0 - p) if np.all(p < 1.0) else None

    m = np.zeros((big_n, big_n))
    total = 0.0
    for subset in combinations(range(big_n), n):
        s = list(subset)
        if odds is not None:
            w = none_prob * float(np.prod(odds[s]))
        else:
            mask = np.zeros(big_n, dtype=bool)
            mask[s] = True
            w = float(np.prod(np.where(mask, p, 1.0 - p)))
        total += w
        m[np.ix_(s, s)] += w
    if total <= 0.0:
        raise ValueError(f"design gives zero probability to samples of size {n}")
    m /= total
    return SecondOrderProbs(pairwise=m)
