"""Deterministic random-source derivation.

Every stochastic component draws from a generator keyed by a tuple of
integers, so any draw can be reconstructed from its key alone:
optimizer iteration t of run r uses ``derive_rng(seed, r, t)``,
replication data uses ``derive_rng(master_seed, rep, DATA_STREAM)``,
and so on.  Generators are never shared between runs.
"""

from __future__ import annotations

import numpy as np

# Stream tags keeping independent uses of the same (seed, index) apart.
DATA_STREAM = 0xDA7A
METHOD_STREAM = 0x5EED


def _canonical(value: int) -> int:
    """Map an arbitrary int (possibly negative) into SeedSequence's domain."""
    return int(value) & 0xFFFFFFFFFFFFFFFF


def derive_rng(*key: int) -> np.random.Generator:
    """Fresh generator deterministically keyed by a tuple of integers."""
    seq = np.random.SeedSequence([_canonical(k) for k in key])
    return np.random.default_rng(seq)


def derive_seed(*key: int) -> int:
    """Collapse a key tuple into a single reproducible 64-bit seed."""
    seq = np.random.SeedSequence([_canonical(k) for k in key])
    return int(seq.generate_state(1, np.uint64)[0])


def iteration_rng(seed: int, run_id: int, t: int) -> np.random.Generator:
    """Generator owning all randomness of one optimizer iteration."""
    return derive_rng(seed, run_id, t)
