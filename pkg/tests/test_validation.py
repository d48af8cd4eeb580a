import numpy as np
import pytest

from htgd import validation
from htgd.designs import InclusionProbabilities
from htgd.estimators import poisson_variance
from htgd.oracles import ht_total_moments, relative_error
from htgd.rng import derive_rng


def test_full_battery_passes_at_default_seed():
    results = validation.run_validation(echo=lambda *a: None)
    failed = [r.name for r in results if not r.passed]
    assert not failed, f"failed checks: {failed}"


def test_battery_is_seed_robust():
    # oracle tolerances hold under a different seed, not just the frozen one
    for check in (validation.check_ht_exactness,
                  validation.check_gain_identities,
                  validation.check_optimality,
                  validation.check_model_gradients):
        result = check(seed=987654321)
        assert result.passed, result


def test_fault_injection_breaks_unbiasedness():
    # corrupt the HT weighting by 1%: the enumeration oracle must notice
    def corrupted_ht_total(values, sample, probs):
        from htgd.estimators import ht_total
        return 1.01 * ht_total(values, sample, probs)

    rng = derive_rng(5150)
    q = rng.normal(size=(5, 2))
    probs = InclusionProbabilities(rng.uniform(0.2, 0.9, 5), 5)
    mean, total_var = ht_total_moments(q, probs, corrupted_ht_total)
    assert relative_error(mean, q.sum(axis=0)) > 1e-3
    assert relative_error(total_var, poisson_variance(q, probs)) > 1e-3
