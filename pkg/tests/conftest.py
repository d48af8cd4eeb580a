import numpy as np
import pytest

from htgd.datagen import generate_logistic_data
from htgd.rng import derive_rng


@pytest.fixture
def rng():
    return derive_rng(97531)


@pytest.fixture
def logistic_data():
    """Small moderate-coefficient logistic dataset shared across tests."""
    theta = np.array([0.5, -1.0, 2.0, 0.8])
    return generate_logistic_data(60, theta, derive_rng(2468))
