import numpy as np
import pytest

from gasdisk.profiles import InitialDistribution, cosine_profile


@pytest.fixture
def unit_maxwellian():
    return InitialDistribution.maxwellian(rho=1.0, theta=1.0)


@pytest.fixture
def cos_profile():
    return cosine_profile(horizon=2.0, dt=1.0 / 256)


def sup_dist(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
