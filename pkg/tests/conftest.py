import numpy as np
import pytest

from igeo import dualflat, models


@pytest.fixture(scope="session")
def normal_model():
    return models.normal_mean_sigma()


@pytest.fixture(scope="session")
def normal_natural_model():
    return models.normal_natural()


@pytest.fixture(scope="session")
def bernoulli_model():
    return models.bernoulli_natural()


@pytest.fixture(scope="session")
def logistic_model():
    return models.location_family("logistic", 1)


@pytest.fixture(scope="session")
def normal_natural_family():
    return dualflat.normal_natural_family()


@pytest.fixture(scope="session")
def bernoulli_family():
    return dualflat.bernoulli_natural_family()


@pytest.fixture(scope="session")
def nn_grid():
    return [np.array([t1, t2]) for t1 in (-0.6, -0.5, -0.3)
            for t2 in (-0.4, 0.0, 0.4)]


@pytest.fixture(scope="session")
def normal_grid():
    return [np.array([m, s]) for m in (-0.5, 0.0, 0.5) for s in (0.9, 1.2, 1.6)]
