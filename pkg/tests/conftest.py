from importlib import resources

import numpy as np
import pytest

from seabalance.model import load_model
from seabalance.multibody import SimState


def bundled(name):
    return load_model(resources.files("seabalance.scenarios.data.models") / f"{name}.model")


def random_state(model, rng, scale=1.0):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return SimState(p=rng.normal(size=3) * 0.3, quat=q, s=rng.uniform(-1, 1, model.n) * scale,
                    nu=rng.normal(size=model.n + 6))


@pytest.fixture(scope="session")
def biped5():
    return bundled("biped5")


@pytest.fixture(scope="session")
def pole3():
    return bundled("pole3")


@pytest.fixture(scope="session")
def biped14():
    return bundled("biped14")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
