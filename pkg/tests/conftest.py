import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from smbstat.model import BernoulliModel, GeometricModel, MarkovModel

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

EXAMPLE_P = [[0.9, 0.1], [0.2, 0.8]]
MODELS_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "models")


@pytest.fixture
def markov():
    return MarkovModel(EXAMPLE_P)


@pytest.fixture
def three_weights():
    return BernoulliModel([0.5, 0.25, 0.25])


@pytest.fixture
def biased_coin():
    return BernoulliModel([0.3, 0.7])


@pytest.fixture
def fair_coin():
    return BernoulliModel([0.5, 0.5])


@pytest.fixture
def geometric():
    return GeometricModel(0.5)


@pytest.fixture
def models_dir():
    return Path(os.path.abspath(MODELS_DIR))


def random_markov(rng: np.random.Generator, K: int, concentration: float = 4.0) -> MarkovModel:
    return MarkovModel(rng.dirichlet(np.full(K, concentration), size=K))


def random_bernoulli(rng: np.random.Generator, K: int, concentration: float = 4.0) -> BernoulliModel:
    return BernoulliModel(rng.dirichlet(np.full(K, concentration)))


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
