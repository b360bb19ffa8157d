import numpy as np
import pytest

from src.envs.tabular import build_motivating_mdp
from src.oracle.policy import ExactPolicy


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def motivating_mdp():
    return build_motivating_mdp()


@pytest.fixture
def uniform_policy(motivating_mdp):
    return ExactPolicy.uniform(motivating_mdp)
