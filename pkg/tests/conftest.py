import numpy as np
import pytest

from fracsir.config import parse_config
from fracsir.solver import simulate


def run_preset(name: str, **overrides):
    cfg = parse_config("", preset=name, **overrides)
    hist = simulate(
        cfg.params, cfg.incidence_model, cfg.grid, cfg.initial_condition, cfg.alpha,
        window=None,
    )
    return cfg, hist


@pytest.fixture(scope="session")
def dfe_short():
    return run_preset("paper-dfe", steps=1500)


@pytest.fixture(scope="session")
def ee_short():
    return run_preset("paper-ee", steps=1500)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
