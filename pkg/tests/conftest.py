from __future__ import annotations

import os

import numpy as np
import pytest

from crackscat.models.schemas import RunConfig
from crackscat.nn import MlpModel


def pytest_collection_modifyitems(config, items):
    if os.environ.get("CRACKSCAT_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="set CRACKSCAT_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def run_config() -> RunConfig:
    return RunConfig()


def constant_model(kind: str, bias, n_in: int = 80) -> MlpModel:
    """Network whose output is `bias` for every input."""
    bias = np.atleast_1d(np.asarray(bias, float))
    model = MlpModel.create(kind, n_in=n_in, hidden=(4,), out=len(bias))
    model.weights = [np.zeros_like(w) for w in model.weights]
    model.biases[-1] = bias.copy()
    return model


@pytest.fixture
def random_models():
    from crackscat.inverse import ModelSet

    r = np.random.default_rng(5)
    return ModelSet(
        MlpModel.create("N1", hidden=(16, 16), rng=r),
        MlpModel.create("N2", hidden=(16, 16), rng=r),
        MlpModel.create("N3", hidden=(16, 16), rng=r),
    )
