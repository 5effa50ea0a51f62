import numpy as np
import pytest

from pmuse.netmodel import feature_map
from pmuse.netmodel.presets import synthetic_case
from pmuse.sampler import build_dataset, noise_preset, parametric_model

SMALL_PMUS = (1, 6, 12, 20, 27)


@pytest.fixture(scope="session")
def small_case():
    return synthetic_case(30, seed=1)


@pytest.fixture(scope="session")
def small_placement(small_case):
    return feature_map(small_case, SMALL_PMUS)


@pytest.fixture(scope="session")
def small_dataset(small_case, small_placement):
    model = parametric_model(small_case, pct_std=5.0)
    return build_dataset(small_case, small_placement, model, 600, noise_preset("gaussian"), seed=3,
                         splits=(400, 100, 100))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
