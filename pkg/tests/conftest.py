import numpy as np
import pytest

from slowfastlab import models


@pytest.fixture(scope="session")
def fhn64():
    return models.build_model(models.preset("fhn", n_points=64))


@pytest.fixture(scope="session")
def fhn_oracle256():
    # unit diffusivity on (0, 2pi): the geometry of the closed-form spectrum
    return models.build_model(models.preset("fhn", n_points=256, d1=1.0))


@pytest.fixture(scope="session")
def nonlocal256():
    return models.build_model(models.preset("nonlocal_rd", n_points=256))


@pytest.fixture(scope="session")
def schnak128():
    return models.build_model(models.preset("schnakenberg", n_points=128))


@pytest.fixture(scope="session")
def dde_model():
    return models.build_model(models.preset("dde"))


@pytest.fixture(scope="session")
def nf512():
    return models.build_model(models.preset("neural_field", n_points=512))


@pytest.fixture(scope="session")
def all_models(fhn64, nonlocal256, schnak128, dde_model, nf512):
    return {
        "fhn": fhn64,
        "nonlocal_rd": nonlocal256,
        "schnakenberg": schnak128,
        "dde": dde_model,
        "neural_field": nf512,
    }
