import numpy as np
import pytest

from spmlab import (
    DiffusionLaw,
    Field,
    GridSpec,
    ModelParams,
    NoiseSpec,
    RegularizationParams,
    build_basis,
)


@pytest.fixture(scope="session")
def grid():
    return GridSpec(63)


@pytest.fixture(scope="session")
def basis(grid):
    return build_basis(grid, 8)


@pytest.fixture(scope="session")
def quiet_noise(basis):
    return NoiseSpec(mu=np.zeros(2), basis=basis)


@pytest.fixture(scope="session")
def small_noise(basis):
    return NoiseSpec(mu=np.array([0.05, 0.02]), basis=basis)


@pytest.fixture
def model():
    return ModelParams(DiffusionLaw(rho=1.0, alpha=0.5), reg=RegularizationParams(1e-4))


@pytest.fixture
def rng():
    return np.random.default_rng(20260823)


def random_field(grid, rng, scale=1.0):
    return Field(scale * rng.standard_normal(grid.n_interior), grid)
