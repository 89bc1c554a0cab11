import numpy as np
import pytest

from advhopf import charpoint
from advhopf.model import GrowthSpec, KernelSpec, ModelParams


def make_params(alpha=1.0, L=1.0, r=0.05, growth="linear", kernel="delta", n_cells=64, m0=1.0,
                **kw):
    return ModelParams(alpha=alpha, L=L, r=r, growth=GrowthSpec(growth, m0=m0),
                       kernel=KernelSpec(kernel), n_cells=n_cells, **kw)


@pytest.fixture(scope="session")
def linear_hopf():
    """Hopf data for m(x)=x, α=1, L=1, r=0.05 on 64 cells."""
    return charpoint.hopf_point(make_params())


@pytest.fixture(scope="session")
def homogeneous_hopf():
    """Hopf data for the spatially homogeneous logistic case at r=0.1."""
    return charpoint.hopf_point(make_params(alpha=0.0, r=0.1, growth="constant", n_cells=16))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
