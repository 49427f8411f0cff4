"""
Shared fixtures for the Kacanov test suite.
"""

import numpy as np
import pytest
from loguru import logger

from src.core.kacanov import KacanovContext
from src.core.linsolve import SolveConfig
from src.core.mesh import build_lshape
from src.core.spaces import FeFunction
from src.models.diffusion import constant, mu1


@pytest.fixture(autouse=True)
def _reset_loguru_extra():
    """Undo the global ``extra`` defaults that ``setup_logging`` (via the CLI tests) installs."""
    yield
    logger.configure(extra={})


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def mesh2():
    return build_lshape(2)


@pytest.fixture(scope="session")
def mesh3():
    return build_lshape(3)


@pytest.fixture
def direct():
    return SolveConfig(method="direct")


@pytest.fixture
def linear_ctx(mesh2, direct):
    """Constant diffusion: every Kacanov system is the Laplacian."""
    return KacanovContext.build(mesh2, constant(), solve_config=direct)


@pytest.fixture
def mu1_ctx(mesh3):
    return KacanovContext.build(mesh3, mu1())


@pytest.fixture
def random_fe(rng):
    """Factory for random P1 functions with uniform nodal values in [-amplitude, amplitude]."""
    def make(mesh, amplitude=1.0):
        return FeFunction(rng.uniform(-amplitude, amplitude, mesh.n_free), mesh.mesh_id)
    return make
