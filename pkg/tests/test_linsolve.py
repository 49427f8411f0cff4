"""
Tests for the SPD solver wrapper.
"""

import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose

from src.core import fem
from src.core.linsolve import SolveConfig, SolverMethod, solve_spd, verify_solution
from src.core.spaces import DualVector
from src.models.diffusion import mu1
from src.utils.errors import ArgumentError, ConfigurationError, IndefiniteMatrixError, SolverConvergenceError


@pytest.fixture
def laplace_system(mesh3):
    A = fem.laplace_stiffness(mesh3)
    b = fem.assemble_load(mesh3, fem.sine_product(), mu1())
    return A, b


def test_cg_matches_direct(laplace_system):
    A, b = laplace_system
    x_cg = solve_spd(A, b, SolveConfig(method="cg", rel_tolerance=1e-12))
    x_direct = solve_spd(A, b, SolveConfig(method="direct"))
    assert_allclose(x_cg.free_values, x_direct.free_values, rtol=1e-8, atol=1e-12)
    assert x_cg.mesh_id == b.mesh_id


def test_verified_solve(laplace_system):
    A, b = laplace_system
    x = solve_spd(A, b, SolveConfig(verify_residual=True))
    assert verify_solution(A, x.free_values, b.free_values, SolveConfig()) <= 1e-11


def test_zero_rhs_gives_zero(laplace_system):
    A, b = laplace_system
    x = solve_spd(A, DualVector(np.zeros(len(b)), b.mesh_id))
    assert not np.any(x.free_values)


def test_iteration_cap_raises(laplace_system):
    A, b = laplace_system
    with pytest.raises(SolverConvergenceError) as info:
        solve_spd(A, b, SolveConfig(method="cg", max_iterations=1))
    assert info.value.residual > 0.0
    assert info.value.iterations == 1


def test_negative_diagonal_is_indefinite():
    A = -sp.identity(3, format="csr")
    with pytest.raises(IndefiniteMatrixError):
        solve_spd(A, DualVector(np.ones(3), "m"))


def test_negative_curvature_is_indefinite():
    """Test [[1, 2], [2, 1]] with b = (1, -1): x = (-1, 1), <x, b> = -2."""
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(IndefiniteMatrixError):
        solve_spd(A, DualVector(np.array([1.0, -1.0]), "m"), SolveConfig(method="direct"))


def test_shape_mismatch(laplace_system):
    A, _ = laplace_system
    with pytest.raises(ArgumentError):
        solve_spd(A, DualVector(np.ones(3), "m"))


def test_solve_config_parsing():
    assert SolveConfig(method="direct").method is SolverMethod.DIRECT
    assert SolveConfig().iteration_cap(50) == 500
    with pytest.raises(ConfigurationError):
        SolveConfig(method="gmres")
    with pytest.raises(ConfigurationError):
        SolveConfig(rel_tolerance=0.0)
