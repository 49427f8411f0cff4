"""
Tests for the P1 forms: energy, residual, second derivative and assembly.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core import fem
from src.core.linsolve import SolveConfig, solve_spd
from src.core.mesh import build_lshape, interpolate
from src.core.spaces import DualVector
from src.models.diffusion import DiffusionModel, constant, mu1, mu2, mu3
from src.utils.errors import ArgumentError, CapabilityError


def test_energy_gradient_matches_finite_differences(mesh3, random_fe):
    """Test <F(u), v> against central differences of H (h = 1e-5)."""
    model = mu1()
    b = fem.assemble_load(mesh3, fem.sine_product(), model)
    h = 1e-5
    for _ in range(20):
        u = random_fe(mesh3, 0.1)
        v = random_fe(mesh3, 1.0)
        exact = fem.residual(mesh3, model, u, b).apply(v)
        fd = (fem.energy(mesh3, model, u.axpy(h, v), b) - fem.energy(mesh3, model, u.axpy(-h, v), b)) / (2 * h)
        assert_allclose(fd, exact, rtol=1e-6, atol=1e-9)


def test_fprime_form_matches_finite_differences(mesh3, random_fe):
    """Test <F'(u) v, w> against central differences of F."""
    model = mu1()
    b = fem.assemble_load(mesh3, fem.sine_product(), model)
    h = 1e-5
    for _ in range(20):
        u = random_fe(mesh3, 0.1)
        v = random_fe(mesh3, 1.0)
        w = random_fe(mesh3, 1.0)
        plus = fem.residual(mesh3, model, u.axpy(h, v), b).apply(w)
        minus = fem.residual(mesh3, model, u.axpy(-h, v), b).apply(w)
        assert_allclose((plus - minus) / (2 * h), fem.fprime_form(mesh3, model, u, v, w), rtol=1e-5, atol=1e-8)


@pytest.mark.parametrize("factory,amplitude", [(mu1, 0.3), (mu2, 0.3), (mu3, 0.03)])
def test_monotonicity_and_lipschitz_envelope(mesh3, random_fe, factory, amplitude):
    """Test m ||u - v||^2 <= <F(u) - F(v), u - v> <= 3 M ||u - v||^2 on random pairs."""
    model = factory()
    b = fem.assemble_load(mesh3, fem.sine_product(), model)
    for _ in range(100):
        u = random_fe(mesh3, amplitude)
        v = random_fe(mesh3, amplitude)
        diff = u.axpy(-1.0, v)
        pairing = fem.residual(mesh3, model, u, b).apply(diff) - fem.residual(mesh3, model, v, b).apply(diff)
        norm2 = fem.h1_seminorm(mesh3, diff) ** 2
        assert pairing >= model.m_mu * norm2 * (1.0 - 1e-9)
        assert pairing <= 3.0 * model.M_mu * norm2 * (1.0 + 1e-9)


def test_stiffness_is_symmetric_positive_definite(mesh3, random_fe):
    A = fem.assemble_stiffness(mesh3, mu3(), random_fe(mesh3, 0.1))
    assert abs(A - A.T).max() < 1e-12
    assert np.all(A.diagonal() > 0.0)


def test_constant_model_stiffness_is_laplacian(mesh3, random_fe):
    A = fem.assemble_stiffness(mesh3, constant(), random_fe(mesh3, 1.0))
    L = fem.laplace_stiffness(mesh3)
    assert abs(A - L).max() < 1e-13


def test_fprime_form_for_constant_model_is_quadratic_form(mesh3, random_fe):
    v = random_fe(mesh3)
    w = random_fe(mesh3)
    u = random_fe(mesh3)
    L = fem.laplace_stiffness(mesh3)
    expected = float(v.free_values @ (L @ w.free_values))
    assert fem.fprime_form(mesh3, constant(), u, v, w) == pytest.approx(expected, rel=1e-12)


def test_fprime_form_needs_derivative(mesh3):
    model = DiffusionModel(name="plain", mu=lambda t: 1.0 + 0.0 * t, m_mu=1.0, M_mu=1.0)
    u = mesh3.zero_function()
    with pytest.raises(CapabilityError):
        fem.fprime_form(mesh3, model, u, u, u)


def test_element_gradient_matches_vectorised(mesh3, random_fe):
    u = random_fe(mesh3)
    grads = fem.element_gradients(mesh3, u)
    for t in (0, 17, mesh3.n_triangles - 1):
        assert_allclose(fem.element_gradient(mesh3, t, u), grads[t])
    with pytest.raises(ArgumentError):
        fem.element_gradient(mesh3, mesh3.n_triangles, u)


def test_seminorm_of_sine_interpolant():
    """Test ||grad I u*|| approaches pi * sqrt(3/2) for u* = sin(pi x) sin(pi y)."""
    mesh = build_lshape(4)
    u = interpolate(mesh, fem.sine_product().value)
    assert fem.h1_seminorm(mesh, u) == pytest.approx(np.pi * np.sqrt(1.5), rel=2e-2)
    assert fem.h1_seminorm(mesh, mesh.zero_function()) == 0.0


def test_residual_at_zero_is_minus_load(mesh3):
    model = mu2()
    b = fem.assemble_load(mesh3, fem.sine_product(), model)
    F = fem.residual(mesh3, model, mesh3.zero_function(), b)
    assert_allclose(F.free_values, -b.free_values, atol=1e-15)


def test_binding_mismatch_raises(mesh2, mesh3):
    model = mu1()
    b2 = fem.assemble_load(mesh2, fem.sine_product(), model)
    with pytest.raises(ArgumentError):
        fem.energy(mesh3, model, mesh3.zero_function(), b2)


def test_dual_norm_is_riesz_lift(mesh3):
    model = mu1()
    b = fem.assemble_load(mesh3, fem.sine_product(), model)
    z = solve_spd(fem.laplace_stiffness(mesh3), b, SolveConfig(method="direct"))
    assert fem.dual_norm(mesh3, b) == pytest.approx(np.sqrt(z.free_values @ b.free_values), rel=1e-9)
    assert fem.dual_norm(mesh3, DualVector(np.zeros(mesh3.n_free), mesh3.mesh_id)) == 0.0


def test_source_load_integrates_constants(mesh3):
    """Test sum_i int phi_i = area covered by the free hat functions."""
    b = fem.assemble_source_load(mesh3, lambda x, y: np.ones_like(x))
    assert b.free_values.min() > 0.0
    assert b.free_values.sum() < 3.0


def test_assembly_independent_of_worker_count(random_fe):
    """Test multi-chunk threaded evaluation reproduces the serial result bit for bit."""
    mesh = build_lshape(6)
    assert mesh.n_triangles > fem.CHUNK_SIZE
    model = mu3()
    b = fem.assemble_load(mesh, fem.sine_product(), model, workers=1)
    b4 = fem.assemble_load(mesh, fem.sine_product(), model, workers=4)
    assert np.array_equal(b.free_values, b4.free_values)
    u = random_fe(mesh, 0.01)
    assert fem.energy(mesh, model, u, b, workers=1) == fem.energy(mesh, model, u, b, workers=4)
    A1 = fem.assemble_stiffness(mesh, model, u, workers=1)
    A4 = fem.assemble_stiffness(mesh, model, u, workers=4)
    assert np.array_equal(A1.data, A4.data) and np.array_equal(A1.indices, A4.indices)
