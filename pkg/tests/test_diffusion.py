"""
Tests for the diffusion models and their derived quantities.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import cumulative_trapezoid, quad

from src.models.diffusion import (
    DiffusionModel,
    check_declared_constants,
    constant,
    constants,
    energy_is_convex,
    gauss_legendre_antiderivative,
    get_model,
    mu1,
    mu2,
    mu3,
    slope_bounds,
)
from src.utils.errors import CapabilityError, ConfigurationError


def test_antiderivative_exact_for_polynomials():
    """Test the composite rule integrates cubics exactly, including partial panels."""
    s = np.array([0.0, 0.1, 0.25, 1.3, 2.0])
    assert_allclose(gauss_legendre_antiderivative(lambda t: t ** 3, s), s ** 4 / 4, rtol=1e-13, atol=1e-15)


def test_mu1_closed_form_psi_matches_quadrature():
    """Test the closed-form psi of mu1 against the quadrature fallback."""
    model = mu1()
    s = np.linspace(0.0, 10.0, 41)
    assert_allclose(model.evaluate_psi(s), 0.5 * gauss_legendre_antiderivative(model.mu, s), rtol=1e-10, atol=1e-14)


def test_mu3_psi_against_adaptive_quadrature():
    """Test quadrature psi for the piecewise model across both breakpoints."""
    model = mu3()
    for s in (0.3, 1.0, 3.0, 7.5):
        expected, _ = quad(lambda t: float(model.mu(np.array([t]))[0]), 0.0, s, points=[0.5, 2.0], epsabs=1e-13)
        assert float(model.evaluate_psi(np.array([s]))[0]) == pytest.approx(0.5 * expected, rel=1e-8)


@pytest.mark.parametrize("factory,points", [
    (mu1, [0.0, 0.5, 3.0]),
    (mu2, [0.05, 0.3, 1.0, 2.5]),
    (mu3, [0.2, 1.0, 3.0]),
])
def test_mu_prime_matches_finite_differences(factory, points):
    """Test the analytic derivatives away from breakpoints."""
    model = factory()
    t = np.array(points)
    h = 1e-6
    fd = (model.evaluate_mu(t + h) - model.evaluate_mu(np.maximum(t - h, 0.0))) / (t + h - np.maximum(t - h, 0.0))
    tolerance = 1e-5 if points[0] == 0.0 else 1e-6
    assert_allclose(model.evaluate_mu_prime(t), fd, rtol=tolerance, atol=tolerance)


def test_mu3_is_continuous_at_breakpoints():
    """Test mu3 takes the profile values at 0, t_c and t_max."""
    model = mu3()
    assert model.evaluate_mu(np.array([0.0]))[0] == pytest.approx(5.0)
    for t, value in ((0.5, 4.0), (2.0, 10.0)):
        left = model.evaluate_mu(np.array([t - 1e-9]))[0]
        right = model.evaluate_mu(np.array([t + 1e-9]))[0]
        assert left == pytest.approx(value, abs=1e-6)
        assert right == pytest.approx(value, abs=1e-6)
    assert model.evaluate_mu(np.array([1e6]))[0] == pytest.approx(6.0, abs=1e-6)


def test_phi_is_psi_of_square():
    model = mu2()
    t = np.array([0.0, 0.4, 1.7])
    assert_allclose(model.phi(t), model.evaluate_psi(t * t))


def test_xi_prime_at_zero_is_mu_at_zero():
    for model in (mu1(), mu2(), mu3()):
        assert model.xi_prime(np.array([0.0]))[0] == pytest.approx(model.evaluate_mu(np.array([0.0]))[0])


def test_analysis_constants_mu1():
    """Test nu = alpha = m, L_H = 3M, beta = M and the derived step bounds."""
    c = constants(mu1())
    assert c.nu == c.alpha == pytest.approx(0.375)
    assert c.lipschitz == pytest.approx(4.5)
    assert c.beta == pytest.approx(1.5)
    assert c.delta_min == pytest.approx(0.375 / 18.0)
    assert c.delta_max_admissible == pytest.approx(0.75 / 4.5)
    assert c.decay_constant_base == pytest.approx(0.375)


def test_slope_bounds_mu1():
    """Test inf/sup of xi' for mu1: (1 - t^2)/(1 + t^2)^2 + 1/2 lies in [3/8, 3/2]."""
    lower, upper = slope_bounds(mu1())
    assert lower == pytest.approx(0.375, abs=1e-8)
    assert upper == pytest.approx(1.5, abs=1e-12)
    assert check_declared_constants(mu1())


def test_slope_bounds_mu2():
    """Test inf xi' reproduces m_mu to 1e-4 while sup xi' exceeds the declared M_mu."""
    model = mu2()
    lower, upper = slope_bounds(model)
    assert lower == pytest.approx(0.483503, abs=1e-4)
    assert upper > model.M_mu + 0.05
    assert not check_declared_constants(model)
    assert energy_is_convex(model)


def test_slope_bounds_mu3():
    """Test the thickening zone reproduces M and that the thinning tail dips below the declared m."""
    model = mu3()
    lower, upper = slope_bounds(model)
    assert upper == pytest.approx(28.2696, rel=1e-3)
    assert lower < model.m_mu
    assert lower < 0.0
    assert not check_declared_constants(model)
    assert not energy_is_convex(model)
    assert not check_declared_constants(model, bounds=(lower, upper))


def test_get_model_registry():
    assert get_model("mu1").name == "mu1"
    assert get_model("constant").M_mu == 1.0
    with pytest.raises(ConfigurationError):
        get_model("mu4")


def test_model_validation():
    with pytest.raises(ConfigurationError):
        DiffusionModel(name="bad", mu=lambda t: t, m_mu=0.0, M_mu=1.0)
    with pytest.raises(ConfigurationError):
        DiffusionModel(name="bad", mu=lambda t: t, m_mu=2.0, M_mu=1.0)


def test_missing_derivative_raises_capability_error():
    model = DiffusionModel(name="plain", mu=lambda t: 1.0 + 0.0 * t, m_mu=1.0, M_mu=1.0)
    assert not model.has_derivative
    with pytest.raises(CapabilityError):
        model.evaluate_mu_prime(np.array([1.0]))


def test_constant_model():
    model = constant(2.0)
    s = np.array([0.0, 1.0, 4.0])
    assert_allclose(model.evaluate_mu(s), 2.0)
    assert_allclose(model.evaluate_mu_prime(s), 0.0)
    assert_allclose(model.evaluate_psi(s), s)


MU2_UPPER_XFAIL = pytest.mark.xfail(
    strict=True, reason="sup xi' of mu2 is about 1.818, above the declared M_mu = 1.73565"
)
MU3_LOWER_XFAIL = pytest.mark.xfail(
    strict=True, reason="xi' of mu3 dips to about -5 on the thinning tail, below the declared m_mu = 1.68"
)
DENSE_T = np.linspace(0.0, 100.0, 400001)


@pytest.mark.parametrize("factory", [mu1, mu2, pytest.param(mu3, marks=MU3_LOWER_XFAIL)])
def test_xi_prime_above_declared_lower_bound(factory):
    model = factory()
    assert model.xi_prime(DENSE_T).min() >= model.m_mu * (1.0 - 1e-3)


@pytest.mark.parametrize("factory", [mu1, pytest.param(mu2, marks=MU2_UPPER_XFAIL), mu3])
def test_xi_prime_below_declared_upper_bound(factory):
    model = factory()
    assert model.xi_prime(DENSE_T).max() <= model.M_mu * (1.0 + 1e-3)


@pytest.mark.parametrize("factory", [mu1, mu2, mu3])
def test_mu_between_slope_constants(factory):
    """Test m_mu <= mu <= M_mu, since mu(t^2) = xi(t) / t averages xi' over [0, t]."""
    model = factory()
    values = model.evaluate_mu(DENSE_T)
    assert values.min() >= model.m_mu - 1e-12
    assert values.max() <= model.M_mu + 1e-12


@pytest.mark.parametrize("factory", [
    mu1,
    pytest.param(mu2, marks=pytest.mark.xfail(
        strict=False, reason="chords inside the narrow zone where xi' exceeds M_mu break the upper bound")),
    pytest.param(mu3, marks=pytest.mark.xfail(
        strict=False, reason="chords inside the zone where xi' < m_mu break the lower bound")),
])
def test_slope_inequality_on_random_pairs(rng, factory):
    """Test m (t - s) <= mu(t^2) t - mu(s^2) s <= M (t - s) for 10^4 pairs t > s in [0, 100]."""
    model = factory()
    pairs = np.sort(rng.uniform(0.0, 100.0, size=(10000, 2)), axis=1)
    s, t = pairs[:, 0], pairs[:, 1]
    chord = model.xi(t) - model.xi(s)
    gap = t - s
    slack = 1e-9 * (1.0 + np.abs(model.xi(t)) + np.abs(model.xi(s)))
    assert np.all(chord >= model.m_mu * gap - slack)
    assert np.all(chord <= model.M_mu * gap + slack)


@pytest.mark.parametrize("factory", [mu1, mu2, mu3])
def test_psi_against_trapezoid_oracle(factory):
    """Test psi(s) = 1/2 int_0^s mu on [0, 100] against a fine cumulative trapezoid rule."""
    model = factory()
    t = np.linspace(0.0, 100.0, 200001)
    oracle = 0.5 * cumulative_trapezoid(model.evaluate_mu(t), t, initial=0.0)
    sample = slice(None, None, 2000)
    assert_allclose(model.evaluate_psi(t[sample]), oracle[sample], rtol=1e-8, atol=1e-4)


def test_constant_model_energy_is_convex():
    assert energy_is_convex(constant())
    assert energy_is_convex(mu1())
