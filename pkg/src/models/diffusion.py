"""
Nonlinear diffusion coefficients mu and everything derived from them.

A model bundles mu(t), its derivative mu'(t), the antiderivative
psi(s) = 1/2 * int_0^s mu(t) dt and the two-sided slope constants
(m_mu, M_mu) that bound t -> mu(t^2) t from below and above.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from ..utils.errors import CapabilityError, ConfigurationError
from ..utils.logger import get_logger

logger = get_logger(__name__)

ScalarFunction = Callable[[np.ndarray], np.ndarray]

# Composite Gauss-Legendre rule used for psi when no closed form exists
QUADRATURE_ORDER = 8
PANEL_WIDTH = 0.25
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(QUADRATURE_ORDER)


def gauss_legendre_antiderivative(
    f: ScalarFunction,
    s: np.ndarray,
    panel_width: float = PANEL_WIDTH,
) -> np.ndarray:
    """
    Integrate f over [0, s] for every entry of s.

    Full panels [k*w, (k+1)*w] are shared between all entries through a
    cumulative table; the remainder [k*w, s] gets its own panel. Panel
    boundaries sit on multiples of ``panel_width`` so piecewise coefficients
    with breakpoints on that grid are integrated branch by branch.
    """
    s = np.maximum(np.asarray(s, dtype=float), 0.0)
    if s.size == 0:
        return np.zeros_like(s)

    full_panels = np.floor(s / panel_width).astype(np.int64)
    n_table = int(full_panels.max())

    half = 0.5 * (_GL_NODES + 1.0)
    if n_table > 0:
        left = np.arange(n_table, dtype=float) * panel_width
        x = left[:, None] + half[None, :] * panel_width
        panel_integrals = (f(x) * _GL_WEIGHTS).sum(axis=1) * (0.5 * panel_width)
        cumulative = np.concatenate(([0.0], np.cumsum(panel_integrals)))
    else:
        cumulative = np.zeros(1)

    start = full_panels * panel_width
    width = s - start
    xp = start[..., None] + half * width[..., None]
    partial = (f(xp) * _GL_WEIGHTS).sum(axis=-1) * (0.5 * width)

    return cumulative[full_panels] + partial


@dataclass(frozen=True)
class AnalysisConstants:
    """Constants of the convergence analysis derived from (m_mu, M_mu)."""
    nu: float                    # strong monotonicity of H'
    lipschitz: float             # L_H
    alpha: float                 # coercivity of a(u; ., .)
    beta: float                  # boundedness of a(u; ., .)
    delta_min: float             # alpha / (4 L_H)
    delta_max_admissible: float  # 2 alpha / L_H

    @property
    def decay_constant_base(self) -> float:
        """min{alpha, L_H}; multiplied by theta it gives the decay constant C."""
        return min(self.alpha, self.lipschitz)


@dataclass(frozen=True)
class DiffusionModel:
    """
    Scalar nonlinearity mu and derived quantities.

    Attributes:
        name: Registry id ("mu1", "mu2", "mu3", "constant", or a custom label)
        mu: t -> mu(t), vectorised over numpy arrays, t >= 0
        m_mu: lower slope constant of t -> mu(t^2) t
        M_mu: upper slope constant of t -> mu(t^2) t
        mu_prime: analytic derivative; required by the Taylor step-size control
        psi: closed-form antiderivative psi(s) = 1/2 int_0^s mu; quadrature otherwise
        breakpoints: points where mu is defined piecewise
    """
    name: str
    mu: ScalarFunction
    m_mu: float
    M_mu: float
    mu_prime: Optional[ScalarFunction] = None
    psi: Optional[ScalarFunction] = None
    breakpoints: Tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.m_mu > 0:
            raise ConfigurationError(f"m_mu must be positive, got {self.m_mu}")
        if self.M_mu < self.m_mu:
            raise ConfigurationError(f"M_mu ({self.M_mu}) must not be below m_mu ({self.m_mu})")

    @property
    def has_derivative(self) -> bool:
        return self.mu_prime is not None

    def evaluate_mu(self, t) -> np.ndarray:
        return self.mu(np.maximum(np.asarray(t, dtype=float), 0.0))

    def evaluate_mu_prime(self, t) -> np.ndarray:
        if self.mu_prime is None:
            raise CapabilityError(f"diffusion model '{self.name}' does not provide mu'")
        return self.mu_prime(np.maximum(np.asarray(t, dtype=float), 0.0))

    def evaluate_psi(self, s) -> np.ndarray:
        s = np.maximum(np.asarray(s, dtype=float), 0.0)
        if self.psi is not None:
            return self.psi(s)
        return 0.5 * gauss_legendre_antiderivative(self.mu, s)

    def phi(self, t) -> np.ndarray:
        """phi(t) = int_0^t mu(s^2) s ds, which equals psi(t^2)."""
        t = np.asarray(t, dtype=float)
        return self.evaluate_psi(t * t)

    def xi(self, t) -> np.ndarray:
        """xi(t) = mu(t^2) t."""
        t = np.asarray(t, dtype=float)
        return self.evaluate_mu(t * t) * t

    def xi_prime(self, t) -> np.ndarray:
        """xi'(t) = mu(t^2) + 2 t^2 mu'(t^2)."""
        t = np.asarray(t, dtype=float)
        s = t * t
        return self.evaluate_mu(s) + 2.0 * s * self.evaluate_mu_prime(s)


def constants(model: DiffusionModel) -> AnalysisConstants:
    """
    Constants for the L-shape experiments with the norm ||grad .||_{L2}:
    nu = alpha = m_mu, L_H = 3 M_mu, beta = M_mu.
    """
    nu = model.m_mu
    lipschitz = 3.0 * model.M_mu
    alpha = model.m_mu
    return AnalysisConstants(
        nu=nu,
        lipschitz=lipschitz,
        alpha=alpha,
        beta=model.M_mu,
        delta_min=alpha / (4.0 * lipschitz),
        delta_max_admissible=2.0 * alpha / lipschitz,
    )


def mu1() -> DiffusionModel:
    """Monotonically decreasing diffusion mu(t) = 1/(t+1) + 1/2."""
    return DiffusionModel(
        name="mu1",
        mu=lambda t: 1.0 / (t + 1.0) + 0.5,
        mu_prime=lambda t: -1.0 / (t + 1.0) ** 2,
        psi=lambda s: 0.5 * np.log1p(s) + 0.25 * s,
        m_mu=3.0 / 8.0,
        M_mu=3.0 / 2.0,
    )


MU2_EPSILON = 1e-4


def mu2(epsilon: float = MU2_EPSILON) -> DiffusionModel:
    """Non-monotone diffusion mu(t) = t exp(-t^2) ln(t + eps) + 1."""

    def mu(t):
        return t * np.exp(-t * t) * np.log(t + epsilon) + 1.0

    def mu_prime(t):
        return np.exp(-t * t) * (np.log(t + epsilon) * (1.0 - 2.0 * t * t) + t / (t + epsilon))

    return DiffusionModel(
        name="mu2",
        mu=mu,
        mu_prime=mu_prime,
        m_mu=0.483503,
        M_mu=1.73565,
    )


@dataclass(frozen=True)
class ViscosityParameters:
    """Shear-thinning / shear-thickening viscosity profile."""
    t_c: float = 0.5
    t_max: float = 2.0
    mu_0: float = 5.0
    mu_c: float = 4.0
    mu_max: float = 10.0
    mu_inf: float = 6.0


def mu3(params: Optional[ViscosityParameters] = None) -> DiffusionModel:
    """
    Piecewise viscosity-type diffusion with a thinning zone on [0, t_c],
    a thickening zone on (t_c, t_max] and a thinning tail beyond t_max.

    Each rational branch is written as c + (a - c) * N/D with D > 0 so the
    breakpoints t_c and t_max evaluate without division by zero.
    """
    p = params or ViscosityParameters()

    def _branches(t):
        first = t <= p.t_c
        second = (t > p.t_c) & (t <= p.t_max)
        third = t > p.t_max
        return first, second, third

    def mu(t):
        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        first, second, third = _branches(t)

        d = t[first] - p.t_c
        tt = t[first]
        out[first] = p.mu_c + (p.mu_0 - p.mu_c) * d * d / (d * d + tt * tt)

        a = t[second] - p.t_c
        e = t[second] - p.t_max
        out[second] = p.mu_max + (p.mu_c - p.mu_max) * e * e / (e * e + a * a)

        e = t[third] - p.t_max
        out[third] = p.mu_inf + (p.mu_max - p.mu_inf) / (1.0 + e * e)
        return out

    def mu_prime(t):
        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        first, second, third = _branches(t)

        d = t[first] - p.t_c
        tt = t[first]
        denom = d * d + tt * tt
        out[first] = (p.mu_0 - p.mu_c) * 2.0 * d * tt * p.t_c / (denom * denom)

        a = t[second] - p.t_c
        e = t[second] - p.t_max
        denom = e * e + a * a
        out[second] = (p.mu_c - p.mu_max) * 2.0 * e * a * (p.t_max - p.t_c) / (denom * denom)

        e = t[third] - p.t_max
        denom = 1.0 + e * e
        out[third] = -(p.mu_max - p.mu_inf) * 2.0 * e / (denom * denom)
        return out

    return DiffusionModel(
        name="mu3",
        mu=mu,
        mu_prime=mu_prime,
        m_mu=1.68,
        M_mu=28.2696,
        breakpoints=(p.t_c, p.t_max),
    )


def constant(value: float = 1.0) -> DiffusionModel:
    """Linear debug model mu = value; psi(s) = value * s / 2."""
    return DiffusionModel(
        name="constant",
        mu=lambda t: np.full_like(np.asarray(t, dtype=float), value),
        mu_prime=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        psi=lambda s: 0.5 * value * np.asarray(s, dtype=float),
        m_mu=value,
        M_mu=value,
    )


MODEL_FACTORIES: Dict[str, Callable[[], DiffusionModel]] = {
    "mu1": mu1,
    "mu2": mu2,
    "mu3": mu3,
    "constant": constant,
}


def get_model(model_id: str) -> DiffusionModel:
    """Look up a built-in model by id."""
    try:
        factory = MODEL_FACTORIES[model_id]
    except KeyError:
        raise ConfigurationError(
            f"unknown diffusion model '{model_id}', expected one of {sorted(MODEL_FACTORIES)}"
        ) from None
    return factory()


def slope_bounds(
    model: DiffusionModel,
    t_max: float = 20.0,
    samples: int = 40001,
) -> Tuple[float, float]:
    """
    Numerically recompute (inf xi', sup xi') on [0, t_max].

    A dense grid locates the extremal samples; golden-section search then
    refines inside the bracketing grid cells. Extremes at the interval ends
    are returned as sampled.
    """
    grid = np.linspace(0.0, t_max, samples)
    values = model.xi_prime(grid)

    def scalar(t: float) -> float:
        return float(model.xi_prime(np.array([t]))[0])

    def refine(index: int, sign: float) -> float:
        if index == 0 or index == samples - 1:
            return float(values[index])
        try:
            result = minimize_scalar(
                lambda t: sign * scalar(t),
                bracket=(grid[index - 1], grid[index], grid[index + 1]),
                method="golden",
                options={"xtol": 1e-12},
            )
        except ValueError:
            # flat neighbourhood, no strict bracket
            return float(values[index])
        refined = sign * float(result.fun)
        # never report something worse than the grid already showed
        return min(refined, float(values[index])) if sign > 0 else max(refined, float(values[index]))

    lower = refine(int(np.argmin(values)), 1.0)
    upper = refine(int(np.argmax(values)), -1.0)
    return lower, upper


def check_declared_constants(
    model: DiffusionModel,
    rel_tol: float = 1e-4,
    bounds: Optional[Tuple[float, float]] = None,
) -> bool:
    """Compare declared (m_mu, M_mu) with slope_bounds and log any discrepancy."""
    lower, upper = bounds if bounds is not None else slope_bounds(model)
    ok = True
    if not math.isclose(lower, model.m_mu, rel_tol=rel_tol):
        logger.warning(f"{model.name}: declared m_mu={model.m_mu} but inf xi' ~ {lower:.6g}")
        ok = False
    if not math.isclose(upper, model.M_mu, rel_tol=rel_tol):
        logger.warning(f"{model.name}: declared M_mu={model.M_mu} but sup xi' ~ {upper:.6g}")
        ok = False
    return ok


def energy_is_convex(model: DiffusionModel, bounds: Optional[Tuple[float, float]] = None) -> bool:
    """
    phi(t) = psi(t^2) is convex iff xi' >= 0, and then H has a single critical point.

    A negative inf xi' means the energy may have several critical points, so
    iterates and a reference computed by another method can settle apart.
    """
    lower, _ = bounds if bounds is not None else slope_bounds(model)
    return lower > 0.0
