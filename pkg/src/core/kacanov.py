"""
Iteration engine for the damped Kacanov method.

One step solves the linearised problem A(u^n) rho^n = F(u^n) and moves to
u^{n+1} = u^n - delta^n rho^n. The damping delta^n is either fixed or
chosen adaptively so that the energy H decays by at least
theta * min{alpha, L_H} * ||u^{n+1} - u^n||^2.
"""

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.sparse.linalg import factorized

from ..models.diffusion import AnalysisConstants, DiffusionModel, constants as analysis_constants
from ..utils.errors import ArgumentError, ConfigurationError, RetryLimitError
from ..utils.logger import get_logger
from ..utils.performance import SolverProfiler
from . import fem
from .damping import DampingKind, DampingStrategy, PredictionCorrectionState
from .linsolve import SolveConfig, solve_spd
from .mesh import TriangleMesh
from .spaces import DualVector, FeFunction, require_same_space

logger = get_logger(__name__)

TRACE_COLUMNS = ["n", "delta", "energy", "error", "decrement", "decay_ok", "retries"]
NONCONVERGENCE_WINDOW = 10


@dataclass
class KacanovContext:
    """Everything a step needs: discretisation, model, load and solver settings."""
    mesh: TriangleMesh
    model: DiffusionModel
    load: DualVector
    constants: AnalysisConstants
    solve_config: SolveConfig = field(default_factory=SolveConfig)
    workers: int = 1
    profiler: SolverProfiler = field(default_factory=SolverProfiler)

    @classmethod
    def build(
        cls,
        mesh: TriangleMesh,
        model: DiffusionModel,
        manufactured: Optional[fem.ManufacturedSolution] = None,
        solve_config: Optional[SolveConfig] = None,
        workers: int = 1,
    ) -> "KacanovContext":
        manufactured = manufactured or fem.sine_product()
        load = fem.assemble_load(mesh, manufactured, model, workers)
        return cls(
            mesh=mesh,
            model=model,
            load=load,
            constants=analysis_constants(model),
            solve_config=solve_config or SolveConfig(),
            workers=workers,
        )

    def linearize(self, u: FeFunction) -> Tuple[sp.csr_matrix, DualVector]:
        """A(u) and F(u) = A(u) u - b from one assembly."""
        with self.profiler.track("assembly"):
            A = fem.assemble_stiffness(self.mesh, self.model, u, self.workers)
        F = DualVector(A @ u.free_values - self.load.free_values, self.mesh.mesh_id)
        return A, F

    def solve(self, A: sp.csr_matrix, rhs: DualVector) -> FeFunction:
        with self.profiler.track("solve"):
            return solve_spd(A, rhs, self.solve_config)

    def energy(self, u: FeFunction) -> float:
        with self.profiler.track("energy"):
            return fem.energy(self.mesh, self.model, u, self.load, self.workers)

    def norm(self, v: FeFunction) -> float:
        return fem.h1_seminorm(self.mesh, v)

    def distance(self, u: FeFunction, w: FeFunction) -> float:
        return self.norm(u.axpy(-1.0, w))


@dataclass(frozen=True)
class StepResult:
    """Outcome of one outer iteration."""
    u_next: FeFunction
    energy: float
    delta: float
    retries: int
    decrement: float
    step_norm: float
    decay_ok: bool
    clamped: bool = False


@dataclass(frozen=True)
class StepRecord:
    n: int
    delta: float
    energy: float
    error: float
    decrement: float
    decay_ok: bool
    retries: int
    step_norm: float = math.nan


@dataclass
class IterationTrace:
    """Per-step history of one run."""
    strategy: str
    delta_min: float
    records: List[StepRecord] = field(default_factory=list)
    converged: bool = False
    nonconvergent: bool = False
    clamped_steps: int = 0
    final_iterate: Optional[FeFunction] = None
    final_dual_residual: float = math.nan

    def __len__(self) -> int:
        return len(self.records)

    @property
    def errors(self) -> np.ndarray:
        return np.array([record.error for record in self.records])

    @property
    def deltas(self) -> np.ndarray:
        return np.array([record.delta for record in self.records[1:]])

    @property
    def final_error(self) -> float:
        return self.records[-1].error if self.records else math.nan

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            [(r.n, r.delta, r.energy, r.error, r.decrement, int(r.decay_ok), r.retries) for r in self.records],
            columns=TRACE_COLUMNS,
        )
        return frame.astype({"n": "int64", "decay_ok": "int64", "retries": "int64"})

    def to_csv(self, path: Union[str, Path]) -> Path:
        """Write the trace; floats in full-precision scientific notation."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17e", na_rep="nan", lineterminator="\n")
        return path


@dataclass(frozen=True)
class StopCriteria:
    max_iters: int = 50
    tol_error: float = 1e-10
    u_ref: Optional[FeFunction] = None

    def __post_init__(self):
        if self.max_iters < 0:
            raise ConfigurationError(f"max_iters must be non-negative, got {self.max_iters}")
        if not self.tol_error > 0:
            raise ConfigurationError(f"tol_error must be positive, got {self.tol_error}")


def kacanov_update(u: FeFunction, delta: float, ctx: KacanovContext) -> Tuple[FeFunction, FeFunction]:
    """u_next = u - delta rho with A(u) rho = F(u)."""
    if not delta > 0:
        raise ArgumentError(f"damping parameter must be positive, got {delta}")
    A, F = ctx.linearize(u)
    rho = ctx.solve(A, F)
    return u.axpy(-delta, rho), rho


def taylor_step(
    u: FeFunction,
    rho: FeFunction,
    ctx: KacanovContext,
    delta_min: Optional[float] = None,
    F: Optional[DualVector] = None,
) -> float:
    """
    delta = <F(u), rho> / <F'(u) rho, rho>, bounded below by delta_min.
    A non-positive curvature denominator falls back to delta_min.
    """
    delta_min = ctx.constants.delta_min if delta_min is None else delta_min
    if F is None:
        F = ctx.linearize(u)[1]
    numerator = F.apply(rho)
    denominator = fem.fprime_form(ctx.mesh, ctx.model, u, rho, rho)
    if not denominator > 0.0:
        logger.debug(f"non-positive curvature {denominator:.3e}; using delta_min")
        return delta_min
    return max(delta_min, numerator / denominator)


def _decay_holds(decrement: float, step_norm: float, C: float, tolerance: float) -> bool:
    return decrement >= C * step_norm * step_norm - tolerance


def fixed_damping_step(u: FeFunction, strategy: DampingStrategy, ctx: KacanovContext) -> StepResult:
    """Damped Kacanov step with constant delta (delta = 1: classical scheme)."""
    if strategy.kind is not DampingKind.FIXED:
        raise ArgumentError(f"fixed_damping_step needs a FIXED strategy, got {strategy.kind.value}")
    energy_before = ctx.energy(u)
    u_next, rho = kacanov_update(u, strategy.delta, ctx)
    energy_after = ctx.energy(u_next)
    decrement = energy_before - energy_after
    step_norm = strategy.delta * ctx.norm(rho)
    C = strategy.decay_constant(ctx.constants)
    return StepResult(
        u_next=u_next,
        energy=energy_after,
        delta=strategy.delta,
        retries=0,
        decrement=decrement,
        step_norm=step_norm,
        decay_ok=_decay_holds(decrement, step_norm, C, strategy.energy_tolerance),
    )


def algorithm1_step(u: FeFunction, strategy: DampingStrategy, ctx: KacanovContext) -> StepResult:
    """
    Step size control via Taylor expansion.

    The loop shrinks delta right after forming the candidate, so the
    reported delta is the one that produced the accepted iterate.
    """
    if strategy.kind is not DampingKind.TAYLOR:
        raise ArgumentError(f"algorithm1_step needs a TAYLOR strategy, got {strategy.kind.value}")
    delta_min = strategy.resolve_delta_min(ctx.constants)
    C = strategy.decay_constant(ctx.constants)

    A, F = ctx.linearize(u)
    rho = ctx.solve(A, F)
    rho_norm = ctx.norm(rho)
    energy_before = ctx.energy(u)

    delta = taylor_step(u, rho, ctx, delta_min=delta_min, F=F)
    retries = 0
    while True:
        u_next = u.axpy(-delta, rho)
        used = delta
        delta = max(strategy.sigma * delta, delta_min)

        energy_after = ctx.energy(u_next)
        decrement = energy_before - energy_after
        step_norm = used * rho_norm
        if _decay_holds(decrement, step_norm, C, strategy.energy_tolerance):
            break
        retries += 1
        if retries > strategy.max_retries:
            raise RetryLimitError(f"Taylor step-size loop exceeded {strategy.max_retries} retries", retries)

    return StepResult(
        u_next=u_next,
        energy=energy_after,
        delta=used,
        retries=retries,
        decrement=decrement,
        step_norm=step_norm,
        decay_ok=True,
    )


def algorithm2_step(
    u: FeFunction,
    strategy: DampingStrategy,
    ctx: KacanovContext,
    state: PredictionCorrectionState,
) -> Tuple[StepResult, PredictionCorrectionState]:
    """
    Step size control via prediction and correction.

    Compares the energy decay of delta and delta' = sigma^p delta; the
    shrinking loop of the rejection branch is floored at delta_min, where a
    still failing step is accepted and reported as clamped. Energies closer
    than ``energy_tolerance`` count as equal and leave delta unchanged.
    """
    if strategy.kind is not DampingKind.PREDICTION_CORRECTION:
        raise ArgumentError(
            f"algorithm2_step needs a PREDICTION_CORRECTION strategy, got {strategy.kind.value}"
        )
    C = strategy.decay_constant(ctx.constants)
    delta_min = strategy.resolve_delta_min(ctx.constants)
    sigma = strategy.sigma
    tolerance = strategy.energy_tolerance

    A, F = ctx.linearize(u)
    rho = ctx.solve(A, F)
    rho_norm = ctx.norm(rho)
    energy_before = ctx.energy(u)

    delta, p = state.delta, state.p
    if p == 1 and delta < delta_min / sigma:
        p = -1

    trial_delta = sigma ** p * delta
    u_trial = u.axpy(-trial_delta, rho)
    energy_trial = ctx.energy(u_trial)
    decrement_trial = energy_before - energy_trial
    norm_trial = trial_delta * rho_norm

    retries = 0
    clamped = False
    if _decay_holds(decrement_trial, norm_trial, C, tolerance):
        u_base = u.axpy(-delta, rho)
        energy_base = ctx.energy(u_base)
        decrement_base = energy_before - energy_base
        norm_base = delta * rho_norm
        base_ok = _decay_holds(decrement_base, norm_base, C, tolerance)
        if not base_ok or energy_trial < energy_base - tolerance:
            delta = trial_delta
            u_next, energy_after, decrement, step_norm = u_trial, energy_trial, decrement_trial, norm_trial
        else:
            # energies within the slack are a tie: keep delta and p
            if energy_base < energy_trial - tolerance:
                p = -p
            u_next, energy_after, decrement, step_norm = u_base, energy_base, decrement_base, norm_base
    else:
        p = 1
        delta = trial_delta
        u_next, energy_after, decrement, step_norm = u_trial, energy_trial, decrement_trial, norm_trial
        while not _decay_holds(decrement, step_norm, C, tolerance):
            if delta <= delta_min:
                clamped = True
                logger.warning(
                    f"prediction-correction: decay test fails at delta_min={delta_min:.4g}; accepting clamped step"
                )
                break
            delta = max(sigma * delta, delta_min)
            u_next = u.axpy(-delta, rho)
            energy_after = ctx.energy(u_next)
            decrement = energy_before - energy_after
            step_norm = delta * rho_norm
            retries += 1
            if retries > strategy.max_retries:
                raise RetryLimitError(
                    f"prediction-correction loop exceeded {strategy.max_retries} shrink steps", retries
                )

    result = StepResult(
        u_next=u_next,
        energy=energy_after,
        delta=delta,
        retries=retries,
        decrement=decrement,
        step_norm=step_norm,
        decay_ok=_decay_holds(decrement, step_norm, C, tolerance),
        clamped=clamped,
    )
    return result, PredictionCorrectionState(delta=delta, p=p)


def error_ratios(errors: np.ndarray) -> np.ndarray:
    """Successive ratios e_{n+1} / e_n; undefined (nan) after an exact zero."""
    errors = np.asarray(errors, dtype=float)
    if errors.size < 2:
        return np.empty(0)
    previous = errors[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(previous > 0.0, errors[1:] / np.where(previous > 0.0, previous, 1.0), np.nan)


def trailing_ratio(errors: np.ndarray, window: int = NONCONVERGENCE_WINDOW) -> float:
    """Geometric mean of the last ``window`` finite, positive error ratios."""
    ratios = error_ratios(errors)
    ratios = ratios[np.isfinite(ratios) & (ratios > 0.0)]
    if ratios.size == 0:
        return math.nan
    tail = ratios[-window:]
    return float(np.exp(np.mean(np.log(tail))))


def run_iteration(strategy: DampingStrategy, ctx: KacanovContext, stop: StopCriteria) -> IterationTrace:
    """Iterate from u^0 = 0 until the error to u_ref drops below tol_error or max_iters steps."""
    strategy.validate_for(ctx.constants)
    delta_min = strategy.resolve_delta_min(ctx.constants)
    trace = IterationTrace(strategy=strategy.label, delta_min=delta_min)

    def error_of(v: FeFunction) -> float:
        return ctx.distance(v, stop.u_ref) if stop.u_ref is not None else math.nan

    u = ctx.mesh.zero_function()
    error = error_of(u)
    trace.records.append(StepRecord(0, math.nan, ctx.energy(u), error, math.nan, True, 0))

    state = PredictionCorrectionState.initial(strategy)
    for n in range(1, stop.max_iters + 1):
        if error < stop.tol_error:
            break
        if strategy.kind is DampingKind.TAYLOR:
            step = algorithm1_step(u, strategy, ctx)
        elif strategy.kind is DampingKind.PREDICTION_CORRECTION:
            step, state = algorithm2_step(u, strategy, ctx, state)
        else:
            step = fixed_damping_step(u, strategy, ctx)

        u = step.u_next
        error = error_of(u)
        trace.clamped_steps += int(step.clamped)
        trace.records.append(StepRecord(
            n=n,
            delta=step.delta,
            energy=step.energy,
            error=error,
            decrement=step.decrement,
            decay_ok=step.decay_ok,
            retries=step.retries,
            step_norm=step.step_norm,
        ))
        logger.debug(f"[{trace.strategy}] n={n} delta={step.delta:.4g} error={error:.3e} retries={step.retries}")

    trace.converged = bool(error < stop.tol_error)
    ratio = trailing_ratio(trace.errors)
    trace.nonconvergent = bool(not trace.converged and math.isfinite(ratio) and ratio >= 1.0)
    if trace.nonconvergent:
        logger.warning(f"[{trace.strategy}] flagged non-convergent (trailing error ratio {ratio:.3f})")
    trace.final_iterate = u
    final_residual = fem.residual(ctx.mesh, ctx.model, u, ctx.load, ctx.workers)
    trace.final_dual_residual = fem.dual_norm(ctx.mesh, final_residual)
    return trace


def contraction_estimate(constants: AnalysisConstants, delta: float) -> float:
    """q(delta) = 1 - 2 delta nu^2 (alpha - delta L_H / 2) / (beta^2 L_H)."""
    upper = constants.delta_max_admissible
    if not 0.0 < delta < upper:
        raise ArgumentError(f"delta must lie in (0, {upper:.6g}), got {delta}")
    c = constants
    return 1.0 - 2.0 * delta * c.nu ** 2 * (c.alpha - 0.5 * delta * c.lipschitz) / (c.beta ** 2 * c.lipschitz)


def energy_decay_certificate(
    trace: IterationTrace,
    constants: AnalysisConstants,
    theta: float = 0.1,
    slack: float = 1e-12,
) -> bool:
    """Every accepted step decays H by theta min{alpha, L_H} ||step||^2 and uses delta >= delta_min."""
    C = theta * constants.decay_constant_base
    for record in trace.records[1:]:
        if record.decrement < C * record.step_norm ** 2 - slack:
            return False
        if record.delta < trace.delta_min * (1.0 - 1e-14):
            return False
    return True


@dataclass(frozen=True)
class ZarantonelloResult:
    solution: FeFunction
    steps: int
    dual_residual: float
    delta: float
    start_steps: int = 0


def zarantonello_damping(model: DiffusionModel) -> float:
    """2 / (m_mu + M_mu): optimal for a linearisation spectrum inside [m_mu, M_mu]."""
    return 2.0 / (model.m_mu + model.M_mu)


def conservative_zarantonello_damping(constants: AnalysisConstants) -> float:
    """nu / L_H^2, the textbook choice under strong monotonicity and Lipschitz bounds."""
    return constants.nu / constants.lipschitz ** 2


def zarantonello_iterate(
    mesh: TriangleMesh,
    model: DiffusionModel,
    b: DualVector,
    n_steps: int = 1000,
    delta_z: Optional[float] = None,
    tolerance: float = 1e-13,
    workers: int = 1,
    initial: Optional[FeFunction] = None,
) -> ZarantonelloResult:
    """
    u <- u - delta_z r with A_Lap r = F(u), from ``initial`` (default u = 0),
    until n_steps or ||F(u)||_{X*} < tolerance.
    """
    if n_steps < 0:
        raise ArgumentError(f"n_steps must be non-negative, got {n_steps}")
    delta_z = zarantonello_damping(model) if delta_z is None else delta_z
    if not 0.0 < delta_z < 2.0 / model.M_mu:
        raise ArgumentError(f"Zarantonello damping must lie in (0, {2.0 / model.M_mu:.6g}), got {delta_z}")

    if initial is None:
        u = mesh.zero_function()
    else:
        require_same_space(initial, mesh.zero_function())
        u = initial.copy()
    if n_steps == 0:
        return ZarantonelloResult(u, 0, math.nan, delta_z)

    lift = factorized(sp.csc_matrix(fem.laplace_stiffness(mesh)))

    def dual_residual(v: FeFunction) -> Tuple[np.ndarray, float]:
        F = fem.residual(mesh, model, v, b, workers).free_values
        r = lift(F)
        return r, float(np.sqrt(max(np.dot(r, F), 0.0)))

    steps = 0
    r, dual = dual_residual(u)
    while steps < n_steps and dual >= tolerance:
        u = FeFunction(u.free_values - delta_z * r, mesh.mesh_id)
        steps += 1
        r, dual = dual_residual(u)

    logger.info(f"Zarantonello: {steps} steps, dual residual {dual:.3e} (delta_z={delta_z:.4g})")
    return ZarantonelloResult(u, steps, dual, delta_z)


def zarantonello_reference(
    mesh: TriangleMesh,
    model: DiffusionModel,
    b: DualVector,
    n_steps: int = 1000,
    delta_z: Optional[float] = None,
) -> FeFunction:
    """Discrete reference solution from the Zarantonello iteration."""
    return zarantonello_iterate(mesh, model, b, n_steps, delta_z).solution


def descent_reference(
    mesh: TriangleMesh,
    model: DiffusionModel,
    b: DualVector,
    strategy: Optional[DampingStrategy] = None,
    max_descent_steps: int = 300,
    switch_tolerance: float = 1e-9,
    n_steps: int = 1000,
    delta_z: Optional[float] = None,
    tolerance: float = 1e-13,
    solve_config: Optional[SolveConfig] = None,
    workers: int = 1,
) -> ZarantonelloResult:
    """
    Reference for energies with several critical points.

    Runs the Taylor-controlled iteration from u = 0 until ||F(u)||_{X*} drops
    below ``switch_tolerance`` and polishes the result with the Zarantonello
    iteration started there. The reference is then the critical point the
    energy-descent iterates approach, not whichever one the Zarantonello
    iteration from zero happens to reach.
    """
    strategy = strategy or DampingStrategy.taylor()
    if strategy.kind is not DampingKind.TAYLOR:
        raise ArgumentError(f"descent_reference needs a TAYLOR strategy, got {strategy.kind.value}")
    if max_descent_steps < 0:
        raise ArgumentError(f"max_descent_steps must be non-negative, got {max_descent_steps}")
    ctx = KacanovContext(
        mesh=mesh,
        model=model,
        load=b,
        constants=analysis_constants(model),
        solve_config=solve_config or SolveConfig(),
        workers=workers,
    )

    u = mesh.zero_function()
    taken = 0
    while taken < max_descent_steps:
        dual = fem.dual_norm(mesh, fem.residual(mesh, model, u, b, workers))
        if dual < switch_tolerance:
            break
        u = algorithm1_step(u, strategy, ctx).u_next
        taken += 1
    logger.info(f"descent start: {taken} Taylor steps before the Zarantonello polish")

    polished = zarantonello_iterate(mesh, model, b, n_steps, delta_z, tolerance, workers, initial=u)
    return replace(polished, start_steps=taken)
