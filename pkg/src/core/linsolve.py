"""
Symmetric positive definite solves for the linearised Kacanov systems
A(u) rho = F(u) and the Laplacian systems of the Riesz lift.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, spsolve

from ..utils.errors import ArgumentError, ConfigurationError, IndefiniteMatrixError, SolverConvergenceError
from ..utils.logger import get_logger
from .spaces import DualVector, FeFunction

logger = get_logger(__name__)


class SolverMethod(Enum):
    """Linear solver backend."""
    DIRECT = "direct"
    CONJUGATE_GRADIENT = "cg"


@dataclass(frozen=True)
class SolveConfig:
    """Linear solver settings."""
    method: SolverMethod = SolverMethod.CONJUGATE_GRADIENT
    rel_tolerance: float = 1e-12
    max_iterations: Optional[int] = None  # None -> 10 * ndof
    verify_residual: bool = False

    def __post_init__(self):
        if isinstance(self.method, str):
            try:
                object.__setattr__(self, "method", SolverMethod(self.method))
            except ValueError:
                raise ConfigurationError(f"unknown solver method '{self.method}'") from None
        if not 0.0 < self.rel_tolerance < 1.0:
            raise ConfigurationError(f"rel_tolerance must lie in (0, 1), got {self.rel_tolerance}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ConfigurationError(f"max_iterations must be >= 1, got {self.max_iterations}")

    def iteration_cap(self, ndof: int) -> int:
        return self.max_iterations if self.max_iterations is not None else max(10 * ndof, 1)


def jacobi_preconditioner(A: sp.spmatrix) -> LinearOperator:
    """Diagonal scaling; a non-positive diagonal entry already rules out SPD."""
    diagonal = A.diagonal()
    if np.any(diagonal <= 0.0):
        raise IndefiniteMatrixError("matrix has a non-positive diagonal entry")
    inverse = 1.0 / diagonal
    return LinearOperator(A.shape, matvec=lambda x: inverse * x, dtype=float)


def solve_spd(A: sp.spmatrix, rhs: DualVector, cfg: Optional[SolveConfig] = None) -> FeFunction:
    """
    Solve A x = rhs for symmetric positive definite A.

    Raises:
        SolverConvergenceError: CG missed the tolerance within the iteration cap
        IndefiniteMatrixError: non-positive diagonal or non-positive curvature <x, A x>
    """
    cfg = cfg or SolveConfig()
    b = rhs.free_values
    n = b.shape[0]
    if A.shape != (n, n):
        raise ArgumentError(f"matrix shape {A.shape} does not match right-hand side length {n}")

    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return FeFunction(np.zeros(n), rhs.mesh_id)

    if cfg.method is SolverMethod.DIRECT:
        x = np.asarray(spsolve(sp.csc_matrix(A), b), dtype=float)
    else:
        cap = cfg.iteration_cap(n)
        x, info = cg(
            A, b,
            rtol=cfg.rel_tolerance,
            atol=0.0,
            maxiter=cap,
            M=jacobi_preconditioner(A),
        )
        if info != 0:
            residual = float(np.linalg.norm(A @ x - b))
            raise SolverConvergenceError(
                f"conjugate gradients stopped after {cap} iterations with relative residual "
                f"{residual / b_norm:.3e} (target {cfg.rel_tolerance:.1e})",
                residual=residual,
                iterations=cap,
            )

    # for SPD A and b != 0 the solution has positive curvature <x, b> = <x, A x>
    curvature = float(np.dot(x, b))
    if not curvature > 0.0:
        raise IndefiniteMatrixError(f"non-positive curvature <x, Ax> = {curvature:.3e}")

    if cfg.verify_residual:
        verify_solution(A, x, b, cfg)

    return FeFunction(x, rhs.mesh_id)


def verify_solution(A: sp.spmatrix, x: np.ndarray, b: np.ndarray, cfg: SolveConfig) -> float:
    """Check ||A x - b|| against the configured bound; returns the relative residual."""
    relative = float(np.linalg.norm(A @ x - b) / np.linalg.norm(b))
    # CG tracks its residual recursively; allow the usual drift against the true residual
    bound = 10.0 * cfg.rel_tolerance if cfg.method is SolverMethod.CONJUGATE_GRADIENT else 1e-10
    if relative > bound:
        raise SolverConvergenceError(
            f"solution residual {relative:.3e} exceeds bound {bound:.1e}",
            residual=relative,
        )
    logger.debug(f"verified solve: relative residual {relative:.3e}")
    return relative
