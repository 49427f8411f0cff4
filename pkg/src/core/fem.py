"""
P1 finite element forms for the quasilinear diffusion problem.

All |grad u|-dependent terms use the centroid rule, which is exact because
P1 gradients are constant per triangle. The manufactured load uses a
six-point degree-4 rule. Per-triangle work may be split over threads; the
chunks are concatenated in triangle order and reduced once, so results do
not depend on the number of workers.
"""

import threading
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from ..models.diffusion import DiffusionModel
from ..utils.errors import ArgumentError
from .linsolve import SolveConfig, solve_spd
from .mesh import TriangleMesh
from .spaces import DualVector, FeFunction, require_same_space

# Six-point degree-4 rule on the reference triangle (barycentric points, weights sum to 1)
_A1, _B1, _W1 = 0.445948490915965, 0.108103018168070, 0.223381589678011
_A2, _B2, _W2 = 0.091576213509771, 0.816847572980459, 0.109951743655322
QUAD_POINTS = np.array([
    [_A1, _A1, _B1], [_A1, _B1, _A1], [_B1, _A1, _A1],
    [_A2, _A2, _B2], [_A2, _B2, _A2], [_B2, _A2, _A2],
])
QUAD_WEIGHTS = np.array([_W1, _W1, _W1, _W2, _W2, _W2])

CHUNK_SIZE = 16384

SparseSpd = sp.csr_matrix


@dataclass(frozen=True)
class ManufacturedSolution:
    """Smooth exact solution u* with its analytic gradient."""
    name: str
    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


def sine_product() -> ManufacturedSolution:
    """u*(x, y) = sin(pi x) sin(pi y), zero on the boundary of the L-shape."""
    pi = np.pi
    return ManufacturedSolution(
        name="sine_product",
        value=lambda x, y: np.sin(pi * x) * np.sin(pi * y),
        gradient=lambda x, y: (pi * np.cos(pi * x) * np.sin(pi * y),
                               pi * np.sin(pi * x) * np.cos(pi * y)),
    )


def per_triangle(n_triangles: int, func: Callable[[int, int], np.ndarray], workers: int = 1) -> np.ndarray:
    """Evaluate func on consecutive triangle ranges and concatenate in order."""
    bounds = [(start, min(start + CHUNK_SIZE, n_triangles)) for start in range(0, n_triangles, CHUNK_SIZE)]
    if not bounds:
        return func(0, 0)
    if workers <= 1 or len(bounds) == 1:
        return np.concatenate([func(start, stop) for start, stop in bounds])
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda bound: func(*bound), bounds))
    return np.concatenate(parts)


class _StiffnessPattern:
    """Local Laplace matrices and free-DOF index arrays of one mesh."""

    def __init__(self, mesh: TriangleMesh):
        G = mesh.basis_gradients
        self.local = mesh.areas[:, None, None] * np.einsum("tid,tjd->tij", G, G)
        dofs = mesh.free_dof_index[mesh.triangles]
        rows = np.broadcast_to(dofs[:, :, None], self.local.shape).ravel()
        cols = np.broadcast_to(dofs[:, None, :], self.local.shape).ravel()
        self.mask = (rows >= 0) & (cols >= 0)
        self.rows = rows[self.mask]
        self.cols = cols[self.mask]
        self.shape = (mesh.n_free, mesh.n_free)


_patterns: "weakref.WeakKeyDictionary[TriangleMesh, _StiffnessPattern]" = weakref.WeakKeyDictionary()
_laplacians: "weakref.WeakKeyDictionary[TriangleMesh, sp.csr_matrix]" = weakref.WeakKeyDictionary()
_cache_lock = threading.Lock()


def _pattern(mesh: TriangleMesh) -> _StiffnessPattern:
    with _cache_lock:
        pattern = _patterns.get(mesh)
        if pattern is None:
            pattern = _StiffnessPattern(mesh)
            _patterns[mesh] = pattern
        return pattern


def _check_binding(mesh: TriangleMesh, *objects) -> None:
    for obj in objects:
        if obj.mesh_id != mesh.mesh_id or len(obj) != mesh.n_free:
            raise ArgumentError(f"object bound to {obj.mesh_id} (len {len(obj)}) used on {mesh.mesh_id}")


def element_gradients(mesh: TriangleMesh, u: FeFunction) -> np.ndarray:
    """Constant gradient of u on every triangle, shape (nt, 2)."""
    _check_binding(mesh, u)
    nodal = mesh.extend(u)
    return np.einsum("tkd,tk->td", mesh.basis_gradients, nodal[mesh.triangles])


def element_gradient(mesh: TriangleMesh, triangle_id: int, u: FeFunction) -> np.ndarray:
    """Gradient of u on a single triangle."""
    if not 0 <= triangle_id < mesh.n_triangles:
        raise ArgumentError(f"triangle id {triangle_id} out of range [0, {mesh.n_triangles})")
    _check_binding(mesh, u)
    nodal = mesh.extend(u)
    return mesh.basis_gradients[triangle_id].T @ nodal[mesh.triangles[triangle_id]]


def squared_gradients(mesh: TriangleMesh, u: FeFunction) -> np.ndarray:
    g = element_gradients(mesh, u)
    return g[:, 0] * g[:, 0] + g[:, 1] * g[:, 1]


def assemble_weighted(mesh: TriangleMesh, weights: np.ndarray) -> sp.csr_matrix:
    """sum_T w_T area(T) grad(phi_i) . grad(phi_j) over free DOFs."""
    pattern = _pattern(mesh)
    data = (weights[:, None, None] * pattern.local).ravel()[pattern.mask]
    return sp.coo_matrix((data, (pattern.rows, pattern.cols)), shape=pattern.shape).tocsr()


def assemble_stiffness(mesh: TriangleMesh, model: DiffusionModel, u: FeFunction, workers: int = 1) -> sp.csr_matrix:
    """Matrix of a(u; v, w) = int mu(|grad u|^2) grad v . grad w."""
    s = squared_gradients(mesh, u)
    weights = per_triangle(mesh.n_triangles, lambda i, j: model.evaluate_mu(s[i:j]), workers)
    return assemble_weighted(mesh, weights)


def laplace_stiffness(mesh: TriangleMesh) -> sp.csr_matrix:
    """Unweighted stiffness matrix, the Gram matrix of the X inner product."""
    with _cache_lock:
        cached = _laplacians.get(mesh)
    if cached is not None:
        return cached
    matrix = assemble_weighted(mesh, np.ones(mesh.n_triangles))
    with _cache_lock:
        _laplacians[mesh] = matrix
    return matrix


def _assemble_dual(mesh: TriangleMesh, local: np.ndarray) -> DualVector:
    """Sum per-triangle contributions (nt, 3) into free DOFs."""
    dofs = mesh.free_dof_index[mesh.triangles].ravel()
    values = local.ravel()
    mask = dofs >= 0
    vector = np.bincount(dofs[mask], weights=values[mask], minlength=mesh.n_free)
    return DualVector(vector, mesh.mesh_id)


def _quadrature_points(mesh: TriangleMesh) -> np.ndarray:
    """Physical quadrature points, shape (nq, nt, 2)."""
    corners = mesh.vertices[mesh.triangles]
    return np.einsum("qk,tkd->qtd", QUAD_POINTS, corners)


def assemble_load(
    mesh: TriangleMesh,
    manufactured: ManufacturedSolution,
    model: DiffusionModel,
    workers: int = 1,
) -> DualVector:
    """b(v) = a(u*; u*, v), integrated with the degree-4 rule."""
    points = _quadrature_points(mesh)

    def flux(start: int, stop: int) -> np.ndarray:
        acc = np.zeros((stop - start, 2))
        for q, weight in enumerate(QUAD_WEIGHTS):
            gx, gy = manufactured.gradient(points[q, start:stop, 0], points[q, start:stop, 1])
            mu = model.evaluate_mu(gx * gx + gy * gy)
            acc[:, 0] += weight * mu * gx
            acc[:, 1] += weight * mu * gy
        return acc

    integrated = mesh.areas[:, None] * per_triangle(mesh.n_triangles, flux, workers)
    local = np.einsum("tkd,td->tk", mesh.basis_gradients, integrated)
    return _assemble_dual(mesh, local)


def assemble_source_load(mesh: TriangleMesh, source: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> DualVector:
    """int f phi_i dx with the degree-4 rule; oracle for the linear case."""
    points = _quadrature_points(mesh)
    values = source(points[..., 0], points[..., 1])                      # (nq, nt)
    local = np.einsum("q,qt,qk->tk", QUAD_WEIGHTS, values, QUAD_POINTS)
    return _assemble_dual(mesh, mesh.areas[:, None] * local)


def energy(mesh: TriangleMesh, model: DiffusionModel, u: FeFunction, b: DualVector, workers: int = 1) -> float:
    """H(u) = int psi(|grad u|^2) - <b, u>."""
    _check_binding(mesh, b)
    s = squared_gradients(mesh, u)
    areas = mesh.areas
    contributions = per_triangle(mesh.n_triangles, lambda i, j: areas[i:j] * model.evaluate_psi(s[i:j]), workers)
    return float(np.sum(contributions) - b.apply(u))


def residual(mesh: TriangleMesh, model: DiffusionModel, u: FeFunction, b: DualVector, workers: int = 1) -> DualVector:
    """F(u) = A(u) u - b."""
    _check_binding(mesh, b)
    A = assemble_stiffness(mesh, model, u, workers)
    return DualVector(A @ u.free_values - b.free_values, mesh.mesh_id)


def fprime_form(
    mesh: TriangleMesh,
    model: DiffusionModel,
    u: FeFunction,
    v: FeFunction,
    w: FeFunction,
) -> float:
    """
    <F'(u) v, w> = int mu(|grad u|^2) grad v . grad w
                   + 2 mu'(|grad u|^2) (grad u . grad v)(grad u . grad w).
    """
    gu = element_gradients(mesh, u)
    gv = element_gradients(mesh, v)
    gw = element_gradients(mesh, w)
    s = gu[:, 0] ** 2 + gu[:, 1] ** 2
    mu = model.evaluate_mu(s)
    mu_prime = model.evaluate_mu_prime(s)
    uv = gu[:, 0] * gv[:, 0] + gu[:, 1] * gv[:, 1]
    uw = gu[:, 0] * gw[:, 0] + gu[:, 1] * gw[:, 1]
    vw = gv[:, 0] * gw[:, 0] + gv[:, 1] * gw[:, 1]
    return float(np.sum(mesh.areas * (mu * vw + 2.0 * mu_prime * uv * uw)))


def h1_seminorm(mesh: TriangleMesh, u: FeFunction) -> float:
    """||grad u||_{L2}."""
    return float(np.sqrt(np.sum(mesh.areas * squared_gradients(mesh, u))))


def dual_norm(mesh: TriangleMesh, r: DualVector, cfg: Optional[SolveConfig] = None) -> float:
    """||r||_{X*} through the Riesz lift A_Lap z = r."""
    _check_binding(mesh, r)
    if not np.any(r.free_values):
        return 0.0
    z = solve_spd(laplace_stiffness(mesh), r, cfg)
    return float(np.sqrt(max(np.dot(z.free_values, r.free_values), 0.0)))


def pairing(F: DualVector, v: FeFunction) -> float:
    """<F, v>."""
    require_same_space(F, v)
    return F.apply(v)
