"""
Triangulations of the L-shaped domain (-1,1)^2 minus [0,1]x[-1,0].

The coarse mesh splits the three unit squares into two triangles each;
uniform red refinement then replaces every triangle by four similar ones
through its edge midpoints. Boundary edges are carried through the
refinement, so boundary vertices are known by construction.
"""

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Union

import numpy as np

from ..utils.errors import ArgumentError, ConfigurationError
from ..utils.logger import get_logger
from .spaces import FeFunction

logger = get_logger(__name__)

MAX_LEVEL = 12

_LSHAPE_VERTICES = np.array([
    [-1.0, -1.0], [0.0, -1.0], [-1.0, 0.0], [0.0, 0.0],
    [1.0, 0.0], [-1.0, 1.0], [0.0, 1.0], [1.0, 1.0],
])
_LSHAPE_TRIANGLES = np.array([
    [0, 1, 3], [0, 3, 2],   # [-1,0] x [-1,0]
    [2, 3, 6], [2, 6, 5],   # [-1,0] x [0,1]
    [3, 4, 7], [3, 7, 6],   # [0,1] x [0,1]
], dtype=np.int64)
_LSHAPE_BOUNDARY = np.array([
    [0, 1], [1, 3], [3, 4], [4, 7], [7, 6], [6, 5], [5, 2], [2, 0],
], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Immutable P1 triangulation with Dirichlet boundary markers."""
    vertices: np.ndarray        # (nv, 2)
    triangles: np.ndarray       # (nt, 3), counterclockwise
    boundary_edges: np.ndarray  # (nb, 2)
    refinement_level: int = 0

    def __post_init__(self):
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ArgumentError("vertices must have shape (nv, 2)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ArgumentError("triangles must have shape (nt, 3)")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def mesh_id(self) -> str:
        return f"lshape-L{self.refinement_level}-nv{self.n_vertices}"

    @cached_property
    def boundary_vertex_flags(self) -> np.ndarray:
        flags = np.zeros(self.n_vertices, dtype=bool)
        flags[self.boundary_edges.ravel()] = True
        return flags

    @cached_property
    def interior_vertices(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_vertex_flags)

    @cached_property
    def free_dof_index(self) -> np.ndarray:
        """Vertex -> free DOF index, -1 on the boundary."""
        index = np.full(self.n_vertices, -1, dtype=np.int64)
        index[self.interior_vertices] = np.arange(self.interior_vertices.size)
        return index

    @property
    def n_free(self) -> int:
        return int(self.interior_vertices.size)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Gradients of the three barycentric functions per triangle, shape (nt, 3, 2)."""
        p = self.vertices[self.triangles]
        x, y = p[..., 0], p[..., 1]
        twice_area = 2.0 * self.signed_areas
        grads = np.empty((self.n_triangles, 3, 2))
        grads[:, 0, 0] = y[:, 1] - y[:, 2]
        grads[:, 0, 1] = x[:, 2] - x[:, 1]
        grads[:, 1, 0] = y[:, 2] - y[:, 0]
        grads[:, 1, 1] = x[:, 0] - x[:, 2]
        grads[:, 2, 0] = y[:, 0] - y[:, 1]
        grads[:, 2, 1] = x[:, 1] - x[:, 0]
        return grads / twice_area[:, None, None]

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique edges, rows sorted (i < j), lexicographic order."""
        return _unique_edges(self.triangles)[0]

    def edge_triangle_counts(self) -> np.ndarray:
        """Number of triangles sharing each entry of ``edges``."""
        _, inverse = _unique_edges(self.triangles)
        return np.bincount(inverse, minlength=self.edges.shape[0])

    def extend(self, u: FeFunction) -> np.ndarray:
        """Nodal values on all vertices, zeros on the boundary."""
        if len(u) != self.n_free:
            raise ArgumentError(f"function has {len(u)} free values, mesh has {self.n_free}")
        full = np.zeros(self.n_vertices)
        full[self.interior_vertices] = u.free_values
        return full

    def zero_function(self) -> FeFunction:
        return FeFunction(np.zeros(self.n_free), self.mesh_id)


def _unique_edges(triangles: np.ndarray):
    local = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    keys = np.sort(local, axis=1)
    unique, inverse = np.unique(keys, axis=0, return_inverse=True)
    return unique, inverse.reshape(-1)


def refine(mesh: TriangleMesh) -> TriangleMesh:
    """One round of red refinement."""
    nv = mesh.n_vertices
    nt = mesh.n_triangles
    edges, inverse = _unique_edges(mesh.triangles)

    # edge ids of (01, 12, 20) per triangle
    local_edges = inverse.reshape(3, nt).T
    midpoints = nv + local_edges
    new_vertices = np.vstack([
        mesh.vertices,
        0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]]),
    ])

    a, b, c = mesh.triangles.T
    m_ab, m_bc, m_ca = midpoints.T
    children = np.stack([
        np.stack([a, m_ab, m_ca], axis=1),
        np.stack([m_ab, b, m_bc], axis=1),
        np.stack([m_ca, m_bc, c], axis=1),
        np.stack([m_ab, m_bc, m_ca], axis=1),
    ], axis=1).reshape(-1, 3)

    # split every boundary edge at its midpoint
    codes = edges[:, 0] * nv + edges[:, 1]
    bkeys = np.sort(mesh.boundary_edges, axis=1)
    bcodes = bkeys[:, 0] * nv + bkeys[:, 1]
    positions = np.searchsorted(codes, bcodes)
    if np.any(positions >= codes.size) or np.any(codes[np.minimum(positions, codes.size - 1)] != bcodes):
        raise ArgumentError("boundary edge is not an edge of the triangulation")
    bmid = nv + positions
    new_boundary = np.concatenate([
        np.stack([mesh.boundary_edges[:, 0], bmid], axis=1),
        np.stack([bmid, mesh.boundary_edges[:, 1]], axis=1),
    ])

    return TriangleMesh(
        vertices=new_vertices,
        triangles=children,
        boundary_edges=new_boundary,
        refinement_level=mesh.refinement_level + 1,
    )


def build_lshape(level: int) -> TriangleMesh:
    """L-shaped domain mesh after ``level`` uniform red refinements (6 * 4**level triangles)."""
    if isinstance(level, bool) or not isinstance(level, (int, np.integer)):
        raise ConfigurationError(f"refinement level must be an integer, got {level!r}")
    if level < 0 or level > MAX_LEVEL:
        raise ConfigurationError(f"refinement level must lie in [0, {MAX_LEVEL}], got {level}")

    mesh = TriangleMesh(
        vertices=_LSHAPE_VERTICES.copy(),
        triangles=_LSHAPE_TRIANGLES.copy(),
        boundary_edges=_LSHAPE_BOUNDARY.copy(),
        refinement_level=0,
    )
    for _ in range(int(level)):
        mesh = refine(mesh)
    logger.debug(f"built {mesh.mesh_id}: {mesh.n_triangles} triangles, {mesh.n_free} free dofs")
    return mesh


def boundary_project(mesh: TriangleMesh, nodal_values) -> FeFunction:
    """Impose the zero Dirichlet trace on a full nodal vector."""
    values = np.asarray(nodal_values, dtype=float)
    if values.shape != (mesh.n_vertices,):
        raise ArgumentError(
            f"expected {mesh.n_vertices} nodal values, got shape {values.shape}"
        )
    return FeFunction(values[mesh.interior_vertices].copy(), mesh.mesh_id)


def interpolate(mesh: TriangleMesh, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> FeFunction:
    """Nodal interpolant of f(x, y) with zero boundary values."""
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    return boundary_project(mesh, f(x, y))


def write_mesh(mesh: TriangleMesh, path: Union[str, Path]) -> Path:
    """
    Plain-text export: ``nv nt`` header, ``x y flag`` per vertex,
    then ``i j k`` per triangle (0-based).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    flags = mesh.boundary_vertex_flags.astype(int)
    with path.open("w") as handle:
        handle.write(f"{mesh.n_vertices} {mesh.n_triangles}\n")
        for (x, y), flag in zip(mesh.vertices, flags):
            handle.write(f"{x:.17g} {y:.17g} {flag}\n")
        for i, j, k in mesh.triangles:
            handle.write(f"{i} {j} {k}\n")
    return path
