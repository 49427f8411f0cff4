"""
Coefficient containers for the P1 space with homogeneous Dirichlet trace.
"""

from dataclasses import dataclass

import numpy as np

from ..utils.errors import ArgumentError


@dataclass(frozen=True, eq=False)
class FeFunction:
    """P1 function given by its values on the free (interior) vertices."""
    free_values: np.ndarray
    mesh_id: str

    def __post_init__(self):
        values = np.asarray(self.free_values, dtype=float)
        if values.ndim != 1:
            raise ArgumentError("free_values must be a 1-D array")
        object.__setattr__(self, "free_values", values)

    def __len__(self) -> int:
        return self.free_values.shape[0]

    def axpy(self, scale: float, other: "FeFunction") -> "FeFunction":
        """Return self + scale * other."""
        require_same_space(self, other)
        return FeFunction(self.free_values + scale * other.free_values, self.mesh_id)

    def copy(self) -> "FeFunction":
        return FeFunction(self.free_values.copy(), self.mesh_id)


@dataclass(frozen=True, eq=False)
class DualVector:
    """Functional on the P1 space, stored by its action on the nodal basis."""
    free_values: np.ndarray
    mesh_id: str

    def __post_init__(self):
        values = np.asarray(self.free_values, dtype=float)
        if values.ndim != 1:
            raise ArgumentError("free_values must be a 1-D array")
        object.__setattr__(self, "free_values", values)

    def __len__(self) -> int:
        return self.free_values.shape[0]

    def apply(self, v: FeFunction) -> float:
        """<self, v>."""
        require_same_space(self, v)
        return float(np.dot(self.free_values, v.free_values))


def require_same_space(first, second) -> None:
    if first.mesh_id != second.mesh_id:
        raise ArgumentError(f"objects bound to different meshes: {first.mesh_id} vs {second.mesh_id}")
    if len(first) != len(second):
        raise ArgumentError(f"length mismatch: {len(first)} vs {len(second)}")
