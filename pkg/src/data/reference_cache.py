"""
On-disk cache of reference solutions.

A reference at level 7 costs a thousand Laplacian solves, so it is stored
once per (model, level, load, steps, damping, start) as a .npy array next
to a JSON metadata file. The start is "zero" for the plain Zarantonello
iteration or "descent-..." when it is seeded by Taylor-controlled steps.
"""

import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..core.damping import DampingStrategy
from ..core.kacanov import ZarantonelloResult, descent_reference, zarantonello_iterate
from ..core.linsolve import SolveConfig
from ..core.mesh import TriangleMesh
from ..core.spaces import DualVector, FeFunction
from ..models.diffusion import DiffusionModel
from ..utils.logger import get_logger

logger = get_logger(__name__)

CACHE_ENV_VAR = "KACANOV_CACHE_DIR"
DEFAULT_CACHE_DIR = "data/reference"
ZERO_START = "zero"


@dataclass(frozen=True)
class ReferenceMetadata:
    model: str
    mesh_id: str
    load: str
    steps: int
    max_steps: int
    delta: float
    dual_residual: float
    start: str = ZERO_START
    start_steps: int = 0

    def key(self) -> str:
        key = f"{self.model}_{self.mesh_id}_{self.load}_z{self.max_steps}_d{self.delta:.12e}"
        return key if self.start == ZERO_START else f"{key}_{self.start}"


class ReferenceCache:
    """Stores and retrieves reference solutions under one directory."""

    def __init__(self, cache_dir: Optional[Union[str, Path]] = None, enabled: bool = True):
        if cache_dir is None:
            cache_dir = os.getenv(CACHE_ENV_VAR, DEFAULT_CACHE_DIR)
        self.cache_dir = Path(cache_dir)
        self.enabled = enabled
        self.hits = 0
        self.misses = 0

    def _paths(self, key: str):
        return self.cache_dir / f"{key}.npy", self.cache_dir / f"{key}.json"

    def load(self, lookup: ReferenceMetadata, mesh: TriangleMesh) -> Optional[ZarantonelloResult]:
        if not self.enabled:
            return None
        values_path, meta_path = self._paths(lookup.key())
        if not (values_path.exists() and meta_path.exists()):
            return None
        try:
            with open(meta_path, "r") as f:
                meta = json.load(f)
            values = np.load(values_path)
        except (OSError, ValueError) as e:
            logger.warning(f"ignoring unreadable cache entry {values_path.name}: {e}")
            return None
        if meta.get("mesh_id") != mesh.mesh_id or values.shape != (mesh.n_free,):
            logger.warning(f"ignoring cache entry {values_path.name}: mesh mismatch")
            return None
        return ZarantonelloResult(
            solution=FeFunction(values, mesh.mesh_id),
            steps=int(meta["steps"]),
            dual_residual=float(meta["dual_residual"]),
            delta=float(meta["delta"]),
            start_steps=int(meta.get("start_steps", 0)),
        )

    def store(self, meta: ReferenceMetadata, solution: FeFunction) -> Path:
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        values_path, meta_path = self._paths(meta.key())
        np.save(values_path, solution.free_values)
        with open(meta_path, "w") as f:
            json.dump(asdict(meta), f, indent=2)
        return values_path

    def reference(
        self,
        mesh: TriangleMesh,
        model: DiffusionModel,
        b: DualVector,
        load_name: str,
        n_steps: int = 1000,
        delta_z: Optional[float] = None,
        workers: int = 1,
        descent: Optional[DampingStrategy] = None,
        solve_config: Optional[SolveConfig] = None,
    ) -> ZarantonelloResult:
        """
        Cached reference; computed and stored on a miss.

        With ``descent`` the Zarantonello iteration starts from the limit of
        that Taylor strategy instead of from zero.
        """
        start = ZERO_START if descent is None else f"descent-s{descent.sigma:g}-t{descent.theta:g}"
        delta = delta_z if delta_z is not None else 2.0 / (model.m_mu + model.M_mu)
        lookup = ReferenceMetadata(
            model=model.name,
            mesh_id=mesh.mesh_id,
            load=load_name,
            steps=0,
            max_steps=n_steps,
            delta=delta,
            dual_residual=float("nan"),
            start=start,
        )
        cached = self.load(lookup, mesh)
        if cached is not None:
            self.hits += 1
            logger.info(f"reference for {model.name} on {mesh.mesh_id} ({start} start) loaded from cache")
            return cached

        self.misses += 1
        if descent is None:
            result = zarantonello_iterate(mesh, model, b, n_steps=n_steps, delta_z=delta, workers=workers)
        else:
            result = descent_reference(
                mesh, model, b, strategy=descent, n_steps=n_steps, delta_z=delta,
                solve_config=solve_config, workers=workers,
            )
        if self.enabled:
            meta = ReferenceMetadata(
                model=model.name,
                mesh_id=mesh.mesh_id,
                load=load_name,
                steps=result.steps,
                max_steps=n_steps,
                delta=delta,
                dual_residual=result.dual_residual,
                start=start,
                start_steps=result.start_steps,
            )
            path = self.store(meta, result.solution)
            logger.info(f"reference for {model.name} on {mesh.mesh_id} computed and cached at {path}")
        return result
