"""
Experiment harness: one model, one mesh, several damping strategies.

Builds the discretisation and the reference solution once, runs the
strategies concurrently from u^0 = 0 and writes one CSV trace per strategy.

When the energy is not convex it can have several critical points. The
reference is then seeded by Taylor-controlled descent, and a run whose final
iterate is critical but far from the reference is reported as having settled
at a different critical point.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from ..core import fem, kacanov
from ..core.damping import DampingKind, DampingStrategy
from ..core.kacanov import IterationTrace, KacanovContext, StopCriteria, run_iteration
from ..core.mesh import build_lshape
from ..data.reference_cache import ReferenceCache
from ..models.diffusion import (
    DiffusionModel,
    check_declared_constants,
    constants as analysis_constants,
    energy_is_convex,
    get_model,
    slope_bounds,
)
from ..utils.errors import CapabilityError
from ..utils.logger import get_logger, run_context
from ..utils.performance import PerformanceMetrics, SolverProfiler, summarize
from .config import ExperimentConfig

logger = get_logger(__name__)

# a final iterate this close to critical (relative to ||b||_{X*}) but this far
# from the reference (relative to ||u_ref||) sits at another critical point
CRITICAL_RESIDUAL = 1e-8
DISTINCT_ERROR = 1e-4


@dataclass
class ReferenceInfo:
    steps: int
    dual_residual: float
    delta: float
    start: str = "zero"
    start_steps: int = 0


@dataclass
class ExperimentReport:
    """Traces, derived error ratios and reference metadata of one experiment."""
    config: ExperimentConfig
    reference: ReferenceInfo
    traces: Dict[str, IterationTrace] = field(default_factory=dict)
    ratios: Dict[str, np.ndarray] = field(default_factory=dict)
    performance: Dict[str, PerformanceMetrics] = field(default_factory=dict)
    csv_paths: Dict[str, Path] = field(default_factory=dict)
    distinct_limits: Dict[str, bool] = field(default_factory=dict)
    plot_paths: List[Path] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.traces)

    def summary_frame(self) -> pd.DataFrame:
        rows = []
        for name, trace in self.traces.items():
            deltas = trace.deltas
            rows.append({
                "strategy": name,
                "steps": len(trace) - 1,
                "final_error": trace.final_error,
                "trailing_ratio": trailing_ratio(trace),
                "converged": trace.converged,
                "nonconvergent": trace.nonconvergent,
                "min_delta": float(deltas.min()) if deltas.size else math.nan,
                "max_delta": float(deltas.max()) if deltas.size else math.nan,
                "clamped_steps": trace.clamped_steps,
                "final_dual_residual": trace.final_dual_residual,
                "distinct_limit": self.distinct_limits.get(name, False),
            })
        return pd.DataFrame(rows)


def error_ratios(trace: IterationTrace) -> np.ndarray:
    """||e^{n+1}|| / ||e^n|| for every accepted step."""
    return kacanov.error_ratios(trace.errors)


def trailing_ratio(trace: IterationTrace, window: int = kacanov.NONCONVERGENCE_WINDOW) -> float:
    """Geometric mean of the last ``window`` error ratios."""
    return kacanov.trailing_ratio(trace.errors, window)


def resolve_reference_start(requested: str, model: DiffusionModel, convex: bool) -> str:
    """Map "auto" to "descent" for non-convex energies (when mu' is available) and "zero" otherwise."""
    if requested == "descent" and not model.has_derivative:
        raise CapabilityError(f"a descent-seeded reference needs mu' but model '{model.name}' has none")
    if requested != "auto":
        return requested
    return "descent" if not convex and model.has_derivative else "zero"


def settled_elsewhere(
    trace: IterationTrace,
    load_norm: float,
    reference_norm: float,
    residual_tol: float = CRITICAL_RESIDUAL,
    error_tol: float = DISTINCT_ERROR,
) -> bool:
    """True when the final iterate is (nearly) critical yet not close to the reference."""
    residual = trace.final_dual_residual
    if not math.isfinite(residual) or not math.isfinite(trace.final_error):
        return False
    return residual <= residual_tol * max(load_norm, 1.0) and trace.final_error > error_tol * max(reference_norm, 1.0)


def _run_strategy(strategy: DampingStrategy, template: KacanovContext, stop: StopCriteria):
    ctx = KacanovContext(
        mesh=template.mesh,
        model=template.model,
        load=template.load,
        constants=template.constants,
        solve_config=template.solve_config,
        workers=template.workers,
        profiler=SolverProfiler(),
    )
    with run_context(template.model.name, strategy.label):
        trace = run_iteration(strategy, ctx, stop)
        logger.debug(f"stage timings {ctx.profiler.get_detailed_stats()}")
    return trace, ctx.profiler.get_metrics()


def run_experiment(cfg: ExperimentConfig, cache: Optional[ReferenceCache] = None) -> ExperimentReport:
    """Run every configured strategy and write ``<output_dir>/<model>_<strategy>.csv`` plus plots."""
    logger.info(f"experiment {cfg.model_id} level={cfg.level} strategies={cfg.strategies}")
    mesh = build_lshape(cfg.level)
    model = get_model(cfg.model_id)
    bounds = slope_bounds(model)
    check_declared_constants(model, bounds=bounds)
    convex = energy_is_convex(model, bounds)
    consts = analysis_constants(model)

    strategies = cfg.build_strategies(consts)
    if any(s.kind is DampingKind.TAYLOR for s in strategies) and not model.has_derivative:
        raise CapabilityError(f"Taylor step-size control needs mu' but model '{model.name}' has none")
    start = resolve_reference_start(cfg.reference_start, model, convex)
    if not convex:
        logger.warning(f"{model.name}: energy is not convex (inf xi' = {bounds[0]:.4g}); reference start '{start}'")

    manufactured = fem.sine_product()
    template = KacanovContext.build(
        mesh, model, manufactured, solve_config=cfg.solve_config(), workers=cfg.workers
    )

    cache = cache or ReferenceCache(cfg.cache_dir, enabled=cfg.use_cache)
    descent = DampingStrategy.taylor(sigma=cfg.sigma, theta=cfg.theta) if start == "descent" else None
    reference = cache.reference(
        mesh, model, template.load, manufactured.name, n_steps=cfg.ref_steps, workers=cfg.workers,
        descent=descent, solve_config=template.solve_config,
    )
    stop = StopCriteria(max_iters=cfg.max_iters, tol_error=cfg.tol_error, u_ref=reference.solution)

    with ThreadPoolExecutor(max_workers=len(strategies)) as pool:
        futures = [pool.submit(_run_strategy, strategy, template, stop) for strategy in strategies]
        outcomes = [future.result() for future in futures]

    report = ExperimentReport(
        config=cfg,
        reference=ReferenceInfo(
            reference.steps, reference.dual_residual, reference.delta, start, reference.start_steps
        ),
    )
    load_norm = fem.dual_norm(mesh, template.load)
    reference_norm = template.norm(reference.solution)
    output_dir = Path(cfg.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    for strategy, (trace, metrics) in zip(strategies, outcomes):
        name = strategy.label
        report.traces[name] = trace
        report.ratios[name] = error_ratios(trace)
        report.performance[name] = metrics
        report.csv_paths[name] = trace.to_csv(output_dir / f"{cfg.model_id}_{name}.csv")
        report.distinct_limits[name] = settled_elsewhere(trace, load_norm, reference_norm)
        with run_context(cfg.model_id, name):
            if report.distinct_limits[name]:
                logger.warning(
                    f"final iterate is critical (dual residual {trace.final_dual_residual:.2e}) but "
                    f"{trace.final_error:.3e} away from the reference: H has several critical points"
                )
            logger.info(
                f"steps={len(trace) - 1} final_error={trace.final_error:.3e} "
                f"trailing_ratio={trailing_ratio(trace):.3f} | {summarize(metrics)}"
            )

    if cfg.plots:
        from .plots import emit_plots
        report.plot_paths = emit_plots(report, output_dir)

    return report
