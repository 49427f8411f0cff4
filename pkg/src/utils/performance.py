"""
Performance monitoring utilities for assembly and solve timings.
"""

import threading
import time
from contextlib import contextmanager
from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterator, Optional

import numpy as np
import psutil


@dataclass
class PerformanceMetrics:
    """Container for per-run performance metrics."""
    assembly_ms: float = 0.0
    solve_ms: float = 0.0
    energy_ms: float = 0.0
    memory_usage_mb: float = 0.0
    solves: int = 0


class LatencyTracker:
    """Wall-clock samples for one stage (assembly, solve or energy)."""

    def __init__(self, max_samples: int = 10000):
        self.samples: deque = deque(maxlen=max_samples)
        self.total_ms = 0.0
        self.count = 0

    def record(self, latency_ms: float) -> None:
        self.samples.append(latency_ms)
        self.total_ms += latency_ms
        self.count += 1

    def get_statistics(self) -> Dict[str, float]:
        if not self.samples:
            return {"mean": 0.0, "p50": 0.0, "p95": 0.0, "max": 0.0, "total": 0.0, "count": 0}
        values = np.fromiter(self.samples, dtype=float)
        p50, p95 = np.percentile(values, [50, 95])
        return {
            "mean": float(values.mean()),
            "p50": float(p50),
            "p95": float(p95),
            "max": float(values.max()),
            "total": self.total_ms,
            "count": self.count,
        }


class SolverProfiler:
    """
    Times the expensive building blocks of one iteration run.

    Usage:
        with profiler.track("assembly"):
            A = assemble_stiffness(...)
    """

    KINDS = ("assembly", "solve", "energy")

    def __init__(self):
        self._trackers: Dict[str, LatencyTracker] = {kind: LatencyTracker() for kind in self.KINDS}
        self._lock = threading.Lock()
        self.process = psutil.Process()

    @contextmanager
    def track(self, kind: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            latency_ms = (time.perf_counter() - start) * 1000
            with self._lock:
                self._trackers.setdefault(kind, LatencyTracker()).record(latency_ms)

    def get_metrics(self) -> PerformanceMetrics:
        memory_mb = self.process.memory_info().rss / 1024 / 1024
        return PerformanceMetrics(
            assembly_ms=self._trackers["assembly"].total_ms,
            solve_ms=self._trackers["solve"].total_ms,
            energy_ms=self._trackers["energy"].total_ms,
            memory_usage_mb=memory_mb,
            solves=self._trackers["solve"].count,
        )

    def get_detailed_stats(self) -> Dict[str, Dict[str, float]]:
        return {kind: tracker.get_statistics() for kind, tracker in self._trackers.items()}


def summarize(metrics: Optional[PerformanceMetrics]) -> str:
    """One-line summary for log output."""
    if metrics is None:
        return "no timings"
    return (f"assembly={metrics.assembly_ms:.1f}ms solve={metrics.solve_ms:.1f}ms "
            f"({metrics.solves} solves) energy={metrics.energy_ms:.1f}ms "
            f"rss={metrics.memory_usage_mb:.0f}MB")
