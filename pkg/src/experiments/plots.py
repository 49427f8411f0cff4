"""
SVG plots of an experiment report: error decay, successive error ratios
and the step-size history, one polyline per strategy.
"""

from pathlib import Path
from typing import List, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..utils.errors import ArgumentError  # noqa: E402

# fixed ids and no timestamp so identical reports give identical files
SVG_STYLE = {"svg.hashsalt": "kacanov", "svg.fonttype": "path"}
SVG_METADATA = {"Date": None}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    return path


def emit_plots(report, output_dir: Union[str, Path]) -> List[Path]:
    """Write <model>_error.svg, <model>_ratio.svg and <model>_delta.svg."""
    if not report.traces:
        raise ArgumentError("cannot plot an empty report")
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    model = report.config.model_id
    paths = []

    with plt.rc_context(SVG_STYLE):
        fig, ax = plt.subplots(figsize=(7, 5))
        for name, trace in report.traces.items():
            errors = trace.errors
            n = np.arange(errors.size)
            positive = errors > 0
            ax.semilogy(n[positive], errors[positive], marker="o", markersize=3, label=name)
        ax.set_xlabel("iteration n")
        ax.set_ylabel(r"$\|\nabla(u^n - u_{ref})\|_{L^2}$")
        ax.set_title(f"{model}: error decay")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        paths.append(_save(fig, output_dir / f"{model}_error.svg"))

        fig, ax = plt.subplots(figsize=(7, 5))
        for name, ratios in report.ratios.items():
            ax.plot(np.arange(1, ratios.size + 1), ratios, marker="o", markersize=3, label=name)
        ax.axhline(1.0, color="gray", linestyle="--", linewidth=0.8)
        ax.set_xlabel("iteration n")
        ax.set_ylabel(r"$\|e^{n}\| / \|e^{n-1}\|$")
        ax.set_title(f"{model}: successive error ratios")
        ax.grid(True, alpha=0.3)
        ax.legend()
        paths.append(_save(fig, output_dir / f"{model}_ratio.svg"))

        fig, ax = plt.subplots(figsize=(7, 5))
        for name, trace in report.traces.items():
            deltas = trace.deltas
            ax.plot(np.arange(1, deltas.size + 1), deltas, marker="o", markersize=3, label=name)
        ax.set_xlabel("iteration n")
        ax.set_ylabel(r"damping $\delta^n$")
        ax.set_title(f"{model}: step sizes")
        ax.grid(True, alpha=0.3)
        ax.legend()
        paths.append(_save(fig, output_dir / f"{model}_delta.svg"))

    return paths
