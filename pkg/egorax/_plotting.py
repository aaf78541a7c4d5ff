import math
import os
from typing import Optional, Union

import matplotlib


matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from ._measure import PhaseSpaceMeasure
from ._report import SweepReport


_PathLike = Union[str, "os.PathLike[str]"]

_Y_KEYS = {
    "egorov": "distance",
    "meanfield": "measured",
    "localization": "measured",
    "local_unitary": "distance",
    "operator_egorov": "measured",
}


def _series(report: SweepReport) -> dict[tuple, list[dict]]:
    series: dict[tuple, list[dict]] = {}
    for row in report.rows:
        if row.get("status", "ok") != "ok":
            continue
        key = tuple(
            (name, row[name])
            for name in ("T", "p", "alpha_factor")
            if name in row and row[name] is not None
        )
        series.setdefault(key, []).append(row)
    return series


def plot_scaling(report: SweepReport, path: _PathLike) -> None:
    """Log-log plot of the measured quantity against `ℏ`, one line per `(T, p)`, with
    the `√ℏ` reference (anchored at the largest `ℏ`) or the explicit bound where one
    exists.
    """
    y_key = _Y_KEYS[report.operation]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for key, rows in sorted(_series(report).items()):
        rows = sorted(rows, key=lambda r: r["hbar"])
        hbar = np.array([r["hbar"] for r in rows])
        y = np.array([r[y_key] for r in rows])
        if np.all(y <= 0):
            continue
        label = ", ".join(f"{k}={v:g}" for k, v in key)
        (line,) = ax.loglog(hbar, np.maximum(y, 1e-300), "o-", label=label)
        if "bound" in rows[0]:
            bound = np.array([r["bound"] for r in rows])
            ax.loglog(hbar, bound, "--", color=line.get_color(), alpha=0.6)
        elif y[-1] > 0:
            reference = y[-1] * np.sqrt(hbar / hbar[-1])
            ax.loglog(hbar, reference, ":", color=line.get_color(), alpha=0.6)
    ax.set_xlabel("hbar")
    ax.set_ylabel(y_key)
    ax.set_title(f"{report.name} ({report.operation})")
    ax.grid(True, which="both", alpha=0.3)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_husimi(
    measure: PhaseSpaceMeasure,
    path: _PathLike,
    title: Optional[str] = None,
    bins: int = 128,
) -> None:
    """Heatmap of the `(x_1, p_1)` marginal of a phase-space measure.

    Grid-supported measures are drawn on their lattice; particle measures are binned.
    """
    locations = np.asarray(measure.locations)
    masses = np.asarray(measure.masses)
    dim = measure.dim
    fig, ax = plt.subplots(figsize=(5, 4.5))
    if measure.lattice is not None and dim == 1:
        lattice = measure.lattice
        x = np.asarray(lattice.axis(0))
        p = np.asarray(lattice.axis(1))
        density = masses.reshape(lattice.shape) / lattice.cell_volume
        mesh = ax.pcolormesh(x, p, density.T, shading="auto", cmap="viridis")
    else:
        counts, x_edges, p_edges = np.histogram2d(
            locations[:, 0], locations[:, dim], bins=bins, weights=masses
        )
        cell = (x_edges[1] - x_edges[0]) * (p_edges[1] - p_edges[0])
        mesh = ax.pcolormesh(x_edges, p_edges, counts.T / cell, cmap="viridis")
    fig.colorbar(mesh, ax=ax)
    ax.set_xlabel("x")
    ax.set_ylabel("p")
    ax.set_aspect("equal" if _square(locations, dim) else "auto")
    if title is not None:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _square(locations: np.ndarray, dim: int) -> bool:
    x_span = np.ptp(locations[:, 0])
    p_span = np.ptp(locations[:, dim])
    return x_span > 0 and p_span > 0 and abs(math.log(x_span / p_span)) < math.log(4)


def plot_report(report: SweepReport, directory: _PathLike) -> list[str]:
    """Writes the scaling plot, and Husimi heatmaps for any measures the sweep kept,
    into `directory`. Returns the written paths.
    """
    written = []
    path = os.path.join(directory, "scaling.png")
    plot_scaling(report, path)
    written.append(path)
    for name, measure in sorted(report.artifacts.items()):
        if isinstance(measure, PhaseSpaceMeasure):
            path = os.path.join(directory, f"{name}.png")
            plot_husimi(measure, path, title=name)
            written.append(path)
    return written
