"""Figure rendering for the CLI report path.

Figures are written next to the delimited outputs: an objective trace with
the window stops highlighted, and per-coordinate marginal-density panels
(optionally overlaid on benchmark draws). Rendering always uses the Agg
backend so runs work headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .controller import RunTrace
from .mixture import MixtureParams


def _marginal_pdf(params: MixtureParams, coordinate: int, x: np.ndarray) -> np.ndarray:
    """Closed-form 1-D marginal of a Gaussian mixture."""
    out = np.zeros_like(x)
    for w, mean, cov in zip(params.weights, params.means, params.covs):
        if w == 0.0:
            continue
        mu = mean[coordinate]
        var = cov.entries[coordinate, coordinate]
        out += w * np.exp(-0.5 * (x - mu) ** 2 / var) / np.sqrt(2.0 * np.pi * var)
    return out


def _marginal_range(mixtures, coordinate: int, n_sigma: float = 4.0):
    lo, hi = np.inf, -np.inf
    for params in mixtures:
        for w, mean, cov in zip(params.weights, params.means, params.covs):
            if w == 0.0:
                continue
            sd = np.sqrt(cov.entries[coordinate, coordinate])
            lo = min(lo, mean[coordinate] - n_sigma * sd)
            hi = max(hi, mean[coordinate] + n_sigma * sd)
    return lo, hi


def save_objective_figure(trace: RunTrace, path) -> None:
    """Objective estimates per iteration with window stops marked."""
    t = [p.t for p in trace.objective]
    raw = [p.L for p in trace.objective]
    smooth = [p.L_smoothed for p in trace.objective]
    stops = [e.iteration for e in trace.events if e.kind == "window_stop"]
    stop_values = {p.t: p.L_smoothed for p in trace.objective}

    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.plot(t, raw, lw=0.8, alpha=0.5, color="steelblue", label="estimate")
    ax.plot(t, smooth, lw=1.6, color="navy", label="smoothed")
    if stops:
        ax.plot(stops, [stop_values[s] for s in stops], "o", ms=6,
                color="crimson", zorder=5, label="window stop")
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective")
    ax.legend(loc="lower right", fontsize=9)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_marginal_figure(final: MixtureParams, init: MixtureParams | None, path,
                         reference: np.ndarray | None = None,
                         labels=None) -> None:
    """Per-coordinate marginal densities of the fitted mixture.

    Optionally overlays the starting mixture and a histogram of benchmark
    draws (one column per coordinate).
    """
    p = final.dim
    labels = labels or [f"theta_{j}" for j in range(p)]
    ncols = min(p, 2)
    nrows = (p + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(5.0 * ncols, 3.2 * nrows),
                             squeeze=False)
    for j in range(p):
        ax = axes[j // ncols][j % ncols]
        pool = [final] + ([init] if init is not None else [])
        lo, hi = _marginal_range(pool, j)
        if reference is not None:
            lo = min(lo, float(np.min(reference[:, j])))
            hi = max(hi, float(np.max(reference[:, j])))
            ax.hist(reference[:, j], bins=80, density=True, color="0.8",
                    label="benchmark")
        x = np.linspace(lo, hi, 400)
        if init is not None:
            ax.plot(x, _marginal_pdf(init, j, x), "--", color="gray", lw=1.2,
                    label="initial")
        ax.plot(x, _marginal_pdf(final, j, x), color="crimson", lw=1.6,
                label="fitted")
        ax.set_xlabel(labels[j])
        if j == 0:
            ax.legend(fontsize=8)
    for j in range(p, nrows * ncols):
        axes[j // ncols][j % ncols].axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
