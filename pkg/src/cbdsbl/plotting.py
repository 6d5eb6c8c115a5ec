"""Static SVG figures for sweep tables (matplotlib, Agg backend)."""

from __future__ import annotations

import io
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

AXIS_LABELS = {
    "rho_scale": "rho scale factor",
    "m_over_n": "measurement rate m/n",
    "k_over_n": "sparsity rate k/n",
    "snr_db": "SNR (dB)",
    "L": "number of nodes L",
    "bridge_fraction": "bridge fraction |B|/L",
    "failure_rate": "node failure rate",
    "r_max": "ADMM iterations per M-step",
}


def _label(axis):
    return AXIS_LABELS.get(axis, axis)


def _svg(fig) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", bbox_inches="tight")
    plt.close(fig)
    return buf.getvalue()


def line_plot(rows, x_axis: str, y: str = "mean_nmse_db", ylabel: str = "NMSE (dB)") -> str:
    """One curve of ``y`` against ``x_axis``; returns SVG text."""
    rows = sorted(rows, key=lambda r: r[x_axis])
    xs = np.array([float(r[x_axis]) for r in rows])
    ys = np.array([float(r[y]) for r in rows])
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot(xs, ys, "o-")
    if x_axis == "rho_scale":
        ax.set_xscale("log", base=2)
    ax.set_xlabel(_label(x_axis))
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    return _svg(fig)


def rho_sensitivity_plot(rows) -> str:
    """Iterations-to-target and NMSE against the rho scale factor, minima marked."""
    rows = sorted(rows, key=lambda r: r["rho_scale"])
    xs = np.array([float(r["rho_scale"]) for r in rows])
    it = np.array([float(r["mean_iters_to_target"]) for r in rows])
    db = np.array([float(r["mean_nmse_db"]) for r in rows])
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.6))
    for ax, v, lab in ((a1, it, "mean iterations to target NMSE"), (a2, db, "NMSE (dB)")):
        ax.plot(xs, v, "o-")
        if np.isfinite(v).any():
            i = int(np.nanargmin(v))
            ax.plot([xs[i]], [v[i]], "r*", ms=14, label=f"minimum at {xs[i]:g}")
            ax.legend()
        ax.axvline(1.0, color="gray", ls=":", lw=1)
        ax.set_xscale("log", base=2)
        ax.set_xlabel(_label("rho_scale"))
        ax.set_ylabel(lab)
        ax.grid(True, alpha=0.3)
    return _svg(fig)


def heatmap_plot(rows, x_axis: str, y_axis: str, value: str = "avg_nmse_db", boundary: dict | None = None) -> str:
    """Heatmap of ``value`` over two axes with the pass boundary as a polyline."""
    xv = sorted({r[x_axis] for r in rows})
    yv = sorted({r[y_axis] for r in rows})
    Z = np.full((len(yv), len(xv)), math.nan)
    for r in rows:
        Z[yv.index(r[y_axis]), xv.index(r[x_axis])] = float(r[value])
    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.imshow(Z, origin="lower", aspect="auto", cmap="viridis_r")
    fig.colorbar(im, ax=ax, label=value)
    ax.set_xticks(range(len(xv)), [f"{v:g}" for v in xv])
    ax.set_yticks(range(len(yv)), [f"{v:g}" for v in yv])
    ax.set_xlabel(_label(x_axis))
    ax.set_ylabel(_label(y_axis))
    if boundary:
        pts = [(xv.index(bx), yv.index(by)) for by, bx in boundary.items() if bx is not None and by in yv]
        if pts:
            pts.sort(key=lambda p: p[1])
            ax.plot([p[0] for p in pts], [p[1] for p in pts], "w-o", lw=2, label="pass boundary")
            ax.legend(loc="upper right")
    return _svg(fig)
