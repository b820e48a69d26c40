"""SVG figure rendering for run outputs.

All figures are written as SVG with stable ids and no timestamp metadata so
reruns produce identical files.  matplotlib is imported lazily with the Agg
backend; nothing here opens a display.
"""

from __future__ import annotations

import numpy as np

_SVG_META = {"Date": None}


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    matplotlib.rcParams["svg.hashsalt"] = "spinphonon"
    matplotlib.rcParams["figure.dpi"] = 110
    return plt


def heatmap(grid, path, *, title: str = "", value_label: str = ""):
    """Render a two-axis SweepGrid as a heatmap SVG (first axis vertical)."""
    plt = _plt()
    (yname, yvals), (xname, xvals) = grid.axes
    fig, ax = plt.subplots(figsize=(6.0, 4.2), constrained_layout=True)
    im = ax.imshow(grid.values, aspect="auto", origin="lower",
                   extent=(float(xvals[0]), float(xvals[-1]), float(yvals[0]), float(yvals[-1])),
                   cmap="viridis")
    ax.set_xlabel(xname)
    ax.set_ylabel(yname)
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, label=value_label)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def line_plot(x, series: dict, path, *, xlabel: str = "t (ns)", ylabel: str = "",
              title: str = "", yscale: str = "linear"):
    """Render named traces against a shared abscissa."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.0, 4.0), constrained_layout=True)
    for name, y in series.items():
        y = np.asarray(y)
        ax.plot(np.asarray(x), y.real if np.iscomplexobj(y) else y, label=name, lw=1.2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_yscale(yscale)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend(frameon=False, fontsize=8)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def errorband_plot(x, bands: dict, path, *, xlabel: str = "", ylabel: str = "", title: str = ""):
    """Mean lines with +/- one-standard-deviation shading; bands maps
    name -> (mean, std)."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.0, 4.0), constrained_layout=True)
    for name, (mean, std) in bands.items():
        x_, m, s = np.asarray(x), np.asarray(mean), np.asarray(std)
        line, = ax.plot(x_, m, label=name, lw=1.4)
        ax.fill_between(x_, m - s, m + s, alpha=0.25, color=line.get_color(), lw=0)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def chi_matrix_plot(chi, path, *, title: str = "process matrix (real part)"):
    """Real part of a ChiMatrix with Pauli tick labels."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.4, 5.4), constrained_layout=True)
    m = chi.matrix.real
    lim = max(abs(m).max(), 1e-12)
    im = ax.imshow(m, cmap="RdBu_r", vmin=-lim, vmax=lim)
    ax.set_xticks(range(len(chi.labels)), chi.labels, rotation=90, fontsize=7)
    ax.set_yticks(range(len(chi.labels)), chi.labels, fontsize=7)
    ax.set_title(title)
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def schedule_plot(schedule, path, *, n_points: int = 1200, title: str = "pulse program"):
    """Two-panel rendering: |amplitudes| and the (theta, phi) path."""
    plt = _plt()
    ts, theta, phi, om_r, om_2 = schedule.sample(n_points)
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.4, 5.6), sharex=True,
                                   constrained_layout=True)
    ax1.plot(ts, np.abs(om_r) * 1e3, label="|Omega_R|", lw=1.3)
    ax1.plot(ts, np.abs(om_2) * 1e3, label="|Omega_2|", lw=1.3)
    ax1.set_ylabel("amplitude (MHz)")
    ax1.legend(frameon=False, fontsize=8)
    ax1.set_title(title)
    ax2.plot(ts, theta, label="theta", lw=1.3)
    ax2.plot(ts, phi, label="phi", lw=1.3)
    ax2.set_xlabel("t (ns)")
    ax2.set_ylabel("angle (rad)")
    ax2.legend(frameon=False, fontsize=8)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
