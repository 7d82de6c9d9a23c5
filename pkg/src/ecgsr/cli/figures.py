"""Figure rendering for the report and sweep commands.

Every figure is drawn from the same numbers that go into the CSV next to it,
so the PNG is a view of the delimited output and never the other way round.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

GOLDEN = (math.sqrt(5) - 1.0) / 2.0

STYLE = {
    "font.size": 9,
    "font.family": "serif",
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.0,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}

SERIES_COLORS = {
    "original": "black",
    "linear": "tab:gray",
    "LC": "tab:orange",
    "LR": "tab:green",
    "LJ": "tab:red",
}


def figsize(width=6.0, ratio=GOLDEN):
    return (width, width * ratio)


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps repeated renders byte-stable
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def boxplot_figure(values, path, title=""):
    """One box per condition; whiskers at 1.5 IQR, outliers as blue dots."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        names = list(values)
        ax.boxplot(
            [values[n] for n in names], whis=1.5,
            flierprops={"marker": "o", "markerfacecolor": "tab:blue", "markeredgecolor": "tab:blue", "markersize": 3},
        )
        ax.set_xticks(range(1, len(names) + 1), names)
        ax.set_ylabel("test-fold F1")
        ax.set_ylim(-0.02, 1.02)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def waveform_figure(t, original, linear, recon, path, title=""):
    """Original trace against linear interpolation and each generator output."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(8.0, 0.35))
        ax.plot(t, original, color=SERIES_COLORS["original"], label="original")
        ax.plot(t, linear, color=SERIES_COLORS["linear"], linestyle="--", label="linear")
        for name, y in recon.items():
            ax.plot(t, y, color=SERIES_COLORS.get(name), alpha=0.8, label=name)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("amplitude")
        ax.legend(ncol=len(recon) + 2, loc="upper right")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def sweep_figure(rows, path):
    """Median test F1 against sampling rate, one line per lead. ``rows`` are (fs, lead, f1)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        for lead in sorted({r[1] for r in rows}):
            pts = sorted((fs, f1) for fs, ld, f1 in rows if ld == lead)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", markersize=3, label=f"lead {lead}")
        ax.set_xscale("log")
        ax.set_xlabel("sampling rate (Hz)")
        ax.set_ylabel("median test F1")
        ax.set_ylim(-0.02, 1.02)
        ax.legend()
        return _save(fig, path)
