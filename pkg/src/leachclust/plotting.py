"""Matplotlib charts of experiment aggregates, written as standalone SVGs.

Output is byte-stable: the SVG hash salt is fixed and the date stamp is
dropped, so identical reports give identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

WIDTH_PT, HEIGHT_PT = 800, 600

STYLE = {
    "svg.hashsalt": "leachclust",
    "svg.fonttype": "path",
    "font.size": 13,
    "axes.labelsize": 14,
    "axes.titlesize": 15,
    "legend.fontsize": 11,
    "lines.linewidth": 1.8,
    "lines.markersize": 6,
    "axes.grid": True,
    "grid.alpha": 0.3,
}

# file stem, aggregate key, axis label
PANELS = (
    ("nmi", "nmi", "NMI"),
    ("f", "f_score", "F score"),
    ("ri", "rand_index", "Rand index"),
    ("seconds", "runtime_seconds", "Time (seconds)"),
)


def new_figure():
    fig = Figure(figsize=(WIDTH_PT / 72, HEIGHT_PT / 72), dpi=72)
    FigureCanvasSVG(fig)
    return fig, fig.add_subplot(1, 1, 1)


def save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})


def _series(report, key):
    methods = list(dict.fromkeys(a.method for a in report.aggregates))
    fractions = sorted({a.fraction for a in report.aggregates})
    series = {}
    for name in methods:
        xs, ys = [], []
        for a in report.aggregates:
            if a.method == name and a.means[key] is not None:
                xs.append(a.fraction)
                ys.append(a.means[key])
        series[name] = (xs, ys)
    return methods, fractions, series


def plot_metric(report, key, label, path):
    """One polyline per method: against the missing fraction when the report
    spans several fractions, otherwise against the method roster."""
    methods, fractions, series = _series(report, key)
    with matplotlib.rc_context(STYLE):
        fig, ax = new_figure()
        if len(fractions) > 1:
            for name in methods:
                xs, ys = series[name]
                ax.plot(xs, ys, marker="o", label=name, gid=f"series-{name}")
            ax.set_xlabel("Fraction of missing elements")
            ax.set_xticks(fractions)
        else:
            for pos, name in enumerate(methods):
                _, ys = series[name]
                ax.plot([pos] * len(ys), ys, marker="o", linestyle="-", label=name, gid=f"series-{name}")
            ax.set_xticks(range(len(methods)))
            ax.set_xticklabels(methods)
            ax.set_xlabel("Method")
            if fractions:
                ax.set_title(f"{label} at {fractions[0]:.0%} missing")
        ax.set_ylabel(label)
        ax.legend(loc="best", frameon=False)
        fig.tight_layout()
        save(fig, path)
    return path


def plot_report(report, output_dir):
    out = Path(output_dir)
    return [plot_metric(report, key, label, out / f"{stem}.svg") for stem, key, label in PANELS]
