"""Figure output for run directories.

Two renderers share one table of figure specs: ``write_gnuplot_scripts``
emits plain-text ``.gp`` scripts next to the CSVs (no plotting library
needed), and ``render_pngs`` draws the same panels with matplotlib. Only the
latter imports matplotlib, and only when called.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class Figure:
    name: str
    csv: str
    x: str
    ys: tuple
    xlabel: str
    ylabel: str
    logy: bool = False


FIGURES = {
    "sweep": (
        Figure("fig1_overlaps", "fig1_overlaps.csv", "h", ("ground_overlap", "excited_overlap"),
               "h", "initial overlap", logy=True),
        Figure("fig2_energies", "fig2_energies.csv", "h", ("E0_exact", "E1_exact", "E_sim"),
               "h", "energy"),
        Figure("fig3_errors", "fig3_errors.csv", "h", ("energy_error", "subspace_infidelity"),
               "h", "error", logy=True),
        Figure("fig4_gap_tau", "fig4_gap_tau.csv", "h", ("gap", "tau_predicted", "t_converged"),
               "h", "gap / time", logy=True),
    ),
    "excited": (
        Figure("excited", "excited.csv", "h", ("E0_exact", "E1_exact", "E_sim"), "h", "energy"),
    ),
    "scaling": (
        Figure("scaling", "scaling.csv", "n_sites",
               ("mean_t_converged", "mean_t_formula", "tau_predicted"), "N", "time"),
    ),
}


def _columns(path: Path) -> list[str]:
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def gnuplot_script(fig: Figure, columns: list[str]) -> str:
    """Gnuplot source drawing ``fig`` from its CSV into ``<name>_gnuplot.png``."""
    col = {c: i + 1 for i, c in enumerate(columns)}
    lines = [
        f"# {fig.name}: generated from {fig.csv}",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 800,560",
        f"set output '{fig.name}_gnuplot.png'",
        f"set xlabel '{fig.xlabel}'",
        f"set ylabel '{fig.ylabel}'",
    ]
    if fig.logy:
        lines.append("set logscale y")
    plots = [f"'{fig.csv}' using {col[fig.x]}:{col[y]} with linespoints"
             for y in fig.ys if y in col]
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def write_gnuplot_scripts(out, kind: str) -> list[Path]:
    out = Path(out)
    written = []
    for fig in FIGURES[kind]:
        src = out / fig.csv
        if not src.exists():
            continue
        path = out / f"{fig.name}.gp"
        path.write_text(gnuplot_script(fig, _columns(src)))
        written.append(path)
    return written


def _read_numeric(path: Path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    data = {}
    for key in rows[0] if rows else ():
        vals = []
        for r in rows:
            try:
                vals.append(float(r[key]))
            except ValueError:
                vals.append(math.nan)
        data[key] = vals
    return data


def render_pngs(out, kind: str) -> list[Path]:
    """Draw each figure of ``kind`` with matplotlib (Agg backend)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out)
    written = []
    for fig in FIGURES[kind]:
        src = out / fig.csv
        if not src.exists():
            continue
        data = _read_numeric(src)
        f, ax = plt.subplots(figsize=(7, 4.5))
        for y in fig.ys:
            if y not in data:
                continue
            vals = data[y]
            if fig.logy:
                vals = [v if v > 0 else math.nan for v in vals]
            ax.plot(data[fig.x], vals, "o-", ms=3, label=y)
        if fig.logy:
            ax.set_yscale("log")
        ax.set_xlabel(fig.xlabel)
        ax.set_ylabel(fig.ylabel)
        ax.legend(frameon=False)
        f.tight_layout()
        path = out / f"{fig.name}.png"
        f.savefig(path, dpi=120)
        plt.close(f)
        written.append(path)
    return written
