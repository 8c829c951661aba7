#!/usr/bin/env python3
"""Render CSV figure bundles from the solver CLI into multi-panel images.

This side deliberately imports nothing from the solver package.  It
consumes only the flat CSV schema (t, method, sz, fidelity_vs_exact),
so the two components can drift apart only by changing the schema.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


class MissingPanelError(RuntimeError):
    """A figure asked for panel data the bundle does not contain."""


RED = {"color": "crimson", "linestyle": "-", "linewidth": 1.6}
BLACK_DASHED = {"color": "black", "linestyle": "--", "linewidth": 1.2}
BLUE_DASHDOT = {"color": "royalblue", "linestyle": "-.", "linewidth": 1.2}
BLUE_DASHED = {"color": "royalblue", "linestyle": "--", "linewidth": 1.2}
BLACK = {"color": "black", "linestyle": "-", "linewidth": 1.4}

FIGURE_IDS = ("2", "3", "4", "5", "6", "7", "8", "9")


def _panels(fig: str):
    """Per-panel curve lists and the subplot grid for one figure id."""
    if fig in ("2", "3", "5"):
        curves = [("exact", RED, "exact"), ("tcl", BLACK_DASHED, "TCL"),
                  ("nz", BLUE_DASHDOT, "NZ")]
        return [(p, "sz", curves) for p in "abcd"], (2, 2)
    if fig == "4":
        curves = [("tcl", BLACK_DASHED, "TCL"), ("nz", BLUE_DASHDOT, "NZ")]
        return [(p, "fidelity", curves) for p in "abc"], (1, 3)
    if fig == "6":
        top = [(p, "sz", [("exact_shifted", RED, r"lower limit $-\omega_L$"),
                          ("exact", BLUE_DASHED, r"lower limit $-\infty$")])
               for p in "abc"]
        bottom = [(p, "density", [("spectral", BLACK, None)]) for p in "def"]
        return top + bottom, (2, 3)
    if fig in ("7", "8"):
        curves = [("exact", RED, "exact"),
                  ("tcl_secular", BLUE_DASHED, "secular TCL"),
                  ("tcl", BLACK_DASHED, "TCL")]
        return [(p, "sz", curves) for p in "abcdef"], (3, 2)
    if fig == "9":
        curves = [("exact", RED, "Lorentzian"),
                  ("exact_spin_boson", BLUE_DASHED, "spin-boson")]
        return [(p, "sz", curves) for p in "abc"], (1, 3)
    raise MissingPanelError(f"unknown figure id {fig!r}; known: "
                            + ", ".join(FIGURE_IDS))


def read_panel(path: Path) -> dict[str, dict[str, list[float]]]:
    if not path.exists():
        raise MissingPanelError(f"missing panel data: {path}")
    by_method: dict[str, dict[str, list[float]]] = {}
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            series = by_method.setdefault(
                row["method"], {"t": [], "sz": [], "fidelity": []})
            series["t"].append(float(row["t"]))
            series["sz"].append(float(row["sz"]))
            cell = row.get("fidelity_vs_exact", "")
            series["fidelity"].append(float(cell) if cell else math.nan)
    return by_method


def render(in_dir: Path, fig: str, out_dir: Path, fmt: str = "png",
           dpi: int = 150) -> tuple[Path, int]:
    panels, (rows, cols) = _panels(fig)
    figure, axes = plt.subplots(rows, cols,
                                figsize=(4.2 * cols, 3.0 * rows),
                                squeeze=False)
    for ax, (letter, kind, curves) in zip(axes.flat, panels):
        path = Path(in_dir) / f"fig{fig}{letter}.csv"
        data = read_panel(path)
        for method, style, label in curves:
            if method not in data:
                raise MissingPanelError(
                    f"{path} has no rows for method {method!r}")
            ykey = "fidelity" if kind == "fidelity" else "sz"
            ax.plot(data[method]["t"], data[method][ykey], label=label, **style)
        if kind == "density":
            # the laser line sits at -1 on this axis by construction
            ax.axvline(-1.0, color="0.45", linewidth=0.8)
            ax.set_xlabel(r"$\omega/\Gamma$")
            ax.set_ylabel(r"$J(\omega)$ (normalised)")
        else:
            ax.set_xlabel(r"$\Gamma t$")
            ax.set_ylabel(r"$F$" if kind == "fidelity"
                          else r"$\langle\sigma_z\rangle$")
        ax.set_title(f"({letter})", loc="left", fontsize=10)
        if any(label for _, _, label in curves):
            ax.legend(fontsize=8, frameon=False)
    figure.tight_layout()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = out / f"fig{fig}.{fmt}"
    figure.savefig(target, dpi=dpi)
    plt.close(figure)
    return target, len(panels)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="render_figures",
        description="render one CSV figure bundle into a multi-panel image")
    parser.add_argument("--in", dest="in_dir", required=True,
                        help="directory holding the figN*.csv bundle")
    parser.add_argument("--fig", required=True,
                        help="figure id (2..9, with or without a fig prefix)")
    parser.add_argument("--out", required=True,
                        help="directory for the rendered image")
    parser.add_argument("--format", default="png", choices=("png", "pdf", "svg"))
    parser.add_argument("--dpi", type=int, default=150)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fig = args.fig.removeprefix("fig")
    try:
        target, n_panels = render(Path(args.in_dir), fig, Path(args.out),
                                  args.format, args.dpi)
    except MissingPanelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {target.name} ({n_panels} panels)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
