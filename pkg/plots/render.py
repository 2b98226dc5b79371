#!/usr/bin/env python3
"""Render study-CSV figures.

Usage: ``python3 plots/render.py --kind <kind> --csv <path> --out <img>``

Kinds (input CSV in parentheses):
  sg-error       error vs stochastic degree with analytic truncation (sg_refine.csv)
  rates          observed rate bars per degree (sg_refine.csv)
  work           work proxy W vs degree (sg_refine.csv)
  solver         FGMRES iterations and timing breakdown (sg_refine.csv)
  mc             Monte-Carlo mean/variance error decay (mc_run.csv)
  work-accuracy  wall time vs error scatter per method (compare.csv)

Plots only display CSV columns; nothing is recomputed. A missing column
exits non-zero naming it; an empty CSV exits with "no data rows".
"""

from __future__ import annotations

import argparse
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


class RenderError(Exception):
    pass


def read_rows(path: str) -> list[dict[str, str]]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise RenderError(str(exc)) from exc
    if not rows:
        raise RenderError("no data rows")
    return rows


def column(rows: list[dict[str, str]], name: str, cast=float) -> list:
    """One CSV column, cast cell by cell; blank cells become None."""
    if name not in rows[0]:
        raise RenderError(f"missing column: {name}")
    out = []
    for row in rows:
        cell = row[name]
        out.append(None if cell in ("", None) else cast(cell))
    return out


def _pairs(x, y):
    """Drop entries where either coordinate is an empty cell."""
    kept = [(a, b) for a, b in zip(x, y) if a is not None and b is not None]
    return [a for a, _ in kept], [b for _, b in kept]


def render_sg_error(rows, ax):
    p = column(rows, "p_xi")
    series = {}
    for name, label in [
        ("E_full_L2", "full L2"),
        ("E_mean_L2", "mean L2"),
        ("E_var_L2", "var L2"),
        ("E_trunc", "analytic truncation"),
    ]:
        x, y = _pairs(p, column(rows, name))
        style = "k--" if name == "E_trunc" else "o-"
        ax.plot(x, y, style, label=label)
        series[label] = (x, y)
    ax.set_yscale("log")
    ax.set_xlabel("stochastic degree p")
    ax.set_ylabel("error")
    ax.legend()
    return series


def render_rates(rows, ax):
    p = column(rows, "p_xi")
    series = {}
    width = 0.35
    for i, (name, label) in enumerate(
        [("r_p_full", "degree rate"), ("r_xi_full", "dimension rate")]
    ):
        x, y = _pairs(p, column(rows, name))
        ax.bar([v + (i - 0.5) * width for v in x], y, width=width, label=label)
        series[label] = (x, y)
    ax.set_xlabel("stochastic degree p")
    ax.set_ylabel("observed rate")
    ax.legend()
    return series


def render_work(rows, ax):
    x, y = _pairs(column(rows, "p_xi"), column(rows, "W"))
    ax.plot(x, y, "s-", label="W")
    ax.set_yscale("log")
    ax.set_xlabel("stochastic degree p")
    ax.set_ylabel("work proxy W")
    ax.legend()
    return {"W": (x, y)}


def render_solver(rows, fig):
    ax1, ax2 = fig.subplots(1, 2)
    p = column(rows, "p_xi")
    series = {}
    x, y = _pairs(p, column(rows, "avg_fgmres"))
    ax1.plot(x, y, "o-", label="avg FGMRES iters")
    ax1.set_xlabel("stochastic degree p")
    ax1.set_ylabel("iterations per slab")
    ax1.legend()
    series["avg FGMRES iters"] = (x, y)
    bottom = [0.0] * len(p)
    for name in ("apply_s", "prec_s", "solve_s"):
        y = [v or 0.0 for v in column(rows, name)]
        ax2.bar(p, y, bottom=bottom, label=name)
        series[name] = (p, y)
        bottom = [b + v for b, v in zip(bottom, y)]
    ax2.set_xlabel("stochastic degree p")
    ax2.set_ylabel("seconds")
    ax2.legend()
    return series


def render_mc(rows, ax):
    n = column(rows, "N_mc")
    series = {}
    for name, label in [
        ("E_tot_mean_L2", "total mean"),
        ("E_ex_mean_L2", "sampling mean"),
        ("E_tot_var_L2", "total var"),
        ("E_ex_var_L2", "sampling var"),
    ]:
        x, y = _pairs(n, column(rows, name))
        if x:
            ax.loglog(x, y, "o-", label=label)
            series[label] = (x, y)
    ax.set_xlabel("N samples")
    ax.set_ylabel("error")
    ax.legend()
    return series


def render_work_accuracy(rows, ax):
    methods = column(rows, "method", cast=str)
    wall = column(rows, "wall_s")
    series = {}
    for err_col, marker in [("E_mean_L2", "o"), ("E_var_L2", "s")]:
        errs = column(rows, err_col)
        for method in sorted(set(methods)):
            x, y = _pairs(
                [w if m == method else None for m, w in zip(methods, wall)], errs
            )
            if x:
                label = f"{method} {err_col}"
                ax.loglog(x, y, marker, label=label)
                series[label] = (x, y)
    ax.set_xlabel("wall time [s]")
    ax.set_ylabel("error")
    ax.legend()
    return series


SINGLE_AXIS_KINDS = {
    "sg-error": render_sg_error,
    "rates": render_rates,
    "work": render_work,
    "mc": render_mc,
    "work-accuracy": render_work_accuracy,
}
KINDS = tuple(SINGLE_AXIS_KINDS) + ("solver",)


def render(kind: str, csv_path: str, out_path: str) -> dict:
    """Render one figure; returns the plotted series {label: (x, y)}."""
    rows = read_rows(csv_path)
    if kind == "solver":
        fig = plt.figure(figsize=(9, 4))
        series = render_solver(rows, fig)
    else:
        fig, ax = plt.subplots(figsize=(5.5, 4))
        series = SINGLE_AXIS_KINDS[kind](rows, ax)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return series


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--csv", required=True)
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    try:
        render(args.kind, args.csv, args.out)
    except RenderError as exc:
        print(f"render: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
