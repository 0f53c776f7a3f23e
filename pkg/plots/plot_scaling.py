#!/usr/bin/env python3
"""Regenerate scaling and trajectory figures from the simulator's CSV output.

Reads scan.csv (as written by `a2aham scan`) and optionally a state_trace.csv
(from `a2aham simulate` with "trace": true) and renders:

* log-log evolution-time and error vs ancilla count, with the fitted slope
  annotated on each panel;
* the four per-sector collective-polarization trajectories of the single-CZ
  loop on the (x/N, y/N) plane, start/end markers included.

Figures are pure functions of the input CSVs: fixed style, no timestamps.
Usage: plot_scaling.py <scan.csv> --out <dir> [--trace <state_trace.csv>]
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "a2aham-plots"

import matplotlib.pyplot as plt
import numpy as np

SCAN_REQUIRED = ("protocol", "n_anc", "total_time", "worst_case_error")
TRACE_REQUIRED = ("sector", "t", "x_over_n", "y_over_n")

SECTOR_COLORS = {"00": "#1f77b4", "01": "#ff7f0e", "10": "#2ca02c", "11": "#d62728"}


class SchemaError(Exception):
    pass


def _read_csv(path: Path, required) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, nothing to plot")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows, nothing to plot")
    return rows


def _floats(rows, column):
    out = []
    for r in rows:
        v = r.get(column, "")
        out.append(float(v) if v not in ("", None) else np.nan)
    return np.array(out)


def _fit_slope(x, y):
    if len(x) >= 3:
        coef, cov = np.polyfit(np.log(x), np.log(y), 1, cov=True)
        return float(coef[0]), float(np.sqrt(cov[0, 0]))
    coef = np.polyfit(np.log(x), np.log(y), 1)
    return float(coef[0]), 0.0


def _save(fig, out_dir: Path, stem: str):
    written = []
    for ext in ("png", "svg"):
        path = out_dir / f"{stem}.{ext}"
        fig.savefig(path, dpi=150, metadata={"Date": None} if ext == "svg" else None)
        written.append(path)
    plt.close(fig)
    return written


def plot_scaling(scan_csv: Path, out_dir: Path) -> list[Path]:
    """Log-log T and error against ancilla count with slope annotations."""
    rows = _read_csv(scan_csv, SCAN_REQUIRED)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = _floats(rows, "n_anc")
    written = []
    panels = [("total_time", "evolution time T", "time_vs_n"),
              ("worst_case_error", "worst-case error", "error_vs_n")]
    for column, label, stem in panels:
        y = _floats(rows, column)
        good = np.isfinite(n) & np.isfinite(y) & (y > 0)
        if good.sum() < 2:
            continue
        fig, ax = plt.subplots(figsize=(4.6, 3.4), constrained_layout=True)
        ax.loglog(n[good], y[good], "o-", color="#1f77b4", markersize=5)
        slope, err = _fit_slope(n[good], y[good])
        ax.annotate(f"slope = {slope:.2f} ± {err:.2f}",
                    xy=(0.05, 0.08), xycoords="axes fraction", fontsize=10)
        ax.set_xlabel("ancilla count N")
        ax.set_ylabel(label)
        ax.set_title(f"{rows[0]['protocol']}: {label} vs N")
        ax.grid(True, which="both", alpha=0.3)
        written += _save(fig, out_dir, stem)
    if not written:
        raise SchemaError(f"{scan_csv}: no positive finite series to plot")
    return written


def plot_trajectory(trace_csv: Path, out_dir: Path) -> list[Path]:
    """Per-sector phase-space loops of the collective polarization."""
    rows = _read_csv(trace_csv, TRACE_REQUIRED)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(4.2, 4.2), constrained_layout=True)
    sectors = sorted({r["sector"] for r in rows})
    for sector in sectors:
        pts = [(float(r["t"]), float(r["x_over_n"]), float(r["y_over_n"]))
               for r in rows if r["sector"] == sector]
        pts.sort()
        x = np.array([p[1] for p in pts])
        y = np.array([p[2] for p in pts])
        color = SECTOR_COLORS.get(sector)
        ax.plot(x, y, "-", color=color, label=f"$z_0 z_1$ sector {sector}", lw=1.4)
        ax.plot(x[0], y[0], "o", color=color, markersize=7, fillstyle="none")
        ax.plot(x[-1], y[-1], "x", color=color, markersize=7)
    ax.set_xlabel(r"$\langle X \rangle / N$")
    ax.set_ylabel(r"$\langle Y \rangle / N$")
    ax.set_title("single-CZ collective trajectories")
    ax.axhline(0, color="gray", lw=0.5)
    ax.axvline(0, color="gray", lw=0.5)
    ax.set_aspect("equal")
    ax.legend(fontsize=7, loc="upper right")
    return _save(fig, out_dir, "trajectory")


def loop_closure_error(trace_csv: Path) -> float:
    """Largest start-to-end distance over sectors, in (x/N, y/N) units."""
    rows = _read_csv(trace_csv, TRACE_REQUIRED)
    worst = 0.0
    for sector in sorted({r["sector"] for r in rows}):
        pts = [(float(r["t"]), float(r["x_over_n"]), float(r["y_over_n"]))
               for r in rows if r["sector"] == sector]
        pts.sort()
        dx = pts[-1][1] - pts[0][1]
        dy = pts[-1][2] - pts[0][2]
        worst = max(worst, float(np.hypot(dx, dy)))
    return worst


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("scan_csv", type=Path)
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("--trace", type=Path, default=None,
                        help="state_trace.csv for the trajectory panel")
    args = parser.parse_args(argv)
    try:
        written = plot_scaling(args.scan_csv, args.out)
        if args.trace is not None:
            written += plot_trajectory(args.trace, args.out)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
