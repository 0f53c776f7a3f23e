"""Tests for the figure regeneration scripts, including the secondary
acceptance run: slope annotation from the exact single-CZ scan and a closed
trajectory loop, produced end-to-end through the simulator CLI."""
import subprocess
import sys
import time
from pathlib import Path

import pytest

PLOTS_DIR = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(PLOTS_DIR))

import plot_scaling  # noqa: E402


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


SCAN_FIXTURE = """protocol,n_anc,total_time,worst_case_error
ms-exact,64,0.3127,0.001
ms-exact,256,0.15658,0.0005
ms-exact,1024,0.078322,0.00025
"""

TRACE_FIXTURE_HEADER = "sector,t,x_over_n,y_over_n\n"


def test_scaling_plot_from_fixture(tmp_path):
    scan = _write(tmp_path / "scan.csv", SCAN_FIXTURE)
    written = plot_scaling.plot_scaling(scan, tmp_path / "fig")
    names = {p.name for p in written}
    assert {"time_vs_n.png", "time_vs_n.svg", "error_vs_n.png",
            "error_vs_n.svg"} <= names
    svg = (tmp_path / "fig" / "time_vs_n.svg").read_text()
    assert "slope = -0.50" in svg


def test_missing_column_is_reported(tmp_path):
    scan = _write(tmp_path / "scan.csv", "protocol,n_anc\nms-exact,64\n")
    with pytest.raises(plot_scaling.SchemaError, match="total_time"):
        plot_scaling.plot_scaling(scan, tmp_path / "fig")


def test_empty_csv_errors_and_writes_nothing(tmp_path):
    scan = _write(tmp_path / "scan.csv", "")
    out = tmp_path / "fig"
    code = plot_scaling.main([str(scan), "--out", str(out)])
    assert code == 1
    assert not out.exists() or not list(out.iterdir())


def test_trajectory_fixture_closure(tmp_path):
    rows = [TRACE_FIXTURE_HEADER]
    import numpy as np

    for sector in ("00", "11"):
        sign = 1.0 if sector == "00" else -1.0
        for t in np.linspace(0, 1, 21):
            x = 0.1 * np.sin(2 * np.pi * t) * sign
            y = 0.1 * (np.cos(2 * np.pi * t) - 1.0)
            rows.append(f"{sector},{t},{x},{y}\n")
    trace = _write(tmp_path / "trace.csv", "".join(rows))
    written = plot_scaling.plot_trajectory(trace, tmp_path / "fig")
    assert {p.name for p in written} == {"trajectory.png", "trajectory.svg"}
    assert plot_scaling.loop_closure_error(trace) < 1e-12


def test_figures_are_deterministic(tmp_path):
    scan = _write(tmp_path / "scan.csv", SCAN_FIXTURE)
    plot_scaling.plot_scaling(scan, tmp_path / "a")
    plot_scaling.plot_scaling(scan, tmp_path / "b")
    assert (tmp_path / "a" / "time_vs_n.svg").read_bytes() == \
        (tmp_path / "b" / "time_vs_n.svg").read_bytes()


def test_criterion_11_end_to_end(tmp_path):
    """[SECONDARY] slope annotation from the criterion-5 scan + closed loop."""
    t0 = time.time()
    scan_cfg = tmp_path / "scan_cfg.json"
    scan_cfg.write_text(
        '{"protocol": "ms-exact", "params": {}, "grid": {"n_anc": [64, 256, 1024]}}',
        encoding="utf-8")
    subprocess.run([sys.executable, "-m", "a2aham.cli", "scan", "--config",
                    str(scan_cfg), "--out", str(tmp_path / "scan"), "--seed", "3"],
                   check=True)
    sim_cfg = tmp_path / "sim_cfg.json"
    sim_cfg.write_text(
        '{"protocol": "ms-exact", "params": {"n_anc": 64, "trace": true}}',
        encoding="utf-8")
    subprocess.run([sys.executable, "-m", "a2aham.cli", "simulate", "--config",
                    str(sim_cfg), "--out", str(tmp_path / "sim"), "--seed", "3"],
                   check=True)

    out = tmp_path / "fig"
    code = plot_scaling.main([str(tmp_path / "scan" / "scan.csv"),
                              "--out", str(out),
                              "--trace", str(tmp_path / "sim" / "state_trace.csv")])
    assert code == 0
    svg = (out / "time_vs_n.svg").read_text()
    assert "slope = -0.50" in svg
    assert (out / "trajectory.svg").exists()
    # the loop returns to the north pole: start and end coincide
    closure = plot_scaling.loop_closure_error(tmp_path / "sim" / "state_trace.csv")
    assert closure < 1e-6
    elapsed = time.time() - t0
    print(f"\nCRITERION 11 [SECONDARY]: PASS ({elapsed:.1f} s, budget 30 s)")
    assert elapsed < 30.0
