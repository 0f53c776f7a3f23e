"""Command-line front end: build protocols from JSON configs, run them, and
emit CSV reports plus serialized schedules.

Exit codes: 0 success, 1 malformed config, 2 validation failure,
3 solver failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from itertools import product
from pathlib import Path

import numpy as np

from . import protocols_fastcz as fastcz
from . import protocols_ms as ms
from .circuits import Circuit, circuit_from_json
from .hamiltonian import SPEC_VERSION, schedule_from_json, schedule_to_json, validate_norm_budget
from .oracle import full_state_evolve, hybrid_dicke_to_full
from .propagate import evolve, heisenberg_commutator_norm
from .reporting import evaluate_on_columns, evaluate_vs_state
from .spaces import AncillaSpace, build_collective_ops, embed_initial_state

PROTOCOLS = ("fast-cz", "fanout", "ghz", "w", "toffoli", "ms-exact",
             "fourier-layer", "circuit-seq", "circuit-par", "lr-probe")

REPORT_COLUMNS = [
    "spec_version", "protocol", "seed", "realization", "n_anc", "locality",
    "delta_t", "n", "v_degree", "flatness_order", "separation_sigmas",
    "squeeze_cap", "tuned", "total_time", "fair_total_time", "fidelity",
    "worst_case_error", "composite_error_bound", "n_invocations",
    "paper_budget_ok", "paper_budget_time", "fock_leakage",
    "dicke_boundary_weight", "budget_ratio_max", "dropped_norm",
    "closure_residual", "phase_achieved", "sqrtn_constant", "c_tilde",
    "commutator_norm", "rescale_lambda", "oracle_overlap_deficit",
]


class ConfigError(Exception):
    pass


class ValidationFailure(Exception):
    pass


def _fmt_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_csv(path: Path, columns, rows):
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt_cell(row.get(c)) for c in columns))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _fastcz_params(p: dict, n_anc=None) -> fastcz.FastCzParams:
    delta_t = float(p.get("delta_t", 0.3))
    _require(0.0 < delta_t < 1.0, f"delta_t = {delta_t} outside the allowed range (0, 1)")
    n = int(n_anc if n_anc is not None else p.get("n_anc", 64))
    n_targets = int(p.get("n_targets", 1))
    kwargs = dict(
        n_anc=n,
        locality=int(p.get("locality", 9)),
        delta_t=delta_t,
        control=0,
        targets=tuple(range(1, n_targets + 1)),
        v_degree=int(p.get("v_degree", 7)),
        flatness_order=int(p.get("flatness_order", 3)),
        separation_sigmas=float(p.get("separation_sigmas", 6.0)),
        squeeze_cap=(float(p["squeeze_cap"]) if p.get("squeeze_cap") is not None else None),
        tuned=bool(p.get("tuned", False)),
        k_hp=(int(p["k_hp"]) if p.get("k_hp") is not None else None),
        fock_cutoff=(int(p["fock_cutoff"]) if p.get("fock_cutoff") is not None else None),
    )
    try:
        return fastcz.FastCzParams(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc))


def _base_row(protocol, seed, p):
    return {
        "spec_version": SPEC_VERSION,
        "protocol": protocol,
        "seed": seed,
        "realization": p.get("realization", ""),
        "n_anc": p.get("n_anc"),
        "locality": p.get("locality"),
        "delta_t": p.get("delta_t"),
        "n": p.get("n"),
        "v_degree": p.get("v_degree"),
        "flatness_order": p.get("flatness_order"),
        "separation_sigmas": p.get("separation_sigmas"),
        "squeeze_cap": p.get("squeeze_cap"),
        "tuned": p.get("tuned"),
    }


def _report_into_row(row, rep):
    row.update({
        "total_time": rep.total_time,
        "fidelity": rep.fidelity,
        "worst_case_error": rep.worst_case_error,
        "fair_total_time": rep.solved_params.get("fair_total_time"),
        "paper_budget_ok": rep.diagnostics.get("paper_budget_ok"),
        "paper_budget_time": rep.diagnostics.get("paper_budget_time"),
        "fock_leakage": rep.diagnostics.get("fock_leakage"),
        "dicke_boundary_weight": rep.diagnostics.get("dicke_boundary_weight"),
        "budget_ratio_max": rep.diagnostics.get("budget_ratio_max"),
        "dropped_norm": rep.diagnostics.get("dropped_norm"),
        "closure_residual": rep.solved_params.get("closure_residual"),
        "phase_achieved": rep.solved_params.get("phase_achieved"),
        "sqrtn_constant": rep.solved_params.get("sqrtn_constant"),
        "c_tilde": rep.solved_params.get("c_tilde"),
    })
    return row


def _oracle_cross_check(sched, data_qubits, rng) -> float:
    """Overlap deficit between the engine (Dicke) and the full-state oracle."""
    if sched.ancilla.mode != "dicke":
        return None
    if len(data_qubits) + sched.n_anc > 14:
        return None
    nd = len(data_qubits)
    psi = rng.normal(size=2**nd) + 1j * rng.normal(size=2**nd)
    psi /= np.linalg.norm(psi)
    st = embed_initial_state(psi, sched.ancilla, data_qubits)
    fin = evolve(st, sched)
    emb = hybrid_dicke_to_full(fin)
    full = full_state_evolve(sched, psi, data_qubits)
    return float(1.0 - abs(np.vdot(emb, full)) ** 2)


def run_protocol(protocol: str, p: dict, seed: int, out_dir: Path | None = None,
                 oracle: bool = False):
    """Run one protocol instance; returns (row dict, schedule or None)."""
    rng = np.random.default_rng(seed)
    row = _base_row(protocol, seed, p)
    realization = p.get("realization", "spin")
    sched = None

    if protocol in ("fast-cz", "fanout"):
        params = _fastcz_params(p)
        runner = fastcz.run_fast_cz if protocol == "fast-cz" else fastcz.run_fanout
        rep = runner(params, realization)
        builder = (fastcz.build_fast_cz_schedule if protocol == "fast-cz"
                   else fastcz.build_fanout_schedule)
        sched, _ = builder(params, realization)
        _report_into_row(row, rep)
        if oracle and realization == "spin":
            row["oracle_overlap_deficit"] = _oracle_cross_check(
                sched, params.data_qubits, rng)
    elif protocol in ("ghz", "w", "toffoli"):
        n = int(p.get("n", 3))
        row["n"] = n
        params = _fastcz_params(p)
        builder = {"ghz": fastcz.build_ghz_schedule, "w": fastcz.build_w_schedule,
                   "toffoli": fastcz.build_cn_toffoli_schedule}[protocol]
        compiled = builder(n, params, realization)
        sched = compiled.schedule
        if protocol == "toffoli":
            nreg = len(compiled.notes["register"])
            cols = [i for i in range(2 ** len(compiled.data_qubits))
                    if (i & ((1 << nreg) - 1)) == 0]
            worst, fid, diags = evaluate_on_columns(
                sched, compiled.data_qubits, compiled.target_unitary, cols)
        else:
            fid, worst, _ = evaluate_vs_state(sched, compiled.data_qubits,
                                              compiled.input_state, compiled.target_state)
        budget_ok = None
        if compiled.builds:
            budget_ok = all(b.paper_budget_ok for b in compiled.builds)
        row.update({"total_time": sched.total_time, "fidelity": fid,
                    "worst_case_error": worst,
                    "composite_error_bound": compiled.composite_error_bound,
                    "n_invocations": compiled.n_invocations,
                    "paper_budget_ok": budget_ok})
    elif protocol == "ms-exact":
        n = int(p.get("n_anc", 64))
        row["n_anc"] = n
        angles = ms.solve_ms_angles(n)
        rep = ms.run_single_cz_exact(n, angles)
        sched = ms.build_single_cz_schedule(n, angles)
        _report_into_row(row, rep)
        if p.get("trace") and out_dir is not None:
            _write_ms_trace(out_dir, n, angles, int(p.get("trace_substeps", 24)))
    elif protocol == "fourier-layer":
        n = int(p.get("n_anc", 8))
        gates = [tuple(g) for g in p.get("gates", [[0, 1]])]
        layer = ms.LayerSpec(gates)
        rep = ms.run_fourier_layer(layer, n, float(p.get("delta_t", 0.3)),
                                   n_random_inputs=int(p.get("n_random_inputs", 20)),
                                   seed=seed,
                                   track_excitation=bool(p.get("track_excitation", False)))
        sched, _ = ms.build_fourier_layer_schedule(layer, n, float(p.get("delta_t", 0.3)))
        _report_into_row(row, rep)
    elif protocol == "circuit-seq":
        circuit = _load_circuit(p)
        params = _fastcz_params(p)
        compiled = fastcz.compile_circuit_sequential(circuit, params, realization)
        sched = compiled.schedule
        row.update({"total_time": sched.total_time,
                    "composite_error_bound": compiled.composite_error_bound,
                    "n_invocations": compiled.n_invocations,
                    "paper_budget_ok": compiled.notes["total_time"]
                    <= compiled.notes["budget_total"]})
    elif protocol == "circuit-par":
        circuit = _load_circuit(p)
        n = int(p.get("n_anc", 16))
        sched, budget = ms.compile_circuit_parallel(circuit, n, float(p.get("delta_t", 0.3)))
        row.update({"n_anc": n, "total_time": sched.total_time,
                    "c_tilde": budget["c_tilde"] if budget else None})
    elif protocol == "lr-probe":
        row_update, sched = _run_lr_probe(p)
        row.update(row_update)
    else:
        raise ConfigError(f"unknown protocol {protocol!r}; choose from {PROTOCOLS}")

    if out_dir is not None and sched is not None:
        (out_dir / "schedule.json").write_text(schedule_to_json(sched), encoding="utf-8")
    return row, sched


def _load_circuit(p: dict) -> Circuit:
    if "circuit_file" in p:
        return circuit_from_json(Path(p["circuit_file"]).read_text(encoding="utf-8"))
    if "circuit" in p:
        return circuit_from_json(json.dumps(p["circuit"]))
    raise ConfigError("circuit protocols need 'circuit' or 'circuit_file'")


def _run_lr_probe(p: dict):
    from .hamiltonian import Schedule as Sch
    from .hamiltonian import Term

    n_anc = int(p.get("n_anc", 8))
    alpha = float(p.get("alpha", 0.5))
    sdim = int(p.get("spatial_dim", 1))
    params = _fastcz_params({**p, "n_anc": n_anc,
                             "locality": int(p.get("locality", 2)),
                             "v_degree": int(p.get("v_degree", 1)),
                             "flatness_order": int(p.get("flatness_order", 0))})
    sched, build = fastcz.build_fast_cz_schedule(params, "spin")
    full_sched = Sch(sched.elements, AncillaSpace.full_qubit(n_anc), sched.n_tot,
                     sched.locality, sched.n_anc, sched.global_phase)
    normed = fastcz.rescale_to_budget(full_sched)
    coords = {i: float(i) for i in range(sched.n_tot)}
    resc, info = fastcz.rescale_for_powerlaw(normed, alpha, sdim, coords)
    cn = heisenberg_commutator_norm(resc, Term(1.0, {0: "X"}), Term(1.0, {1: "X"}),
                                    (0, 1))
    row = {"n_anc": n_anc, "total_time": resc.total_time, "commutator_norm": cn,
           "rescale_lambda": info["lambda"],
           "paper_budget_ok": info["cap_ok"]}
    return row, resc


def _write_ms_trace(out_dir: Path, n: int, angles, substeps: int):
    """Per-sector collective-polarization trajectories of the single-CZ loop."""
    sched = ms.build_single_cz_schedule(n, angles)
    ops = build_collective_ops(sched.ancilla)
    trace_ops = {"x": np.asarray(ops.X), "y": np.asarray(ops.Y)}
    lines = ["sector,t,x_over_n,y_over_n"]
    for idx, label in enumerate(("00", "01", "10", "11")):
        data = np.zeros(4, dtype=complex)
        data[idx] = 1.0
        st = embed_initial_state(data, sched.ancilla, (0, 1))
        fin = evolve(st, sched, trace_ops=trace_ops, trace_substeps=substeps)
        for entry in fin.diagnostics.trace:
            lines.append(f"{label},{_fmt_cell(entry['t'])},"
                         f"{_fmt_cell(entry['x'] / n)},{_fmt_cell(entry['y'] / n)}")
    (out_dir / "state_trace.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _load_config(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}")


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    protocol = cfg.get("protocol")
    _require(protocol in PROTOCOLS,
             f"protocol {protocol!r} not recognized; choose from {PROTOCOLS}")
    params = cfg.get("params", {})
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        row, sched = run_protocol(protocol, params, args.seed, out_dir,
                                  oracle=args.oracle)
    except (RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return 2
    write_csv(out_dir / "report.csv", REPORT_COLUMNS, [row])
    if params.get("dump_state") and sched is not None:
        _dump_final_state(out_dir, sched, params)
    print(f"wrote {out_dir / 'report.csv'}")
    return 0


def _dump_final_state(out_dir: Path, sched, params):
    nd = len([q for q in range(sched.n_tot - sched.n_anc)])
    nd = min(nd, 10)
    data = np.zeros(2**nd, dtype=complex)
    data[0] = 1.0
    st = embed_initial_state(data, sched.ancilla, tuple(range(nd)))
    fin = evolve(st, sched)
    lines = ["index,re,im"]
    amp = fin.amplitudes
    for i, v in enumerate(amp):
        lines.append(f"{i},{_fmt_cell(float(v.real))},{_fmt_cell(float(v.imag))}")
    (out_dir / "state_final.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


SCAN_COLUMNS = REPORT_COLUMNS + ["slope_logT_logN", "slope_logT_stderr",
                                 "slope_logerr_logN", "slope_logerr_stderr"]

MAX_GRID_POINTS = 10_000


def cmd_scan(args) -> int:
    cfg = _load_config(args.config)
    protocol = cfg.get("protocol")
    _require(protocol in PROTOCOLS,
             f"protocol {protocol!r} not recognized; choose from {PROTOCOLS}")
    base = cfg.get("params", {})
    grid = cfg.get("grid", {})
    _require(isinstance(grid, dict) and grid, "scan config needs a non-empty 'grid'")
    keys = sorted(grid)
    values = [grid[k] for k in keys]
    points = list(product(*values))
    if len(points) > MAX_GRID_POINTS:
        print(f"grid too large: {len(points)} > {MAX_GRID_POINTS}", file=sys.stderr)
        return 2

    def run_point(pt):
        pdict = dict(base)
        pdict.update(dict(zip(keys, pt)))
        row, _ = run_protocol(protocol, pdict, args.seed)
        for k, v in zip(keys, pt):
            if k in REPORT_COLUMNS:
                row[k] = v
        row["_point"] = pt
        return row

    try:
        if args.threads > 1:
            with ThreadPoolExecutor(max_workers=args.threads) as pool:
                rows = list(pool.map(run_point, points))
        else:
            rows = [run_point(pt) for pt in points]
    except (RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return 2
    rows.sort(key=lambda r: r["_point"])

    _fit_slopes(rows, keys)
    for r in rows:
        r.pop("_point", None)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "scan.csv", SCAN_COLUMNS, rows)
    print(f"wrote {out_dir / 'scan.csv'}")
    return 0


def _fit_slopes(rows, grid_keys):
    """Log-log fits of T and error against n_anc within fixed other-params."""
    if "n_anc" not in grid_keys:
        return
    other = [k for k in grid_keys if k != "n_anc"]
    groups: dict = {}
    for r in rows:
        key = tuple(r["_point"][grid_keys.index(k)] for k in other)
        groups.setdefault(key, []).append(r)
    for members in groups.values():
        ns = np.array([float(r["n_anc"]) for r in members])
        if len(set(ns)) < 2:
            continue
        logn = np.log(ns)
        for src, dst in (("total_time", "slope_logT"), ("worst_case_error", "slope_logerr")):
            vals = np.array([r.get(src) or np.nan for r in members], dtype=float)
            if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
                continue
            if len(ns) >= 3:
                coef, cov = np.polyfit(logn, np.log(vals), 1, cov=True)
                stderr = float(np.sqrt(cov[0, 0]))
            else:
                coef = np.polyfit(logn, np.log(vals), 1)
                stderr = 0.0
            for r in members:
                r[dst + "_logN"] = float(coef[0])
                r[dst + "_stderr"] = stderr


def cmd_validate(args) -> int:
    try:
        sched = schedule_from_json(Path(args.schedule).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"malformed schedule file: {exc}", file=sys.stderr)
        return 1
    worst_ratio = 0.0
    worst_desc = "no constrained tuples"
    ok = True
    for seg in sched.segments():
        verdict = validate_norm_budget(seg.spec)
        if verdict.worst_ratio > worst_ratio:
            worst_ratio = verdict.worst_ratio
            worst_desc = verdict.worst_description
        ok = ok and verdict.ok
    print(f"budget {'OK' if ok else 'VIOLATION'}: worst ratio {worst_ratio:.6g}")
    print(f"worst tuple: {worst_desc}")
    return 0 if ok else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="a2aham",
        description="Simulator and schedule compiler for fast all-to-all-Hamiltonian "
                    "computation protocols")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one protocol from a JSON config")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--threads", type=int, default=1)
    sim.add_argument("--oracle", action="store_true",
                     help="full-state cross-check where the size permits")
    sim.set_defaults(func=cmd_simulate)

    scan = sub.add_parser("scan", help="run a parameter grid and fit scalings")
    scan.add_argument("--config", required=True)
    scan.add_argument("--out", required=True)
    scan.add_argument("--seed", type=int, required=True)
    scan.add_argument("--threads", type=int, default=1)
    scan.set_defaults(func=cmd_scan)

    val = sub.add_parser("validate", help="check a schedule file against the "
                                          "coupling budget")
    val.add_argument("schedule")
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
