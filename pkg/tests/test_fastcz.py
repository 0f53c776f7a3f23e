import numpy as np
import pytest

from a2aham import (AncillaSpace, FastCzParams, Schedule, build_collective_ops,
                    build_fanout_schedule, build_fast_cz_schedule, build_ghz_schedule,
                    build_w_schedule, build_cn_toffoli_schedule,
                    compile_circuit_sequential, design_potential, embed_initial_state,
                    evolve, fanout_unitary, rescale_for_powerlaw, rescale_to_budget,
                    run_fanout, run_fast_cz, validate_norm_budget)
from a2aham.circuits import Circuit, Layer
from a2aham.propagate import schedule_unitary
from a2aham.reporting import evaluate_on_columns, evaluate_vs_state


def small_params(**over):
    base = dict(n_anc=24, locality=9, delta_t=0.5, v_degree=7, flatness_order=3,
                separation_sigmas=12.0, squeeze_cap=8.0, tuned=True, k_hp=3)
    base.update(over)
    return FastCzParams(**base)


# --- potential design -------------------------------------------------------

def test_potential_linear_case():
    d = design_potential(64, 2.0, 1, 0)
    assert np.allclose(d.powers, [1])
    assert np.isclose(d.coeffs[0], np.sqrt(128.0))
    assert np.isclose(d.t_phase, (np.pi / 4) / (np.sqrt(128.0) * 2.0))


def test_potential_is_odd():
    d = design_potential(32, 3.0, 9, 4)
    rng = np.random.default_rng(0)
    for x in rng.uniform(-4, 4, size=20):
        assert abs(d.value(x) + d.value(-x)) < 1e-12 * max(1.0, abs(d.value(x)))


def test_potential_flatness_conditions():
    d = design_potential(50, 2.5, 7, 3)
    h = 1e-4
    xs = d.x_flat + h * np.array([-2, -1, 0, 1, 2])
    vals = np.array([d.value(x) for x in xs])
    first = (vals[3] - vals[1]) / (2 * h)
    second = (vals[3] - 2 * vals[2] + vals[1]) / h**2
    assert abs(first) < 1e-4 * abs(d.value_at_flat)
    assert abs(second) < 1e-2 * abs(d.value_at_flat)
    assert np.isclose(d.value(d.x_flat), d.value_at_flat)


def test_potential_conditioning_guard():
    with pytest.raises(ValueError, match="condition"):
        design_potential(64, 3.0, 41, 20)


def test_potential_flat_variance_improvement():
    # phase variance of exp(-i T V(x)) over the amplified packet drops by >= 10x
    # against the linear potential (expectation values in the boson space)
    n = 64
    p = small_params(n_anc=n, tuned=False)
    t_s, t_cd = p.stage_times()
    space = AncillaSpace.fock(300)
    ops = build_collective_ops(space)
    hs = 1j * (n / 2) * (ops.b @ ops.b - ops.bdag @ ops.bdag)
    vac = np.zeros(space.dim, dtype=complex)
    vac[0] = 1.0

    def step(h, psi, t):
        w, v = np.linalg.eigh((h + h.conj().T) / 2)
        return v @ (np.exp(-1j * w * t) * (v.conj().T @ psi))

    pkt = step(hs, vac, t_s)
    pkt = step(np.sqrt(2 * n) * ops.p, pkt, t_cd)
    pkt = step(hs, pkt, -t_s)

    def phase_variance(degree, r):
        d = design_potential(n, p.x0, degree, r)
        vm = sum(c * np.linalg.matrix_power(ops.x, int(pw))
                 for pw, c in zip(d.powers, d.coeffs))
        tv = d.t_phase * vm
        m1 = np.real(pkt.conj() @ (tv @ pkt))
        m2 = np.real(pkt.conj() @ (tv @ tv @ pkt))
        return m2 - m1**2

    assert phase_variance(1, 0) / phase_variance(7, 3) >= 10.0


# --- fast CZ ----------------------------------------------------------------

def test_boson_fast_cz_process_fidelity():
    p = small_params(n_anc=64, separation_sigmas=14.0, v_degree=9, flatness_order=4,
                     squeeze_cap=16.0)
    rep = run_fast_cz(p, "boson")
    assert rep.fidelity >= 0.999
    assert rep.diagnostics["fock_leakage"] < 1e-6


def test_spin_fast_cz_trivial_input_and_phases():
    p = small_params()
    sched, build = build_fast_cz_schedule(p, "spin")
    rep = run_fast_cz(p, "spin")
    # |00> is left alone up to the reported error
    st = embed_initial_state(np.array([1.0, 0, 0, 0]), sched.ancilla, p.data_qubits)
    fin = evolve(st, sched)
    ideal = np.zeros_like(fin.amps)
    ideal[0, 0] = 1.0
    assert np.linalg.norm(fin.amps - ideal) <= rep.worst_case_error + 1e-12

    # relative phases (0, 0, 0, pi) within arccos(fidelity)
    outs = []
    for idx in range(4):
        inp = np.zeros(4)
        inp[idx] = 1.0
        st = embed_initial_state(inp, sched.ancilla, p.data_qubits)
        outs.append(evolve(st, sched).amps[idx, 0])
    rel = np.angle(np.array(outs) / outs[0])
    target = np.array([0.0, 0.0, 0.0, np.pi])
    tol = np.arccos(min(rep.fidelity, 1.0)) + 1e-6
    dev = np.abs(np.angle(np.exp(1j * (rel - target))))
    assert dev.max() <= 3 * tol + 1e-6


def test_spin_error_decreases_with_ancilla_count():
    errs = []
    for n in (32, 64):
        p = FastCzParams(n_anc=n, locality=9, delta_t=0.5, v_degree=7,
                         flatness_order=3, separation_sigmas=12.0)
        errs.append(run_fast_cz(p, "spin").worst_case_error)
    assert errs[1] < errs[0]


def test_ancilla_disentanglement_invariant():
    p = small_params()
    sched, _ = build_fast_cz_schedule(p, "spin")
    rep = run_fast_cz(p, "spin")
    for idx in range(4):
        inp = np.zeros(4)
        inp[idx] = 1.0
        st = embed_initial_state(inp, sched.ancilla, p.data_qubits)
        fin = evolve(st, sched)
        assert fin.ancilla_vacuum_weight() >= 1.0 - rep.worst_case_error**2 - 1e-12


def test_dicke_boundary_control():
    p = small_params(n_anc=48, tuned=False)
    rep = run_fast_cz(p, "spin")
    assert rep.diagnostics["dicke_boundary_weight"] <= 10 * rep.worst_case_error


def test_budget_rescale_makes_validator_pass():
    p = small_params(n_anc=16)
    sched, build = build_fast_cz_schedule(p, "spin")
    assert build.fair_total_time >= sched.total_time
    rescaled = rescale_to_budget(sched)
    for seg in rescaled.segments():
        assert validate_norm_budget(seg.spec).ok
    assert np.isclose(rescaled.total_time, build.fair_total_time + 0.0, rtol=1e-12)


def test_boson_spin_consistency_improves_with_series_order():
    # final-state overlap between realizations grows with the series order
    n = 64
    overlaps = []
    for k_hp in (0, 1, 2, 3):
        p = small_params(n_anc=n, k_hp=k_hp, tuned=False, locality=16,
                         squeeze_cap=16.0)
        sb, _ = build_fast_cz_schedule(p, "boson")
        ss, _ = build_fast_cz_schedule(p, "spin")
        inp = np.zeros(4)
        inp[3] = 1.0
        fb = evolve(embed_initial_state(inp, sb.ancilla, p.data_qubits), sb)
        fs = evolve(embed_initial_state(inp, ss.ancilla, p.data_qubits), ss)
        # number-state <-> excitation-number correspondence
        dim = min(fb.space.dim, fs.space.dim)
        ov = abs(np.vdot(fb.amps[:, :dim], fs.amps[:, :dim]))
        overlaps.append(ov)
    assert overlaps[3] > overlaps[0]
    assert overlaps[3] > 0.99


# --- fanout and derived circuits -------------------------------------------

def test_fanout_single_target_is_cnot():
    p = small_params()
    rep = run_fanout(p, "spin")
    cnot = fanout_unitary(1)
    assert np.allclose(cnot, np.array([[1, 0, 0, 0], [0, 1, 0, 0],
                                       [0, 0, 0, 1], [0, 0, 1, 0]]))
    assert rep.fidelity > 1.0 - 2 * rep.worst_case_error


def test_fanout_classical_control_flips_targets():
    p = small_params(targets=(1, 2))
    sched, _ = build_fanout_schedule(p, "spin")
    rep = run_fanout(p, "spin")
    inp = np.zeros(8)
    inp[4] = 1.0  # control=1, targets=00
    st = embed_initial_state(inp, sched.ancilla, p.data_qubits)
    fin = evolve(st, sched)
    ideal = np.zeros_like(fin.amps)
    ideal[7, 0] = 1.0  # all targets flipped
    assert np.linalg.norm(fin.amps - ideal) <= rep.worst_case_error + 1e-9


def test_ghz_matches_fanout_on_plus_control():
    p = small_params()
    ghz = build_ghz_schedule(3, p, "spin")
    fid, err, _ = evaluate_vs_state(ghz.schedule, ghz.data_qubits,
                                    ghz.input_state, ghz.target_state)
    assert fid >= 1.0 - 10 * ghz.composite_error_bound
    # direct fanout on |+>|00> gives the same cat state
    pf = small_params(targets=(1, 2))
    sched, _ = build_fanout_schedule(pf, "spin")
    plus = np.zeros(8, dtype=complex)
    plus[0] = plus[4] = 1 / np.sqrt(2)
    st = embed_initial_state(plus, sched.ancilla, pf.data_qubits)
    fin = evolve(st, sched)
    cat = np.zeros(8, dtype=complex)
    cat[0] = cat[7] = 1 / np.sqrt(2)
    ov = abs(np.vdot(cat, fin.amps[:, 0])) ** 2
    assert abs(ov - fid) < 0.02


def test_toffoli_truth_table_small():
    p = small_params()
    tof = build_cn_toffoli_schedule(2, p, "spin")
    nreg = len(tof.notes["register"])
    cols = [i for i in range(2 ** len(tof.data_qubits)) if (i & ((1 << nreg) - 1)) == 0]
    worst, fid_avg, _ = evaluate_on_columns(tof.schedule, tof.data_qubits,
                                            tof.target_unitary, cols)
    assert worst <= tof.composite_error_bound + 1e-9
    assert fid_avg > 0.99


def test_w_state_small():
    p = small_params()
    w = build_w_schedule(3, p, "spin")
    fid, err, _ = evaluate_vs_state(w.schedule, w.data_qubits, w.input_state,
                                    w.target_state)
    assert fid >= 1.0 - w.composite_error_bound
    assert w.composite_error_bound < 0.2


def test_w_needs_enough_overlap():
    # the exact one-round rotation exists for every n >= 2 (overlap >= 1/2)
    for n in (2, 3, 4, 5):
        amp2 = n * (1.0 / n) * (1 - 1.0 / n) ** (n - 1)
        assert amp2 >= 0.25


# --- sequential compilation and the power-law probe -------------------------

def test_compile_empty_circuit():
    p = small_params()
    compiled = compile_circuit_sequential(Circuit(3, []), p, "spin")
    assert compiled.schedule.total_time == 0.0
    assert compiled.n_invocations == 0


def test_compile_single_gate_time_matches():
    p = small_params()
    compiled = compile_circuit_sequential(Circuit(2, [Layer([(0, 1)])]), p, "spin")
    sched, _ = build_fast_cz_schedule(p, "spin")
    assert np.isclose(compiled.schedule.total_time, sched.total_time)
    assert compiled.n_invocations == 1


def test_compile_accounting_depth2():
    p = small_params()
    circ = Circuit(4, [Layer([(0, 1), (2, 3)]), Layer([(0, 2), (1, 3)])])
    compiled = compile_circuit_sequential(circ, p, "spin")
    acc = compiled.notes
    assert acc["n_gates"] == 4
    assert acc["depth"] == 2
    single, _ = build_fast_cz_schedule(p, "spin")
    assert np.isclose(acc["total_time"], 4 * single.total_time)
    assert acc["budget_total"] == 4 * p.paper_budget_time()


def test_rescale_alpha_zero_is_identity():
    p = small_params(n_anc=8, locality=2, v_degree=1, flatness_order=0, k_hp=0,
                     squeeze_cap=4.0)
    sched, _ = build_fast_cz_schedule(p, "spin")
    full = Schedule(sched.elements, AncillaSpace.full_qubit(8), sched.n_tot,
                    sched.locality, sched.n_anc, sched.global_phase)
    out, info = rescale_for_powerlaw(full, 0.0, 1, {i: float(i) for i in range(10)})
    assert np.isclose(info["lambda"], 1.0)
    assert np.isclose(out.total_time, full.total_time)


def test_rescale_preserves_unitary():
    p = small_params(n_anc=6, locality=2, v_degree=1, flatness_order=0, k_hp=0,
                     squeeze_cap=4.0)
    sched, _ = build_fast_cz_schedule(p, "spin")
    full = Schedule(sched.elements, AncillaSpace.full_qubit(6), sched.n_tot,
                    sched.locality, sched.n_anc, sched.global_phase)
    out, info = rescale_for_powerlaw(full, 0.7, 1, {i: float(i) for i in range(8)})
    u1 = schedule_unitary(full, (0, 1))
    u2 = schedule_unitary(out, (0, 1))
    assert np.abs(u1 - u2).max() < 1e-12
    assert np.isclose(out.total_time, full.total_time / info["lambda"])


def test_rescale_rejects_higher_locality():
    p = small_params()
    sched, _ = build_fast_cz_schedule(p, "spin")
    with pytest.raises(ValueError, match="2-local"):
        rescale_for_powerlaw(sched, 0.5, 1, {i: float(i) for i in range(sched.n_tot)})
