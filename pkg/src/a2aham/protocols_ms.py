"""Geometric-phase CZ via a four-stage collective-rotation loop, the
Fourier-focused parallel gate layer, and the randomizing twirl wrapper.

Per data sector (z0, z1 = +-1) every ancilla spin sees the same SU(2)
product U = e^{-iT4 z1 Y} e^{+iT3 z0 X} e^{-iT2 z1 Y} e^{-iT1 z0 X}
(third/fourth stages carry negative couplings).  Durations are solved so
that U is diagonal (the ancillae return to all-zero exactly) and the
collective phase N*arg(U00) equals pi/4, which flips sign with z0 z1 and
yields CZ after fixed single-qubit corrections.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import root

from .circuits import Circuit
from .hamiltonian import (AncillaPolynomial, HamiltonianSpec, RotationLayer,
                          Schedule, Segment, Term)
from .oracle import full_state_evolve
from .reporting import ProtocolReport, evaluate_vs_unitary
from .spaces import AncillaSpace

__all__ = [
    "MsAngles", "solve_ms_angles", "build_single_cz_schedule", "run_single_cz_exact",
    "LayerSpec", "build_fourier_layer_schedule", "run_fourier_layer",
    "compile_circuit_parallel", "twirl_randomize", "pauli_twirl_average",
]

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)

STAGE_SIGNS = (1.0, 1.0, -1.0, -1.0)


@dataclass
class MsAngles:
    t1: float
    t2: float
    t3: float
    t4: float
    closure_residual: float
    phase_achieved: float      # sector-phase difference, target pi/2
    n_anc: int
    seed_value: float
    max_seed_correction: float

    @property
    def durations(self):
        return (self.t1, self.t2, self.t3, self.t4)

    @property
    def total_time(self) -> float:
        return self.t1 + self.t2 + self.t3 + self.t4

    @property
    def sqrtn_constant(self) -> float:
        return self.total_time * np.sqrt(self.n_anc)


def _u2(axis, t):
    c, s = np.cos(t), np.sin(t)
    return np.eye(2, dtype=complex) * c - 1j * s * (_SX if axis == "x" else _SY)


def _sector_u(ts, z0, z1):
    u = _u2("x", STAGE_SIGNS[0] * z0 * ts[0])
    u = _u2("y", STAGE_SIGNS[1] * z1 * ts[1]) @ u
    u = _u2("x", STAGE_SIGNS[2] * z0 * ts[2]) @ u
    u = _u2("y", STAGE_SIGNS[3] * z1 * ts[3]) @ u
    return u


def solve_ms_angles(n: int, max_iterations: int = 200) -> MsAngles:
    """Stage durations closing the collective loop with an exact pi/2
    sector-phase difference.

    Unknowns (T1 = T2, T3, T4); residuals are the off-diagonal of the (+,+)
    sector SU(2) product and the per-spin phase against pi/(4n).  Seeded by
    the small-loop phase-area relation T1 = T2 = sqrt(pi/(8n)).
    """
    if n < 4:
        raise ValueError("need at least 4 ancilla spins")
    seed = float(np.sqrt(np.pi / (8.0 * n)))

    def residuals(v):
        ts = (v[0], v[0], v[1], v[2])
        u = _sector_u(ts, 1, 1)
        return [u[1, 0].real, u[1, 0].imag, n * np.angle(u[0, 0]) - np.pi / 4.0]

    sol = root(residuals, [seed] * 3, method="hybr", tol=1e-15,
               options={"maxfev": max_iterations * 4})
    res = np.abs(residuals(sol.x)).max()
    if res > 1e-10:
        raise RuntimeError(
            f"closure solver did not converge after {max_iterations} iterations: "
            f"max residual {res:.3g}, durations {sol.x}")
    ts = (float(sol.x[0]), float(sol.x[0]), float(sol.x[1]), float(sol.x[2]))
    u_pp = _sector_u(ts, 1, 1)
    u_pm = _sector_u(ts, 1, -1)
    closure = max(abs(u_pp[1, 0]), abs(u_pm[1, 0])) ** 2 * n  # return infidelity bound
    phase_diff = n * (np.angle(u_pp[0, 0]) - np.angle(u_pm[0, 0]))
    corr = float(np.abs(np.array(ts) / seed - 1.0).max())
    return MsAngles(*ts, closure_residual=float(closure),
                    phase_achieved=float(phase_diff), n_anc=n,
                    seed_value=seed, max_seed_correction=corr)


def _collective_term(coeff, qubit, symbol):
    return Term(coeff, {qubit: "Z"}, AncillaPolynomial.symbol(symbol))


def build_single_cz_schedule(n: int, angles: MsAngles | None = None,
                             qubits=(0, 1)) -> Schedule:
    """Four-stage exact CZ between two data qubits via Dicke(n) ancillae."""
    if angles is None:
        angles = solve_ms_angles(n)
    q0, q1 = qubits
    n_tot = max(qubits) + 1 + n
    space = AncillaSpace.dicke(n)

    def spec(coeff, qubit, symbol):
        return HamiltonianSpec([_collective_term(coeff, qubit, symbol)], 2, n_tot, n)

    elements = [
        Segment(spec(STAGE_SIGNS[0], q0, "X"), angles.t1),
        Segment(spec(STAGE_SIGNS[1], q1, "Y"), angles.t2),
        Segment(spec(STAGE_SIGNS[2], q0, "X"), angles.t3),
        Segment(spec(STAGE_SIGNS[3], q1, "Y"), angles.t4),
        RotationLayer([(q0, "z", np.pi / 2.0), (q1, "z", np.pi / 2.0)]),
    ]
    return Schedule(elements, space, n_tot, 2, n, global_phase=np.pi / 4.0)


def cz_unitary() -> np.ndarray:
    return np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)


def run_single_cz_exact(n: int, angles: MsAngles | None = None) -> ProtocolReport:
    if angles is None:
        angles = solve_ms_angles(n)
    sched = build_single_cz_schedule(n, angles)
    worst, fid, diags, outs = evaluate_vs_unitary(sched, (0, 1), cz_unitary())
    vac_return = min(st.ancilla_vacuum_weight() for st in outs)
    solved = {
        "t1": angles.t1, "t2": angles.t2, "t3": angles.t3, "t4": angles.t4,
        "closure_residual": angles.closure_residual,
        "phase_achieved": angles.phase_achieved,
        "sqrtn_constant": angles.sqrtn_constant,
        "seed_correction": angles.max_seed_correction,
    }
    diag = dict(diags)
    diag["ancilla_return_infidelity"] = 1.0 - vac_return
    return ProtocolReport(sched.total_time, worst, fid, solved, diag)


# ---------------------------------------------------------------------------
# Fourier-focused parallel layer
# ---------------------------------------------------------------------------

@dataclass
class LayerSpec:
    """One layer of disjoint CZ gates with a Fourier-mode index per gate."""

    gates: list                      # [(a, b), ...]
    modes: list | None = None        # one mode index per gate

    def __post_init__(self):
        seen = set()
        for a, b in self.gates:
            if a == b or a in seen or b in seen:
                raise ValueError("layer gates must be disjoint qubit pairs")
            seen.update((a, b))
        if self.modes is not None:
            if len(self.modes) != len(self.gates):
                raise ValueError("one mode per gate required")
            if len(set(self.modes)) != len(self.modes):
                raise ValueError("modes must be distinct")

    def assigned_modes(self, n: int):
        """Default assignment: consecutive indices, skipping any k whose
        mirror partner n-k is already taken (quadratures of k and n-k span
        the same plane)."""
        if self.modes is not None:
            return list(self.modes)
        modes = []
        used = set()
        k = 0
        while len(modes) < len(self.gates):
            if k > n:
                raise ValueError("not enough Fourier modes for this layer")
            mirror = (n - k) % n if n else 0
            if k not in used and mirror not in used:
                modes.append(k)
                used.add(k)
            k += 1
        return modes


def _quadrature_terms(coeff: float, data_qubit: int, mode: int, n: int, which: str):
    """Site-resolved terms for Z_data x (Fourier quadrature of the ancillae)."""
    out = []
    for i in range(n):
        th = 2.0 * np.pi * mode * i / n
        if which == "x":
            cx, cy = np.cos(th), np.sin(th)
        else:
            cx, cy = -np.sin(th), np.cos(th)
        if abs(cx) > 1e-15:
            out.append(Term(coeff * cx, {data_qubit: "Z"}, None, {i: "X"}))
        if abs(cy) > 1e-15:
            out.append(Term(coeff * cy, {data_qubit: "Z"}, None, {i: "Y"}))
    return out


def build_fourier_layer_schedule(layer: LayerSpec, n: int, delta_t: float,
                                 angles: MsAngles | None = None,
                                 normalize_budget: bool = True):
    """All gates of a layer driven simultaneously, one Fourier mode each.

    Stage mu couples gate (a,b) at mode k through
    Z_a x sum_i [cos(2 pi k i/n) X_i + sin(...) Y_i] (stages 1,3) and the
    orthogonal quadrature against Z_b (stages 2,4), with the solved
    single-CZ durations.  A global rescale keeps every qubit pair within
    the unit coupling budget.
    """
    if 2 * len(layer.gates) > n + 1:
        raise ValueError("too many gates for the ancilla count")
    if angles is None:
        angles = solve_ms_angles(n)
    modes = layer.assigned_modes(n)
    data_labels = sorted({q for g in layer.gates for q in g})
    n_tot = max(data_labels) + 1 + n
    space = AncillaSpace.full_qubit(n)

    nu = 1.0
    if normalize_budget:
        worst = 0.0
        for k in modes:
            for i in range(n):
                th = 2.0 * np.pi * k * i / n
                worst = max(worst, abs(np.cos(th)) + abs(np.sin(th)))
        nu = max(worst, 1.0)

    stage_qubit = lambda g, mu: g[0] if mu in (0, 2) else g[1]
    stage_quad = ("x", "y", "x", "y")
    elements = []
    durations = [angles.t1, angles.t2, angles.t3, angles.t4]
    for mu in range(4):
        terms = []
        for g, k in zip(layer.gates, modes):
            coeff = STAGE_SIGNS[mu] / nu
            terms.extend(_quadrature_terms(coeff, stage_qubit(g, mu), k, n,
                                           stage_quad[mu]))
        spec = HamiltonianSpec(terms, 2, n_tot, n)
        elements.append(Segment(spec, durations[mu] * nu))
    rot = []
    for a, b in layer.gates:
        rot += [(a, "z", np.pi / 2.0), (b, "z", np.pi / 2.0)]
    elements.append(RotationLayer(rot))
    sched = Schedule(elements, space, n_tot, 2, n,
                     global_phase=np.pi / 4.0 * len(layer.gates))
    budget_time = np.sqrt(1.0) * n ** (-0.5 + delta_t)
    info = {
        "normalization": nu,
        "modes": modes,
        "total_time": sched.total_time,
        "layer_budget_time": budget_time,
        "c_tilde": sched.total_time / n ** (-0.5 + delta_t),
    }
    return sched, info


def layer_target_unitary(layer: LayerSpec, data_labels) -> np.ndarray:
    nd = len(data_labels)
    pos = {q: k for k, q in enumerate(data_labels)}
    diag = np.ones(2**nd, dtype=complex)
    for idx in range(2**nd):
        for a, b in layer.gates:
            ba = (idx >> (nd - 1 - pos[a])) & 1
            bb = (idx >> (nd - 1 - pos[b])) & 1
            if ba and bb:
                diag[idx] = -diag[idx]
    return np.diag(diag)


def circuit_target_unitary(circuit: Circuit) -> np.ndarray:
    """Exact unitary of a CZ-layer circuit including its rotations."""
    from .propagate import rotation_matrix

    nd = circuit.n_data
    u = np.eye(2**nd, dtype=complex)
    for layer in circuit.layers:
        if layer.gates:
            u = layer_target_unitary(LayerSpec(list(layer.gates)),
                                     list(range(nd))) @ u
        for q, ax, th in layer.rotations:
            g = np.array([[1.0]], dtype=complex)
            for k in range(nd):
                g = np.kron(g, rotation_matrix(ax, th) if k == q else np.eye(2))
            u = g @ u
    return u


def _product_state(rng, nd: int) -> np.ndarray:
    psi = np.array([1.0], dtype=complex)
    for _ in range(nd):
        theta = rng.uniform(0, np.pi)
        phi = rng.uniform(0, 2 * np.pi)
        psi = np.kron(psi, np.array([np.cos(theta / 2),
                                     np.exp(1j * phi) * np.sin(theta / 2)]))
    return psi


def run_fourier_layer(layer: LayerSpec, n: int, delta_t: float,
                      n_random_inputs: int = 50, seed: int = 7,
                      track_excitation: bool = False) -> ProtocolReport:
    """Average layer fidelity over random product inputs (full-state oracle)."""
    sched, info = build_fourier_layer_schedule(layer, n, delta_t)
    data_labels = sorted({q for g in layer.gates for q in g})
    nd = len(data_labels)
    target = layer_target_unitary(layer, data_labels)
    rng = np.random.default_rng(seed)
    fids = []
    errors_sq = []
    worst = 0.0
    anc_dim = 2**n
    max_excitation = 0.0
    for _ in range(n_random_inputs):
        psi = _product_state(rng, nd)
        out = full_state_evolve(sched, psi, data_labels)
        ideal = np.kron(target @ psi, _vac(anc_dim))
        err = float(np.linalg.norm(out - ideal))
        worst = max(worst, err)
        errors_sq.append(err**2)
        fids.append(float(abs(np.vdot(ideal, out)) ** 2))
        if track_excitation:
            max_excitation = max(max_excitation, _max_site_excitation(out, nd, n))
    fid = float(np.mean(fids))
    solved = dict(info)
    solved["n_random_inputs"] = n_random_inputs
    solved["seed"] = seed
    diag = {"fidelity_std": float(np.std(fids)),
            "max_ancilla_excitation": max_excitation,
            "errors_sq": errors_sq}
    return ProtocolReport(sched.total_time, worst, fid, solved, diag)


def _vac(dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[0] = 1.0
    return v


def _max_site_excitation(full_state: np.ndarray, nd: int, n: int) -> float:
    """max_i <(1 - Z_i)/2> over the ancilla sites of a full statevector."""
    probs = np.abs(full_state) ** 2
    n_q = nd + n
    worst = 0.0
    idx = np.arange(full_state.size)
    for i in range(n):
        pos = nd + i
        bit = (idx >> (n_q - 1 - pos)) & 1
        worst = max(worst, float(probs[bit == 1].sum()))
    return worst


def compile_circuit_parallel(circuit: Circuit, n: int, delta_t: float,
                             angles: MsAngles | None = None):
    """One Fourier layer per circuit layer, rotations in between."""
    if angles is None:
        angles = solve_ms_angles(n)
    space = AncillaSpace.full_qubit(n)
    elements = []
    phase = 0.0
    n_tot = circuit.n_data + n
    for layer in circuit.layers:
        if layer.gates:
            lsched, _ = build_fourier_layer_schedule(
                LayerSpec(list(layer.gates)), n, delta_t, angles)
            elements.extend(lsched.elements)
            phase += lsched.global_phase
        if layer.rotations:
            elements.append(RotationLayer(list(layer.rotations)))
    sched = Schedule(elements, space, n_tot, 2, n, global_phase=phase)
    budget = None
    if circuit.depth:
        budget = {
            "depth": circuit.depth,
            "total_time": sched.total_time,
            "c_tilde": sched.total_time / (circuit.depth * n ** (-0.5 + delta_t)),
            "budget_time_per_layer": n ** (-0.5 + delta_t),
        }
    return sched, budget


# ---------------------------------------------------------------------------
# randomized (twirled) runs
# ---------------------------------------------------------------------------

_PAULI_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": _SX,
    "Y": _SY,
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

def _pauli_matrix_on(letters, phase, nd: int) -> np.ndarray:
    m = np.array([[phase]], dtype=complex)
    for q in range(nd):
        m = np.kron(m, _PAULI_MATS[letters.get(q, "I")])
    return m


def pauli_twirl_average(psi: np.ndarray) -> np.ndarray:
    """Exact average of P|psi><psi|P^dag over uniform Pauli strings."""
    nd = int(np.log2(psi.size))
    rho = np.zeros((psi.size, psi.size), dtype=complex)
    for code in range(4**nd):
        letters = {}
        c = code
        for q in range(nd):
            letters[q] = "IXYZ"[c % 4]
            c //= 4
        p = _pauli_matrix_on(letters, 1.0, nd)
        v = p @ psi
        rho += np.outer(v, v.conj())
    return rho / 4**nd


@dataclass
class TwirlReport:
    mean_error_sq: float
    standard_error: float
    samples: list
    seed: int
    n_samples: int


def twirl_randomize(circuit: Circuit, n: int, delta_t: float,
                    input_state: np.ndarray, n_samples: int = 32,
                    seed: int = 0) -> TwirlReport:
    """Randomize the input to a 1-design, run the layer protocol, undo.

    Samples uniform Pauli strings P, runs the deterministic protocol on
    P|psi>, and undoes the randomization with the conjugated Pauli
    U P^dag U^dag (a product of on-site Paulis for the Clifford CZ layers);
    reports the estimator of E || (protocol - U) |psi> x |0...0> ||^2 with
    its standard error.
    """
    for layer in circuit.layers:
        if layer.rotations:
            raise ValueError("twirl wrapper supports CZ-only layers; conjugating "
                             "through non-Clifford rotations leaves no on-site undo")
    sched, _ = compile_circuit_parallel(circuit, n, delta_t)
    nd = circuit.n_data
    target = np.eye(2**nd, dtype=complex)
    for layer in circuit.layers:
        target = layer_target_unitary(LayerSpec(list(layer.gates)),
                                      list(range(nd))) @ target
    ideal_full = np.kron(target @ input_state, _vac(2**n))
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(n_samples):
        letters = {q: "IXYZ"[rng.integers(0, 4)] for q in range(nd)}
        p_in = _pauli_matrix_on(letters, 1.0, nd)
        out = full_state_evolve(sched, p_in @ input_state, list(range(nd)))
        corr = target @ p_in.conj().T @ target.conj().T
        out = np.kron(corr, np.eye(2**n)) @ out
        samples.append(float(np.linalg.norm(out - ideal_full) ** 2))
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0
    return TwirlReport(mean, se, samples, seed, n_samples)
