"""Protocol evaluation: process/state fidelities and the run report."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hamiltonian import Schedule
from .propagate import evolve
from .spaces import embed_initial_state


@dataclass
class ProtocolReport:
    """Outcome of one protocol run."""

    total_time: float
    worst_case_error: float
    fidelity: float
    solved_params: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (-1e-12 <= self.fidelity <= 1.0 + 1e-9):
            raise ValueError(f"fidelity out of range: {self.fidelity}")
        if self.worst_case_error < 0:
            raise ValueError("worst_case_error must be >= 0")
        self.fidelity = float(min(max(self.fidelity, 0.0), 1.0))


def _basis_state(idx: int, n: int) -> np.ndarray:
    v = np.zeros(2**n, dtype=complex)
    v[idx] = 1.0
    return v


def evolve_basis_bank(schedule: Schedule, data_qubits, **kwargs):
    """Evolve every data basis state; returns list of final HybridStates."""
    outs = []
    diags = []
    for idx in range(2 ** len(data_qubits)):
        state = embed_initial_state(_basis_state(idx, len(data_qubits)),
                                    schedule.ancilla, data_qubits)
        fin = evolve(state, schedule, **kwargs)
        outs.append(fin)
        diags.append(fin.diagnostics)
    return outs, diags


def kraus_from_outputs(outputs) -> np.ndarray:
    """Stack final amplitudes into K[anc, out_row, in_col]."""
    d = len(outputs)
    dim = outputs[0].space.dim
    k = np.empty((dim, d, d), dtype=complex)
    for col, st in enumerate(outputs):
        k[:, :, col] = st.amps.T
    return k


def process_fidelity(kraus: np.ndarray, target: np.ndarray) -> float:
    """Entanglement (process) fidelity of the induced data channel vs target."""
    d = target.shape[0]
    tu = target.conj().T
    total = 0.0
    for a in range(kraus.shape[0]):
        total += abs(np.trace(tu @ kraus[a])) ** 2
    return float(total / d**2)


def merge_run_diagnostics(diags) -> dict:
    out = {"fock_leakage": 0.0, "fock_leak_flag": False, "fock_retried": False,
           "dicke_boundary_weight": 0.0, "norm_drift": 0.0}
    for dg in diags:
        if dg is None:
            continue
        out["fock_leakage"] = max(out["fock_leakage"], dg.fock_leakage)
        out["fock_leak_flag"] = out["fock_leak_flag"] or dg.fock_leak_flag
        out["fock_retried"] = out["fock_retried"] or dg.fock_retried
        out["dicke_boundary_weight"] = max(out["dicke_boundary_weight"],
                                           dg.dicke_boundary_weight)
        out["norm_drift"] = max(out["norm_drift"], dg.norm_drift)
    return out


def evaluate_vs_unitary(schedule: Schedule, data_qubits, target: np.ndarray,
                        **evolve_kwargs):
    """Worst basis-input error and process fidelity against a data unitary.

    The error norm is || (U_sim - U_target x I_anc) |z> x |vac> ||, maximized
    over data basis inputs; for schedules whose generators act on data qubits
    through Z only this equals the true worst case over all inputs.
    """
    outs, diags = evolve_basis_bank(schedule, data_qubits, **evolve_kwargs)
    d = len(outs)
    dim = outs[0].space.dim
    worst = 0.0
    for col, st in enumerate(outs):
        ideal = np.zeros((d, dim), dtype=complex)
        ideal[:, 0] = target[:, col]
        worst = max(worst, float(np.linalg.norm(st.amps - ideal)))
    fid = process_fidelity(kraus_from_outputs(outs), target)
    return worst, fid, merge_run_diagnostics(diags), outs


def evaluate_on_columns(schedule: Schedule, data_qubits, target: np.ndarray,
                        columns, **evolve_kwargs):
    """Like evaluate_vs_unitary restricted to selected basis inputs.

    Used for protocols whose work register must start in |0>; returns the
    worst error over those inputs and the mean basis-state fidelity.
    """
    worst = 0.0
    fids = []
    diags = []
    for col in columns:
        state = embed_initial_state(_basis_state(col, len(data_qubits)),
                                    schedule.ancilla, data_qubits)
        fin = evolve(state, schedule, **evolve_kwargs)
        diags.append(fin.diagnostics)
        ideal = np.zeros_like(fin.amps)
        ideal[:, 0] = target[:, col]
        worst = max(worst, float(np.linalg.norm(fin.amps - ideal)))
        fids.append(float(abs(np.vdot(ideal, fin.amps)) ** 2))
    return worst, float(np.mean(fids)), merge_run_diagnostics(diags)


def evaluate_vs_state(schedule: Schedule, data_qubits, input_state: np.ndarray,
                      target_state: np.ndarray, **evolve_kwargs):
    """State fidelity |<target x vac | U_sim | input x vac>|^2."""
    st = embed_initial_state(np.asarray(input_state, complex), schedule.ancilla, data_qubits)
    fin = evolve(st, schedule, **evolve_kwargs)
    dim = fin.space.dim
    ideal = np.zeros((len(target_state), dim), dtype=complex)
    ideal[:, 0] = target_state
    ov = np.vdot(ideal, fin.amps)
    err = float(np.linalg.norm(fin.amps - ov / max(abs(ov), 1e-300) * ideal))
    return float(abs(ov) ** 2), err, fin
