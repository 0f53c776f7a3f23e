"""Independent brute-force references.

``full_state_evolve`` expands a schedule to site-resolved operators on the
full (data + ancilla-qubit) register and integrates with a Krylov product,
deliberately a different code path and integrator than the main engine.
``exact_hp_operator`` builds the boson annihilation operator on the Dicke
space through the inverse-square-root normalization factor, serving as the
series-order -> infinity reference.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .hamiltonian import RotationLayer, Schedule, Segment
from .propagate import rotation_matrix
from .spaces import PAULI, AncillaSpace, build_collective_ops, dicke_embedding_matrix

FULL_STATE_QUBIT_LIMIT = 16


def _full_site_op(pauli: str, pos: int, n_q: int) -> sp.csr_matrix:
    left = sp.identity(2**pos, format="csr", dtype=complex)
    right = sp.identity(2 ** (n_q - pos - 1), format="csr", dtype=complex)
    return sp.kron(sp.kron(left, sp.csr_matrix(PAULI[pauli])), right, format="csr")


def _collective_full(symbol: str, anc_positions, n_q: int) -> sp.csr_matrix:
    dim = 2**n_q
    acc = sp.csr_matrix((dim, dim), dtype=complex)
    for pos in anc_positions:
        acc = acc + _full_site_op(symbol, pos, n_q)
    return acc


def full_hamiltonian_matrix(spec, data_qubits, n_anc: int) -> sp.csr_matrix:
    """Site-resolved sparse Hamiltonian on data qubits followed by ancillas."""
    n_q = len(data_qubits) + n_anc
    if n_q > FULL_STATE_QUBIT_LIMIT:
        raise ValueError(f"full-state oracle limited to {FULL_STATE_QUBIT_LIMIT} qubits")
    dim = 2**n_q
    dpos = {q: k for k, q in enumerate(data_qubits)}
    anc_positions = list(range(len(data_qubits), n_q))
    h = sp.csr_matrix((dim, dim), dtype=complex)
    coll_cache: dict = {}
    for t in spec.terms:
        op = sp.identity(dim, format="csr", dtype=complex)
        for q, p in sorted(t.data_pauli.items()):
            op = op @ _full_site_op(p, dpos[q], n_q)
        if t.ancilla_sites:
            for site, p in sorted(t.ancilla_sites.items()):
                op = op @ _full_site_op(p, anc_positions[site], n_q)
        elif t.ancilla_op is not None:
            poly_mat = sp.csr_matrix((dim, dim), dtype=complex)
            for mono, c in t.ancilla_op.terms.items():
                acc = sp.identity(dim, format="csr", dtype=complex)
                for s in mono:
                    if s not in ("X", "Y", "Z"):
                        raise ValueError("full-state oracle needs a spin-only spec")
                    if s not in coll_cache:
                        coll_cache[s] = _collective_full(s, anc_positions, n_q)
                    acc = acc @ coll_cache[s]
                poly_mat = poly_mat + c * acc
            op = op @ poly_mat
        h = h + t.coeff * op
    return h.tocsr()


def full_state_evolve(schedule: Schedule, data_state: np.ndarray, data_qubits,
                      tol_substeps: int = 1) -> np.ndarray:
    """Evolve |data_state> x |0...0 ancillas> through the schedule exactly.

    Ancillas are addressed as qubits (the schedule ancilla space must be a
    spin representation); returns the final 2^(n_data+n_anc) statevector.
    """
    if schedule.ancilla.mode == "fock":
        raise ValueError("full-state oracle does not apply to boson schedules")
    n_anc = schedule.n_anc
    data_state = np.asarray(data_state, dtype=complex).reshape(-1)
    nd = int(np.log2(data_state.size))
    n_q = nd + n_anc
    if n_q > FULL_STATE_QUBIT_LIMIT:
        raise ValueError(f"full-state oracle limited to {FULL_STATE_QUBIT_LIMIT} qubits")
    anc0 = np.zeros(2**n_anc, dtype=complex)
    anc0[0] = 1.0
    psi = np.kron(data_state, anc0)
    dpos = {q: k for k, q in enumerate(data_qubits)}
    for element in schedule.elements:
        if isinstance(element, RotationLayer):
            for qubit, axis, angle in element.rotations:
                u = sp.csr_matrix(rotation_matrix(axis, angle))
                pos = dpos[qubit]
                left = sp.identity(2**pos, format="csr", dtype=complex)
                right = sp.identity(2 ** (n_q - pos - 1), format="csr", dtype=complex)
                psi = sp.kron(sp.kron(left, u), right, format="csr") @ psi
        elif isinstance(element, Segment):
            if element.duration == 0:
                continue
            h = full_hamiltonian_matrix(element.spec, data_qubits, n_anc)
            nsub = max(1, tol_substeps)
            for _ in range(nsub):
                psi = expm_multiply(-1j * (element.duration / nsub) * h, psi)
    return np.exp(1j * schedule.global_phase) * psi


def hybrid_dicke_to_full(state) -> np.ndarray:
    """Embed a (data x Dicke) hybrid state into the full data+ancilla register."""
    if state.space.mode != "dicke":
        raise ValueError("embedding defined for dicke-mode states")
    emb = dicke_embedding_matrix(state.space.n_spins)
    rows = [emb @ state.amps[r] for r in range(state.amps.shape[0])]
    return np.concatenate(rows)


def exact_hp_operator(n: int) -> np.ndarray:
    """Boson annihilation operator on Dicke(n) via the exact normalization.

    b = (1/(2 sqrt n)) (1 - (n-Z)/(2n))^(-1/2) (X + iY), with the singular
    top level handled by pseudo-inversion (its row never enters).
    """
    ops = build_collective_ops(AncillaSpace.dicke(n))
    factor = np.eye(n + 1) - (n * np.eye(n + 1) - ops.Z.real) / (2.0 * n)
    w, v = np.linalg.eigh(factor)
    w_safe = np.where(w > 1e-14, w, 1.0)
    w_inv_sqrt = np.where(w > 1e-14, 1.0 / np.sqrt(w_safe), 0.0)
    inv_sqrt = (v * w_inv_sqrt) @ v.conj().T
    return (1.0 / (2.0 * np.sqrt(n))) * inv_sqrt @ (ops.X + 1j * ops.Y)
