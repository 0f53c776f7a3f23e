"""Time evolution of hybrid states under piecewise-constant schedules.

Each segment is evolved exactly (eigendecomposition of the constant
generator, or a Krylov product for large sparse cases), so composition and
reversibility hold to machine precision and no integrator-order questions
enter the scaling studies.

When every term of a segment acts on data qubits through Z only (true for
all protocols in this package), the generator is block diagonal over data
basis states and each block is an ancilla-sized problem; blocks are cached
by their coupling signature.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .hamiltonian import RotationLayer, Schedule, Segment, Term
from .spaces import PAULI, CollectiveOps, HybridState, build_collective_ops

FOCK_LEAK_THRESHOLD = 1e-6
DENSE_DIM_LIMIT = 4096
HERMITICITY_TOL = 1e-12


@dataclass
class EvolveDiagnostics:
    method: str = "dense_expm"
    fock_leakage: float = 0.0
    fock_leak_flag: bool = False
    fock_retried: bool = False
    dicke_boundary_weight: float = 0.0
    norm_drift: float = 0.0
    trace: list = field(default_factory=list)


def rotation_matrix(axis: str, angle: float) -> np.ndarray:
    """exp(-i angle/2 sigma_axis); axis 'h' is the Hadamard axis (X+Z)/sqrt2."""
    if axis == "h":
        sigma = (PAULI["X"] + PAULI["Z"]) / np.sqrt(2.0)
    else:
        sigma = PAULI[axis.upper()]
    return np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * sigma


def apply_rotations(state: HybridState, rotations) -> HybridState:
    nd = state.n_data
    arr = state.amps.reshape((2,) * nd + (state.space.dim,))
    pos = {q: k for k, q in enumerate(state.data_qubits)}
    for qubit, axis, angle in rotations:
        if qubit not in pos:
            raise ValueError(f"rotation on unknown data qubit {qubit}")
        k = pos[qubit]
        u = rotation_matrix(axis, angle)
        arr = np.tensordot(u, arr, axes=([1], [k]))
        arr = np.moveaxis(arr, 0, k)
    return HybridState(state.data_qubits, state.space,
                       np.ascontiguousarray(arr.reshape(state.amps.shape)))


def _term_ancilla_matrix(term: Term, ops: CollectiveOps):
    if term.ancilla_sites:
        acc = None
        for site, pauli in sorted(term.ancilla_sites.items()):
            m = ops.site_op(pauli, site)
            acc = m if acc is None else acc @ m
        return acc
    if term.ancilla_op is not None:
        return term.ancilla_op.evaluate(ops)
    return None  # identity


def _check_hermitian(mat, scale: float):
    if mat is None:
        return
    if sp.issparse(mat):
        dev = abs(mat - mat.getH()).max()
    else:
        dev = np.abs(mat - mat.conj().T).max()
    if dev > HERMITICITY_TOL * max(scale, 1.0):
        raise ValueError(f"non-Hermitian segment generator (deviation {dev:.3g})")


def _data_z_signs(term: Term, data_qubits, nd: int) -> np.ndarray:
    idx = np.arange(2**nd)
    signs = np.ones(2**nd)
    pos = {q: k for k, q in enumerate(data_qubits)}
    for q in term.data_pauli:
        if q not in pos:
            raise ValueError(f"term references inactive data qubit {q}")
        bit = (idx >> (nd - 1 - pos[q])) & 1
        signs = signs * (1.0 - 2.0 * bit)
    return signs


class _BlockPropagator:
    """Per-signature ancilla-block propagation for Z-only segments.

    The cache dict persists on the Segment object, so repeated evolutions of
    different inputs through the same schedule reuse every factorization.
    """

    def __init__(self, mats, dim, method, cache):
        self.mats = mats                     # per-term ancilla matrices (None = identity)
        self.dim = dim
        self.method = method
        self.cache = cache
        self._single = None
        if mats and mats[0] is not None:
            first = mats[0]
            if all(m is first or _mat_equal(m, first) for m in mats[1:]):
                self._single = first
                if method == "dense_expm" and not sp.issparse(first):
                    if "single_eig" not in cache:
                        cache["single_eig"] = np.linalg.eigh(first)

    def block_h(self, sig):
        h = None
        for coeff, m in zip(sig, self.mats):
            if m is None:
                continue
            piece = coeff * m
            h = piece if h is None else h + piece
        return h

    def apply(self, sig, psi, dt):
        """Evolve one ancilla block: exp(-i H_sig dt) psi."""
        scalar = sum(c for c, m in zip(sig, self.mats) if m is None)
        phase = np.exp(-1j * scalar * dt)
        if self._single is not None and self.method == "dense_expm" \
                and not sp.issparse(self._single):
            s = sum(c for c, m in zip(sig, self.mats) if m is not None)
            w, v = self.cache["single_eig"]
            return phase * (v @ (np.exp(-1j * w * s * dt) * (v.conj().T @ psi)))
        h = self.block_h(sig)
        if h is None:
            return phase * psi
        if self.method == "dense_expm" and not sp.issparse(h) and h.shape[0] <= DENSE_DIM_LIMIT:
            if sig not in self.cache:
                self.cache[sig] = np.linalg.eigh(h)
            w, v = self.cache[sig]
            return phase * (v @ (np.exp(-1j * w * dt) * (v.conj().T @ psi)))
        hs = sp.csr_matrix(h) if not sp.issparse(h) else h
        return phase * expm_multiply(-1j * dt * hs, psi)


def _mat_equal(a, b):
    if a is None or b is None:
        return a is b
    if sp.issparse(a) != sp.issparse(b):
        return False
    if sp.issparse(a):
        return (abs(a - b) > 0).nnz == 0
    return a.shape == b.shape and np.array_equal(a, b)


def _segment_cache(seg: Segment, space, method: str) -> dict:
    store = seg.__dict__.setdefault("_prop_cache", {})
    key = (method, space.mode, space.dim)
    return store.setdefault(key, {})


def _segment_step(state: HybridState, seg: Segment, dt: float, ops: CollectiveOps,
                  method: str) -> HybridState:
    nd = state.n_data
    dim = state.space.dim
    cache = _segment_cache(seg, state.space, method)
    if "mats" not in cache:
        mats = [_term_ancilla_matrix(t, ops) for t in seg.spec.terms]
        scale = max((abs(t.coeff) for t in seg.spec.terms), default=1.0)
        for m in mats:
            _check_hermitian(m, scale * dim)
        cache["mats"] = mats
    mats = cache["mats"]

    if seg.spec.data_is_z_only():
        sign_rows = np.stack([t.coeff * _data_z_signs(t, state.data_qubits, nd)
                              for t in seg.spec.terms], axis=1) \
            if seg.spec.terms else np.zeros((2**nd, 0))
        prop = _BlockPropagator(mats, dim, method, cache)
        out = np.empty_like(state.amps)
        groups: dict = {}
        for row in range(2**nd):
            sig = tuple(np.round(sign_rows[row], 15))
            groups.setdefault(sig, []).append(row)
        for sig, rows in groups.items():
            for row in rows:
                out[row] = prop.apply(sig, state.amps[row], dt)
        return HybridState(state.data_qubits, state.space, out)

    # generic path: full hybrid generator
    total_dim = 2**nd * dim
    if "hybrid_h" not in cache:
        h = sp.csr_matrix((total_dim, total_dim), dtype=complex)
        for t, m in zip(seg.spec.terms, mats):
            dmat = sp.identity(1, format="csr", dtype=complex)
            for k in range(nd):
                q = state.data_qubits[k]
                dmat = sp.kron(dmat, sp.csr_matrix(PAULI[t.data_pauli.get(q, "I")]),
                               format="csr")
            amat = sp.identity(dim, format="csr", dtype=complex) if m is None else \
                (m if sp.issparse(m) else sp.csr_matrix(m))
            h = h + t.coeff * sp.kron(dmat, amat, format="csr")
        cache["hybrid_h"] = h.tocsr()
    h = cache["hybrid_h"]
    psi = state.amps.reshape(-1)
    if method == "dense_expm" and total_dim <= DENSE_DIM_LIMIT:
        if "hybrid_eig" not in cache:
            cache["hybrid_eig"] = np.linalg.eigh(h.toarray())
        w, v = cache["hybrid_eig"]
        psi = v @ (np.exp(-1j * w * dt) * (v.conj().T @ psi))
    else:
        psi = expm_multiply(-1j * dt * h, psi)
    return HybridState(state.data_qubits, state.space,
                       psi.reshape(state.amps.shape))


def _fock_leakage(state: HybridState) -> float:
    return float(np.sum(np.abs(state.amps[:, -2:]) ** 2))


def _boundary_weight(state: HybridState, boundary_m: float) -> float:
    m = np.arange(state.space.dim)
    mask = m > boundary_m
    return float(np.sum(np.abs(state.amps[:, mask]) ** 2))


def evolve(state: HybridState, schedule: Schedule, method: str = "dense_expm",
           step_tolerance: float = 1e-12, trace_ops=None, trace_substeps: int = 1,
           boundary_m: float | None = None, leak_retry: bool = True) -> HybridState:
    """Propagate through all schedule elements; returns a new state.

    ``trace_ops`` maps names to ancilla-space matrices whose expectation is
    recorded after every substep.  Fock leakage above the threshold triggers
    one automatic retry with doubled cutoff when ``leak_retry`` is set.
    """
    if method not in ("dense_expm", "krylov"):
        raise ValueError(f"unknown method {method!r}")
    if schedule.ancilla != state.space:
        raise ValueError("schedule ancilla space does not match the state")
    diag = EvolveDiagnostics(method=method)
    ops = build_collective_ops(state.space)
    current = state.copy()
    t_now = 0.0

    def record(t):
        if trace_ops:
            entry = {"t": t}
            for name, mat in trace_ops.items():
                vals = np.einsum("ri,ij,rj->", current.amps.conj(), mat, current.amps)
                entry[name] = float(np.real(vals))
            diag.trace.append(entry)

    record(0.0)
    for element in schedule.elements:
        if isinstance(element, RotationLayer):
            current = apply_rotations(current, element.rotations)
            continue
        nsub = max(1, int(trace_substeps))
        dt = element.duration / nsub
        for _ in range(nsub):
            if element.duration > 0:
                current = _segment_step(current, element, dt, ops, method)
            t_now += dt
            record(t_now)
        if state.space.mode == "fock":
            leak = _fock_leakage(current)
            diag.fock_leakage = max(diag.fock_leakage, leak)
            if leak > FOCK_LEAK_THRESHOLD:
                diag.fock_leak_flag = True
        if state.space.mode == "dicke" and boundary_m is not None:
            diag.dicke_boundary_weight = max(diag.dicke_boundary_weight,
                                             _boundary_weight(current, boundary_m))
        drift = abs(current.norm() - 1.0)
        diag.norm_drift = max(diag.norm_drift, drift)
        if drift > 1e-9:
            raise RuntimeError(f"norm drifted by {drift:.3g} in a segment")

    if (diag.fock_leak_flag and leak_retry and state.space.mode == "fock"):
        from .spaces import AncillaSpace

        bigger = AncillaSpace.fock(2 * state.space.cutoff)
        padded = np.zeros((state.amps.shape[0], bigger.dim), dtype=complex)
        padded[:, : state.space.dim] = state.amps
        restate = HybridState(state.data_qubits, bigger, padded)
        resched = Schedule(schedule.elements, bigger, schedule.n_tot,
                           schedule.locality, schedule.n_anc, schedule.global_phase)
        out = evolve(restate, resched, method=method, step_tolerance=step_tolerance,
                     trace_ops=trace_ops, trace_substeps=trace_substeps,
                     boundary_m=boundary_m, leak_retry=False)
        out.diagnostics.fock_retried = True
        return out

    if schedule.global_phase:
        current.amps = current.amps * np.exp(1j * schedule.global_phase)
    current.diagnostics = diag
    return current


def schedule_truncated(schedule: Schedule, t_max: float) -> Schedule:
    """Prefix of a schedule up to total evolution time t_max."""
    elements = []
    acc = 0.0
    for e in schedule.elements:
        if not isinstance(e, Segment):
            elements.append(e)
            continue
        if acc + e.duration <= t_max + 1e-15:
            elements.append(e)
            acc += e.duration
        else:
            remain = t_max - acc
            if remain > 0:
                elements.append(Segment(e.spec, remain))
            break
    return Schedule(elements, schedule.ancilla, schedule.n_tot, schedule.locality,
                    schedule.n_anc, schedule.global_phase)


def _hybrid_operator(term: Term, data_qubits, space, ops) -> sp.csr_matrix:
    nd = len(data_qubits)
    dmat = sp.identity(1, format="csr", dtype=complex)
    for k in range(nd):
        q = data_qubits[k]
        dmat = sp.kron(dmat, sp.csr_matrix(PAULI[term.data_pauli.get(q, "I")]), format="csr")
    m = _term_ancilla_matrix(term, ops)
    amat = sp.identity(space.dim, format="csr", dtype=complex) if m is None else \
        (m if sp.issparse(m) else sp.csr_matrix(m))
    return (term.coeff * sp.kron(dmat, amat, format="csr")).tocsr()


def schedule_unitary(schedule: Schedule, data_qubits) -> np.ndarray:
    """Dense unitary of the whole schedule on (data x ancilla)."""
    space = schedule.ancilla
    nd = len(data_qubits)
    total = 2**nd * space.dim
    if total > DENSE_DIM_LIMIT:
        raise ValueError(f"dense unitary limited to dimension {DENSE_DIM_LIMIT}")
    ops = build_collective_ops(space)
    u = np.eye(total, dtype=complex)
    for element in schedule.elements:
        if isinstance(element, RotationLayer):
            r = np.eye(2**nd, dtype=complex)
            for qubit, axis, angle in element.rotations:
                k = list(data_qubits).index(qubit)
                mats = [rotation_matrix(axis, angle) if kk == k else np.eye(2)
                        for kk in range(nd)]
                g = mats[0]
                for mm in mats[1:]:
                    g = np.kron(g, mm)
                r = g @ r
            u = np.kron(r, np.eye(space.dim)) @ u
        else:
            h = sum(_hybrid_operator(t, data_qubits, space, ops) for t in element.spec.terms)
            hd = h.toarray()
            _check_hermitian(hd, max(abs(hd).max(), 1.0))
            w, v = np.linalg.eigh(hd)
            u = (v @ (np.exp(-1j * w * element.duration)[:, None] * v.conj().T)) @ u
    return np.exp(1j * schedule.global_phase) * u


def heisenberg_commutator_norm(schedule: Schedule, op_i: Term, op_j: Term,
                               data_qubits, t: float | None = None) -> float:
    """Spectral norm of [U(t)^dag A U(t), B] on the full data+ancilla space."""
    sched = schedule if t is None else schedule_truncated(schedule, t)
    space = schedule.ancilla
    nd = len(data_qubits)
    if 2**nd * space.dim > DENSE_DIM_LIMIT:
        raise ValueError("commutator norm limited to total dimension 4096")
    ops = build_collective_ops(space)
    u = schedule_unitary(sched, data_qubits)
    a = _hybrid_operator(op_i, data_qubits, space, ops).toarray()
    bmat = _hybrid_operator(op_j, data_qubits, space, ops).toarray()
    a_t = u.conj().T @ a @ u
    comm = a_t @ bmat - bmat @ a_t
    return float(np.linalg.norm(comm, ord=2))
