"""Ancilla Hilbert-space representations and the hybrid data/ancilla state.

Three ancilla representations are supported:

* ``dicke``   -- the permutation-symmetric subspace of N spins, dimension N+1,
  basis ordered by excitation number m = 0..N with Z|m> = (N-2m)|m>.
* ``fock``    -- a truncated boson mode with number states 0..cutoff.
* ``full``    -- all N ancilla qubits (N <= 16); collective operators are kept
  sparse because dense 2^N matrices are not affordable at the top sizes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

FULL_QUBIT_LIMIT = 16


@dataclass(frozen=True)
class AncillaSpace:
    """Representation mode plus its dimension."""

    mode: str            # "dicke" | "fock" | "full"
    n_spins: int = 0     # ancilla count N (dicke/full)
    cutoff: int = 0      # top Fock level M (fock)

    @staticmethod
    def dicke(n: int) -> "AncillaSpace":
        if n < 1:
            raise ValueError("dicke ancilla count must be >= 1")
        return AncillaSpace("dicke", n_spins=n)

    @staticmethod
    def fock(cutoff: int) -> "AncillaSpace":
        if cutoff < 1:
            raise ValueError("fock cutoff must be >= 1")
        return AncillaSpace("fock", cutoff=cutoff)

    @staticmethod
    def full_qubit(n: int) -> "AncillaSpace":
        if n < 1:
            raise ValueError("full-qubit ancilla count must be >= 1")
        if n > FULL_QUBIT_LIMIT:
            raise ValueError(f"full-qubit mode limited to {FULL_QUBIT_LIMIT} ancillas, got {n}")
        return AncillaSpace("full", n_spins=n)

    @property
    def dim(self) -> int:
        if self.mode == "dicke":
            return self.n_spins + 1
        if self.mode == "fock":
            return self.cutoff + 1
        if self.mode == "full":
            return 2**self.n_spins
        raise ValueError(f"unknown mode {self.mode!r}")

    def describe(self) -> dict:
        if self.mode == "fock":
            return {"mode": "fock", "cutoff": self.cutoff}
        return {"mode": self.mode, "n_spins": self.n_spins}

    @staticmethod
    def from_dict(d: dict) -> "AncillaSpace":
        if d["mode"] == "fock":
            return AncillaSpace.fock(int(d["cutoff"]))
        if d["mode"] == "dicke":
            return AncillaSpace.dicke(int(d["n_spins"]))
        return AncillaSpace.full_qubit(int(d["n_spins"]))


def default_fock_cutoff(n: int) -> int:
    """Default boson truncation for protocols driven at ancilla count n."""
    return int(np.ceil(8.0 * np.sqrt(n))) + 16


def _dicke_xy(n: int):
    m = np.arange(n)
    off = np.sqrt((m + 1.0) * (n - m))  # <m+1|X|m>
    x = np.zeros((n + 1, n + 1), dtype=complex)
    x[m + 1, m] = off
    x[m, m + 1] = off
    y = np.zeros((n + 1, n + 1), dtype=complex)
    y[m + 1, m] = 1j * off
    y[m, m + 1] = -1j * off
    return x, y


def _site_op(pauli: str, site: int, n: int) -> sp.csr_matrix:
    eye_l = sp.identity(2**site, format="csr", dtype=complex)
    eye_r = sp.identity(2 ** (n - site - 1), format="csr", dtype=complex)
    return sp.kron(sp.kron(eye_l, sp.csr_matrix(PAULI[pauli])), eye_r, format="csr")


@dataclass
class CollectiveOps:
    """Operator matrices for one ancilla space.

    dicke: dense X, Y, Z (collective Pauli sums).
    fock:  dense b, bdag, x, p, n.
    full:  sparse X, Y, Z plus per-site Paulis via ``site_op``.
    """

    space: AncillaSpace
    X: object = None
    Y: object = None
    Z: object = None
    b: np.ndarray = None
    bdag: np.ndarray = None
    x: np.ndarray = None
    p: np.ndarray = None
    n: np.ndarray = None
    _site_cache: dict = field(default_factory=dict, repr=False)

    def site_op(self, pauli: str, site: int) -> sp.csr_matrix:
        if self.space.mode != "full":
            raise ValueError("per-site operators only exist in full-qubit mode")
        key = (pauli, site)
        if key not in self._site_cache:
            self._site_cache[key] = _site_op(pauli, site, self.space.n_spins)
        return self._site_cache[key]

    def symbol_matrix(self, symbol: str):
        """Matrix for one formal symbol of an ancilla polynomial."""
        table = {"X": self.X, "Y": self.Y, "Z": self.Z,
                 "b": self.b, "bdag": self.bdag, "x": self.x, "p": self.p, "n": self.n}
        mat = table.get(symbol)
        if mat is None:
            raise ValueError(f"symbol {symbol!r} not available in {self.space.mode} mode")
        return mat


def build_collective_ops(space: AncillaSpace) -> CollectiveOps:
    """Construct the operator matrices for ``space``."""
    if space.mode == "dicke":
        n = space.n_spins
        x, y = _dicke_xy(n)
        z = np.diag((n - 2.0 * np.arange(n + 1)).astype(complex))
        return CollectiveOps(space, X=x, Y=y, Z=z)
    if space.mode == "fock":
        m = space.cutoff
        b = np.zeros((m + 1, m + 1), dtype=complex)
        b[np.arange(m), np.arange(1, m + 1)] = np.sqrt(np.arange(1.0, m + 1))
        bdag = b.conj().T
        x = (b + bdag) / np.sqrt(2.0)
        p = (b - bdag) / (np.sqrt(2.0) * 1j)
        return CollectiveOps(space, b=b, bdag=bdag, x=x, p=p, n=bdag @ b)
    if space.mode == "full":
        n = space.n_spins
        x = sp.csr_matrix((2**n, 2**n), dtype=complex)
        y = sp.csr_matrix((2**n, 2**n), dtype=complex)
        z = sp.csr_matrix((2**n, 2**n), dtype=complex)
        for i in range(n):
            x = x + _site_op("X", i, n)
            y = y + _site_op("Y", i, n)
            z = z + _site_op("Z", i, n)
        return CollectiveOps(space, X=x.tocsr(), Y=y.tocsr(), Z=z.tocsr())
    raise ValueError(f"unknown mode {space.mode!r}")


@dataclass
class HybridState:
    """Amplitudes over (active data qubits) x (ancilla basis).

    ``amps`` has shape (2**n_data, ancilla_dim); ``data_qubits[0]`` is the
    most significant bit of the row index.
    """

    data_qubits: tuple
    space: AncillaSpace
    amps: np.ndarray
    diagnostics: object = None

    MAX_DATA_QUBITS = 14

    @property
    def n_data(self) -> int:
        return len(self.data_qubits)

    @property
    def amplitudes(self) -> np.ndarray:
        return self.amps.reshape(-1)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def overlap(self, other: "HybridState") -> complex:
        return complex(np.vdot(self.amps, other.amps))

    def copy(self) -> "HybridState":
        return HybridState(self.data_qubits, self.space, self.amps.copy())

    def data_density_diag(self) -> np.ndarray:
        """Probability of each data basis string (ancilla traced out)."""
        return np.sum(np.abs(self.amps) ** 2, axis=1)

    def ancilla_vacuum_weight(self) -> float:
        """Population of the ancilla m=0 / vacuum level."""
        return float(np.sum(np.abs(self.amps[:, 0]) ** 2))


def embed_initial_state(data_state: np.ndarray, space: AncillaSpace,
                        data_qubits=None) -> HybridState:
    """Tensor a normalized data register state with the ancilla ground level."""
    data_state = np.asarray(data_state, dtype=complex).reshape(-1)
    n_data = int(np.log2(data_state.size))
    if 2**n_data != data_state.size:
        raise ValueError("data state length must be a power of two")
    if abs(np.linalg.norm(data_state) - 1.0) > 1e-9:
        raise ValueError("data state must be normalized")
    if data_qubits is None:
        data_qubits = tuple(range(n_data))
    data_qubits = tuple(data_qubits)
    if len(data_qubits) != n_data:
        raise ValueError("data_qubits length does not match state size")
    if n_data > HybridState.MAX_DATA_QUBITS:
        raise ValueError(f"at most {HybridState.MAX_DATA_QUBITS} active data qubits")
    amps = np.zeros((data_state.size, space.dim), dtype=complex)
    amps[:, 0] = data_state
    return HybridState(data_qubits, space, amps)


def dicke_embedding_matrix(n: int) -> sp.csr_matrix:
    """Isometry (2^n x (n+1)) mapping |m> to the symmetric weight-m state."""
    if n > HybridState.MAX_DATA_QUBITS:
        raise ValueError("dicke-to-full embedding limited to n <= 14")
    rows, cols, vals = [], [], []
    weights = np.array([bin(i).count("1") for i in range(2**n)])
    from math import comb

    norms = np.array([1.0 / np.sqrt(comb(n, m)) for m in range(n + 1)])
    for idx in range(2**n):
        m = weights[idx]
        rows.append(idx)
        cols.append(m)
        vals.append(norms[m])
    return sp.csr_matrix((vals, (rows, cols)), shape=(2**n, n + 1), dtype=complex)


def dicke_to_full_embedding(dicke_state: np.ndarray, n: int) -> np.ndarray:
    """Map an (n+1)-component Dicke vector to the full 2^n statevector."""
    dicke_state = np.asarray(dicke_state, dtype=complex).reshape(-1)
    if dicke_state.size != n + 1:
        raise ValueError("dicke state must have n+1 components")
    return dicke_embedding_matrix(n) @ dicke_state
