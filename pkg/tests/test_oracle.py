import numpy as np

from a2aham import (AncillaPolynomial, AncillaSpace, HamiltonianSpec, Schedule,
                    Segment, Term, build_collective_ops, embed_initial_state, evolve,
                    exact_hp_operator, full_state_evolve, hp_truncate)
from a2aham.hamiltonian import RotationLayer
from a2aham.oracle import hybrid_dicke_to_full
from a2aham.propagate import rotation_matrix


def _symmetric_schedule(n_anc):
    tat = AncillaPolynomial({("X", "Y"): -0.25, ("Y", "X"): -0.25})
    drive = AncillaPolynomial({("X",): 0.3})
    spec1 = HamiltonianSpec([Term(1.0, {}, tat)], 2, 2 + n_anc, n_anc)
    spec2 = HamiltonianSpec([Term(1.0, {0: "Z"}, drive),
                             Term(0.4, {1: "Z"}, AncillaPolynomial({("Z",): 0.1}))],
                            2, 2 + n_anc, n_anc)
    return Schedule([Segment(spec1, 0.12), RotationLayer([(0, "h", np.pi)]),
                     Segment(spec2, 0.2)],
                    AncillaSpace.dicke(n_anc), 2 + n_anc, 2, n_anc)


def test_dicke_matches_full_state_oracle():
    n_anc = 8
    sched = _symmetric_schedule(n_anc)
    rng = np.random.default_rng(2)
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    psi /= np.linalg.norm(psi)
    fin = evolve(embed_initial_state(psi, sched.ancilla, (0, 1)), sched)
    emb = hybrid_dicke_to_full(fin)
    full = full_state_evolve(sched, psi, (0, 1))
    assert 1.0 - abs(np.vdot(emb, full)) ** 2 < 1e-8


def test_oracle_rotation_only_schedule():
    n_anc = 3
    sched = Schedule([RotationLayer([(0, "x", 0.3), (1, "y", 1.1), (0, "z", 0.7)])],
                     AncillaSpace.dicke(n_anc), 2 + n_anc, 2, n_anc)
    psi = np.array([0.5, 0.5, 0.5, 0.5], dtype=complex)
    full = full_state_evolve(sched, psi, (0, 1))
    u = np.kron(rotation_matrix("z", 0.7) @ rotation_matrix("x", 0.3),
                rotation_matrix("y", 1.1))
    anc = np.zeros(2**n_anc, dtype=complex)
    anc[0] = 1.0
    assert np.linalg.norm(full - np.kron(u @ psi, anc)) < 1e-12


def test_oracle_empty_schedule_is_identity():
    n_anc = 4
    sched = Schedule([], AncillaSpace.dicke(n_anc), 1 + n_anc, 2, n_anc)
    psi = np.array([0.8, 0.6j])
    full = full_state_evolve(sched, psi, (0,))
    anc = np.zeros(2**n_anc, dtype=complex)
    anc[0] = 1.0
    assert np.linalg.norm(full - np.kron(psi, anc)) < 1e-15


def test_exact_hp_single_excitation_element():
    b = exact_hp_operator(30)
    assert abs(b[0, 1] - 1.0) < 1e-12


def test_exact_hp_is_truncated_ladder():
    n = 25
    b = exact_hp_operator(n)
    expected = np.zeros((n + 1, n + 1), dtype=complex)
    expected[np.arange(n), np.arange(1, n + 1)] = np.sqrt(np.arange(1.0, n + 1))
    assert np.abs(b - expected).max() < 1e-10


def test_exact_hp_commutator_block():
    n = 40
    b = exact_hp_operator(n)
    bd = b.conj().T
    comm = b @ bd - bd @ b
    m_max = n // 4
    blk = slice(0, m_max + 1)
    dev = np.abs(comm[blk, blk] - np.eye(n + 1)[blk, blk]).max()
    assert dev <= 2.0 * m_max / n + 1e-10


def test_hp_truncation_converges_to_exact():
    n = 64
    ops = build_collective_ops(AncillaSpace.dicke(n))
    bex = exact_hp_operator(n)
    blk = slice(0, int(np.sqrt(n)) + 1)
    errs = [np.linalg.norm(hp_truncate(k, n).evaluate(ops)[blk, blk] - bex[blk, blk], 2)
            for k in range(4)]
    assert all(errs[i + 1] < errs[i] for i in range(3))
