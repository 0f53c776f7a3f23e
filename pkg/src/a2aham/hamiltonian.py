"""Symbolic Hamiltonian specs, schedules, and the coupling-budget validator.

A Hamiltonian term is  coeff * (Pauli string on data qubits) * (ancilla op).
The ancilla op is either a polynomial in the collective/boson symbols
{X, Y, Z, b, bdag, x, p} or an explicit map of ancilla sites to Paulis
(needed for the Fourier-weighted couplings, which are not permutation
symmetric).

The budget validator expands collective polynomials exactly into sums over
distinct-site Pauli monomials and checks, for every site tuple of size k,
that the summed |coupling| stays within n_tot^(2-k).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .spaces import AncillaSpace, CollectiveOps

SPEC_VERSION = "1"

SPIN_SYMBOLS = ("X", "Y", "Z")
BOSON_SYMBOLS = ("b", "bdag", "x", "p")

_ADJOINT = {"X": "X", "Y": "Y", "Z": "Z", "b": "bdag", "bdag": "b", "x": "x", "p": "p"}


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


class AncillaPolynomial:
    """Polynomial in formal ancilla symbols with complex coefficients.

    Monomials are ordered tuples of symbols (products do not commute);
    the empty tuple is the identity.
    """

    def __init__(self, terms=None):
        self.terms: dict = {}
        if terms:
            for mono, c in terms.items():
                c = complex(c)
                if c != 0:
                    self.terms[tuple(mono)] = self.terms.get(tuple(mono), 0) + c
        self._prune()

    def _prune(self, tol=0.0):
        self.terms = {m: c for m, c in self.terms.items() if abs(c) > tol}

    @staticmethod
    def identity(scale=1.0) -> "AncillaPolynomial":
        return AncillaPolynomial({(): scale})

    @staticmethod
    def symbol(name: str, scale=1.0) -> "AncillaPolynomial":
        if name not in SPIN_SYMBOLS + BOSON_SYMBOLS:
            raise ValueError(f"unknown ancilla symbol {name!r}")
        return AncillaPolynomial({(name,): scale})

    def __add__(self, other):
        if not isinstance(other, AncillaPolynomial):
            other = AncillaPolynomial.identity(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0) + c
        return AncillaPolynomial(out)

    def __sub__(self, other):
        return self + (other * -1 if isinstance(other, AncillaPolynomial)
                       else AncillaPolynomial.identity(-other))

    def __mul__(self, other):
        if isinstance(other, AncillaPolynomial):
            out = {}
            for m1, c1 in self.terms.items():
                for m2, c2 in other.terms.items():
                    m = m1 + m2
                    out[m] = out.get(m, 0) + c1 * c2
            return AncillaPolynomial(out)
        return AncillaPolynomial({m: c * other for m, c in self.terms.items()})

    __rmul__ = __mul__

    def adjoint(self) -> "AncillaPolynomial":
        out = {}
        for m, c in self.terms.items():
            madj = tuple(_ADJOINT[s] for s in reversed(m))
            out[madj] = out.get(madj, 0) + np.conj(c)
        return AncillaPolynomial(out)

    def hermitized(self) -> "AncillaPolynomial":
        return (self + self.adjoint()) * 0.5

    def degree(self) -> int:
        """Max monomial length; upper bound on single-site operator weight."""
        return max((len(m) for m in self.terms), default=0)

    def uses_boson_symbols(self) -> bool:
        return any(s in BOSON_SYMBOLS for m in self.terms for s in m)

    def evaluate(self, ops: CollectiveOps) -> np.ndarray:
        key = (ops.space.mode, ops.space.dim)
        cache = self.__dict__.setdefault("_eval_cache", {})
        if key in cache:
            return cache[key]
        dim = ops.space.dim
        out = None
        prod_cache: dict = {}
        for mono, c in sorted(self.terms.items(), key=lambda kv: (len(kv[0]), kv[0])):
            if mono == ():
                term = c * np.eye(dim, dtype=complex)
            else:
                if mono not in prod_cache:
                    prefix = mono[:-1]
                    tail = ops.symbol_matrix(mono[-1])
                    if prefix == ():
                        acc = tail.copy()
                    else:
                        if prefix not in prod_cache:
                            head = None
                            for s in prefix:
                                m = ops.symbol_matrix(s)
                                head = m.copy() if head is None else head @ m
                            prod_cache[prefix] = head
                        acc = prod_cache[prefix] @ tail
                    prod_cache[mono] = acc
                acc = prod_cache[mono]
                term = c * (acc.toarray() if hasattr(acc, "toarray") else acc)
            out = term if out is None else out + term
        if out is None:
            out = np.zeros((dim, dim), dtype=complex)
        cache[key] = out
        return out

    def to_json(self) -> list:
        items = sorted(self.terms.items(), key=lambda kv: kv[0])
        return [{"re": _fmt(c.real), "im": _fmt(c.imag), "symbols": list(m)}
                for m, c in items]

    @staticmethod
    def from_json(data: list) -> "AncillaPolynomial":
        terms = {}
        for entry in data:
            m = tuple(entry["symbols"])
            terms[m] = terms.get(m, 0) + complex(float(entry["re"]), float(entry["im"]))
        return AncillaPolynomial(terms)

    def __repr__(self):
        parts = [f"{c:+.4g}*{'·'.join(m) if m else 'I'}" for m, c in sorted(self.terms.items())]
        return "Poly(" + " ".join(parts) + ")"


def hp_truncate(k_hp: int, n: int) -> AncillaPolynomial:
    """Series-truncated boson annihilation operator in collective spin symbols.

    Returns (1/(2 sqrt n)) * [sum_{j<=k_hp} c_j ((n-Z)/(2n))^j] (X + iY) with
    c_j the Taylor coefficients of (1-s)^(-1/2).
    """
    if k_hp < 0:
        raise ValueError("series order must be >= 0")
    s = AncillaPolynomial({(): 0.5, ("Z",): -1.0 / (2.0 * n)})
    acc = AncillaPolynomial.identity(0.0)
    s_pow = AncillaPolynomial.identity(1.0)
    for j in range(k_hp + 1):
        cj = comb(2 * j, j) / 4.0**j
        acc = acc + s_pow * cj
        s_pow = s_pow * s
    ladder = AncillaPolynomial({("X",): 1.0, ("Y",): 1j})
    return (acc * ladder) * (1.0 / (2.0 * np.sqrt(n)))


def hp_series_coefficient(j: int) -> float:
    """Taylor coefficient c_j of (1-s)^(-1/2)."""
    return comb(2 * j, j) / 4.0**j


@dataclass
class Term:
    """coeff * (data Pauli string) * (ancilla operator)."""

    coeff: float
    data_pauli: dict = field(default_factory=dict)     # qubit label -> 'X'|'Y'|'Z'
    ancilla_op: AncillaPolynomial | None = None         # collective polynomial
    ancilla_sites: dict = field(default_factory=dict)   # ancilla site -> Pauli

    def __post_init__(self):
        self.coeff = float(self.coeff)
        self.data_pauli = {int(q): p for q, p in self.data_pauli.items()}
        for p in self.data_pauli.values():
            if p not in ("X", "Y", "Z"):
                raise ValueError(f"bad data Pauli {p!r}")
        self.ancilla_sites = {int(i): p for i, p in (self.ancilla_sites or {}).items()}
        if self.ancilla_op is not None and self.ancilla_sites:
            raise ValueError("term may use a collective polynomial or explicit sites, not both")

    def locality_upper_bound(self) -> int:
        anc = len(self.ancilla_sites)
        if self.ancilla_op is not None:
            if self.ancilla_op.uses_boson_symbols():
                return len(self.data_pauli)  # boson symbols carry no site weight
            anc = self.ancilla_op.degree()
        return len(self.data_pauli) + anc

    def data_is_z_only(self) -> bool:
        return all(p == "Z" for p in self.data_pauli.values())


@dataclass
class HamiltonianSpec:
    """Symbolic Hamiltonian: a sum of Terms with locality/normalization info."""

    terms: list
    locality: int
    n_tot: int
    n_anc: int

    def __post_init__(self):
        if self.locality < 2:
            raise ValueError("locality must be >= 2")
        for t in self.terms:
            lb = t.locality_upper_bound()
            if lb > self.locality and not (t.ancilla_op is not None
                                           and t.ancilla_op.uses_boson_symbols()):
                raise ValueError(f"term exceeds locality {self.locality}: bound {lb}")

    def uses_boson_symbols(self) -> bool:
        return any(t.ancilla_op is not None and t.ancilla_op.uses_boson_symbols()
                   for t in self.terms)

    def data_is_z_only(self) -> bool:
        return all(t.data_is_z_only() for t in self.terms)

    def data_labels(self) -> set:
        out = set()
        for t in self.terms:
            out |= set(t.data_pauli)
        return out

    def scaled(self, factor: float) -> "HamiltonianSpec":
        return HamiltonianSpec(
            [Term(t.coeff * factor, dict(t.data_pauli),
                  t.ancilla_op, dict(t.ancilla_sites)) for t in self.terms],
            self.locality, self.n_tot, self.n_anc)


# ---------------------------------------------------------------------------
# collective -> distinct-site expansion
#
# M(a,b,c) denotes the sum over disjoint site subsets A,B,C of sizes a,b,c of
# prod X_A prod Y_B prod Z_C.  Left-multiplying by a collective operator obeys
# closed-form rules (fresh site / same-site Pauli product).
# ---------------------------------------------------------------------------

def _mul_collective(sym: str, mono: dict, n_sites: int) -> dict:
    out = {}

    def add(key, val):
        a, b, c = key
        if a < 0 or b < 0 or c < 0 or a + b + c > n_sites:
            return
        out[key] = out.get(key, 0) + val

    for (a, b, c), g in mono.items():
        free = n_sites - a - b - c + 1
        if sym == "X":
            add((a + 1, b, c), (a + 1) * g)
            add((a - 1, b, c), free * g)
            add((a, b - 1, c + 1), 1j * (c + 1) * g)
            add((a, b + 1, c - 1), -1j * (b + 1) * g)
        elif sym == "Y":
            add((a, b + 1, c), (b + 1) * g)
            add((a, b - 1, c), free * g)
            add((a + 1, b, c - 1), 1j * (a + 1) * g)
            add((a - 1, b, c + 1), -1j * (c + 1) * g)
        elif sym == "Z":
            add((a, b, c + 1), (c + 1) * g)
            add((a, b, c - 1), free * g)
            add((a - 1, b + 1, c), 1j * (b + 1) * g)
            add((a + 1, b - 1, c), -1j * (a + 1) * g)
        else:
            raise ValueError(f"cannot site-expand boson symbol {sym!r}")
    return {k: v for k, v in out.items() if v != 0}


def expand_collective(poly: AncillaPolynomial, n_sites: int) -> dict:
    """Exact expansion of a spin polynomial into the M(a,b,c) basis."""
    total = {}
    for mono, coeff in poly.terms.items():
        acc = {(0, 0, 0): 1.0 + 0j}
        for sym in reversed(mono):  # operators act right-to-left
            acc = _mul_collective(sym, acc, n_sites)
        for key, g in acc.items():
            total[key] = total.get(key, 0) + coeff * g
    return {k: v for k, v in total.items() if v != 0}


@dataclass
class BudgetVerdict:
    ok: bool
    worst_ratio: float
    worst_description: str
    entries: list

    def __bool__(self):
        return self.ok


def validate_norm_budget(spec: HamiltonianSpec, slack: float = 1e-9) -> BudgetVerdict:
    """Check the per-site-tuple coupling budget sum|J| <= n_tot^(2-k).

    Site tuples of size < 2 are exempt (single-qubit rotations are free).
    Collective polynomials expand symmetrically, so one representative tuple
    per (data string, ancilla weight) covers them; explicitly site-resolved
    terms are merged tuple-by-tuple.
    """
    if spec.uses_boson_symbols():
        raise ValueError("budget validation requires a pure spin/qubit spec")
    n_tot = spec.n_tot
    n_anc = spec.n_anc

    # collective part: (data string, (a,b,c)) -> summed coefficient
    coll: dict = {}
    # site-resolved part: (data string, ((site, pauli), ...)) -> summed coefficient
    site: dict = {}
    for t in spec.terms:
        dstring = tuple(sorted(t.data_pauli.items()))
        if t.ancilla_sites:
            astring = tuple(sorted(t.ancilla_sites.items()))
            key = (dstring, astring)
            site[key] = site.get(key, 0) + t.coeff
        else:
            poly = t.ancilla_op if t.ancilla_op is not None else AncillaPolynomial.identity()
            for (a, b, c), g in expand_collective(poly, n_anc).items():
                key = (dstring, (a, b, c))
                coll[key] = coll.get(key, 0) + t.coeff * g

    entries = []

    # group collective entries by (data support, ancilla weight)
    groups: dict = {}
    for (dstring, (a, b, c)), val in coll.items():
        support = tuple(sorted(q for q, _ in dstring))
        w = a + b + c
        groups.setdefault((support, w), []).append(((dstring, (a, b, c)), val))
    for (support, w), items in groups.items():
        k = len(support) + w
        if k < 2:
            continue
        total = 0.0
        for (_, (a, b, c)), val in items:
            npat = comb(w, a) * comb(w - a, b)  # letter placements on the tuple
            total += npat * abs(val)
        budget = float(n_tot) ** (2 - k)
        entries.append({
            "kind": "collective",
            "data_support": support,
            "ancilla_weight": w,
            "locality": k,
            "sum_abs_J": total,
            "budget": budget,
            "ratio": total / budget,
        })

    # site-resolved tuples (merge any collective weight-w patterns on them)
    site_groups: dict = {}
    for (dstring, astring), val in site.items():
        support = tuple(sorted(q for q, _ in dstring))
        sites = tuple(sorted(s for s, _ in astring))
        site_groups.setdefault((support, sites), {})[(dstring, astring)] = val
    for (support, sites), patterns in site_groups.items():
        w = len(sites)
        k = len(support) + w
        if k < 2:
            continue
        total = 0.0
        for (dstring, astring), val in patterns.items():
            merged = val
            # collective contribution with the same letters on this tuple
            letters = tuple(p for _, p in astring)
            a = letters.count("X")
            b = letters.count("Y")
            c = letters.count("Z")
            merged += coll.get((dstring, (a, b, c)), 0)
            total += abs(merged)
        budget = float(n_tot) ** (2 - k)
        entries.append({
            "kind": "site",
            "data_support": support,
            "ancilla_sites": sites,
            "locality": k,
            "sum_abs_J": total,
            "budget": budget,
            "ratio": total / budget,
        })

    if not entries:
        return BudgetVerdict(True, 0.0, "no constrained tuples", [])
    worst = max(entries, key=lambda e: e["ratio"])
    ok = worst["ratio"] <= 1.0 + slack
    desc = (f"{worst['kind']} tuple, data={worst['data_support']}, "
            f"ancilla_weight={worst.get('ancilla_weight', worst.get('ancilla_sites'))}, "
            f"k={worst['locality']}, sum|J|={worst['sum_abs_J']:.6g}, "
            f"budget={worst['budget']:.6g}, ratio={worst['ratio']:.6g}")
    return BudgetVerdict(ok, worst["ratio"], desc, entries)


@dataclass
class SubstitutionReport:
    dropped_norm: float
    dropped_monomials: int


def substitute_boson_with_spin_poly(poly: AncillaPolynomial, n: int, k_hp: int,
                                    weight_cap: int | None = None):
    """Replace boson symbols by truncated collective-spin series and hermitize."""
    B = hp_truncate(k_hp, n)
    Bd = B.adjoint()
    xs = (B + Bd) * (1.0 / np.sqrt(2.0))
    ps = (B - Bd) * (-1j / np.sqrt(2.0))
    table = {"b": B, "bdag": Bd, "x": xs, "p": ps}
    out = AncillaPolynomial.identity(0.0)
    for mono, c in poly.terms.items():
        acc = AncillaPolynomial.identity(1.0)
        for s in mono:
            acc = acc * table.get(s, AncillaPolynomial.symbol(s) if s in SPIN_SYMBOLS else None)
        out = out + acc * c
    out = out.hermitized()
    dropped = 0.0
    ndropped = 0
    if weight_cap is not None:
        kept = {}
        for mono, c in out.terms.items():
            if len(mono) <= weight_cap:
                kept[mono] = c
            else:
                dropped += abs(c) * float(n) ** len(mono)  # operator-norm upper bound
                ndropped += 1
        out = AncillaPolynomial(kept)
    return out, SubstitutionReport(dropped, ndropped)


def substitute_boson_with_spin(spec: HamiltonianSpec, n: int, k_hp: int):
    """Boson-symbol Hamiltonian -> collective-spin form, capped at its locality."""
    new_terms = []
    report = SubstitutionReport(0.0, 0)
    for t in spec.terms:
        if t.ancilla_op is None or not t.ancilla_op.uses_boson_symbols():
            new_terms.append(t)
            continue
        cap = spec.locality - len(t.data_pauli)
        poly, rep = substitute_boson_with_spin_poly(t.ancilla_op, n, k_hp, weight_cap=cap)
        report.dropped_norm += abs(t.coeff) * rep.dropped_norm
        report.dropped_monomials += rep.dropped_monomials
        new_terms.append(Term(t.coeff, dict(t.data_pauli), poly))
    return HamiltonianSpec(new_terms, spec.locality, spec.n_tot, spec.n_anc), report


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------

@dataclass
class Segment:
    spec: HamiltonianSpec
    duration: float

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("segment duration must be >= 0")


@dataclass
class RotationLayer:
    rotations: list  # (qubit, axis in {x,y,z,h}, angle); exp(-i angle/2 sigma_axis)


@dataclass
class Schedule:
    elements: list
    ancilla: AncillaSpace
    n_tot: int
    locality: int
    n_anc: int
    global_phase: float = 0.0

    @property
    def total_time(self) -> float:
        return float(sum(e.duration for e in self.elements if isinstance(e, Segment)))

    def segments(self):
        return [e for e in self.elements if isinstance(e, Segment)]

    def reversed_negated(self) -> "Schedule":
        """Time-reversed schedule with negated generators and rotations."""
        rev = []
        for e in reversed(self.elements):
            if isinstance(e, Segment):
                rev.append(Segment(e.spec.scaled(-1.0), e.duration))
            else:
                rev.append(RotationLayer([(q, ax, -th) for q, ax, th in reversed(e.rotations)]))
        return Schedule(rev, self.ancilla, self.n_tot, self.locality, self.n_anc,
                        -self.global_phase)

    def concatenated(self, other: "Schedule") -> "Schedule":
        if other.ancilla != self.ancilla:
            raise ValueError("cannot concatenate schedules over different ancilla spaces")
        return Schedule(self.elements + other.elements, self.ancilla,
                        max(self.n_tot, other.n_tot), max(self.locality, other.locality),
                        self.n_anc, self.global_phase + other.global_phase)


def schedule_to_json(schedule: Schedule) -> str:
    doc = {
        "spec_version": SPEC_VERSION,
        "n_tot": schedule.n_tot,
        "locality": schedule.locality,
        "n_anc": schedule.n_anc,
        "ancilla": schedule.ancilla.describe(),
        "global_phase": _fmt(schedule.global_phase),
        "elements": [],
    }
    for e in schedule.elements:
        if isinstance(e, Segment):
            doc["elements"].append({
                "type": "segment",
                "duration": _fmt(e.duration),
                "terms": [
                    {
                        "coeff": _fmt(t.coeff),
                        "data_pauli": {str(q): p for q, p in sorted(t.data_pauli.items())},
                        "ancilla_poly": t.ancilla_op.to_json() if t.ancilla_op else [],
                        "ancilla_sites": {str(s): p for s, p in sorted(t.ancilla_sites.items())},
                    }
                    for t in e.spec.terms
                ],
            })
        else:
            doc["elements"].append({
                "type": "rotations",
                "rotations": [[int(q), ax, _fmt(th)] for q, ax, th in e.rotations],
            })
    return json.dumps(doc, indent=1)


def schedule_from_json(text: str) -> Schedule:
    doc = json.loads(text)
    if doc.get("spec_version") != SPEC_VERSION:
        raise ValueError(f"unsupported schedule spec_version {doc.get('spec_version')!r}")
    ancilla = AncillaSpace.from_dict(doc["ancilla"])
    n_tot = int(doc["n_tot"])
    locality = int(doc["locality"])
    n_anc = int(doc["n_anc"])
    elements = []
    for entry in doc["elements"]:
        if entry["type"] == "segment":
            terms = []
            for td in entry["terms"]:
                poly = AncillaPolynomial.from_json(td.get("ancilla_poly", []))
                if not poly.terms:
                    poly = None
                terms.append(Term(
                    float(td["coeff"]),
                    {int(q): p for q, p in td.get("data_pauli", {}).items()},
                    poly,
                    {int(s): p for s, p in td.get("ancilla_sites", {}).items()},
                ))
            spec = HamiltonianSpec(terms, locality, n_tot, n_anc)
            elements.append(Segment(spec, float(entry["duration"])))
        elif entry["type"] == "rotations":
            elements.append(RotationLayer(
                [(int(q), ax, float(th)) for q, ax, th in entry["rotations"]]))
        else:
            raise ValueError(f"unknown schedule element type {entry['type']!r}")
    return Schedule(elements, ancilla, n_tot, locality, n_anc,
                    float(doc.get("global_phase", 0.0)))
