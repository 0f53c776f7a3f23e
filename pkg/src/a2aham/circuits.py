"""Minimal CZ-layer circuit representation and its JSON wire format.

A circuit is a list of layers; each layer holds nonoverlapping CZ gates
(qubit pairs) followed by arbitrary single-qubit axis-angle rotations.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class Layer:
    gates: list = field(default_factory=list)       # [(a, b), ...] disjoint pairs
    rotations: list = field(default_factory=list)   # [(qubit, axis, angle), ...]

    def __post_init__(self):
        seen = set()
        for a, b in self.gates:
            if a == b:
                raise ValueError("CZ needs two distinct qubits")
            if a in seen or b in seen:
                raise ValueError("gates within a layer must not overlap")
            seen.update((a, b))


@dataclass
class Circuit:
    n_data: int
    layers: list = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def n_gates(self) -> int:
        return sum(len(l.gates) for l in self.layers)

    def __post_init__(self):
        for layer in self.layers:
            for a, b in layer.gates:
                if not (0 <= a < self.n_data and 0 <= b < self.n_data):
                    raise ValueError("gate endpoint outside the data register")


def circuit_to_json(circuit: Circuit) -> str:
    return json.dumps({
        "n_data": circuit.n_data,
        "layers": [
            {"gates": [[int(a), int(b)] for a, b in l.gates],
             "rotations": [[int(q), ax, float(th)] for q, ax, th in l.rotations]}
            for l in circuit.layers
        ],
    }, indent=1)


def circuit_from_json(text: str) -> Circuit:
    doc = json.loads(text)
    layers = [Layer([(int(a), int(b)) for a, b in l.get("gates", [])],
                    [(int(q), ax, float(th)) for q, ax, th in l.get("rotations", [])])
              for l in doc["layers"]]
    return Circuit(int(doc["n_data"]), layers)


def random_layer_circuit(n_data: int, depth: int, rng) -> Circuit:
    """Random CZ layers with random single-qubit rotations between them."""
    layers = []
    two_pi = 2 * 3.141592653589793
    for _ in range(depth):
        qubits = list(range(n_data))
        rng.shuffle(qubits)
        gates = [(qubits[2 * i], qubits[2 * i + 1]) for i in range(n_data // 2)]
        rotations = []
        for q in range(n_data):
            for axis in ("z", "x", "z"):
                rotations.append((q, axis, float(rng.uniform(0, two_pi))))
        layers.append(Layer(gates, rotations))
    return Circuit(n_data, layers)
