"""Random diagonal unitaries from 2-qubit phase-random circuits.

Each pair of qubits receives an independent diagonal gate with four phases
drawn uniformly from [0, 2pi). Products of such gates over all pairs match
the first two moments of a uniformly random diagonal unitary.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .statesim import GateOp


def _pairs(n: int) -> list[tuple[int, int]]:
    return list(itertools.combinations(range(n), 2))


def _local_index(n: int) -> list[np.ndarray]:
    """For every gate, the local basis index (big-endian) seen by each global basis state.

    Pair gates come first, then one single-qubit phase gate per wire.
    """
    x = np.arange(2**n)
    bit = [(x >> (n - 1 - q)) & 1 for q in range(n)]
    return [2 * bit[p] + bit[q] for p, q in _pairs(n)] + bit


@dataclass
class DiagonalDesignCircuit:
    """One diagonal gate per wire pair (four phases) and per wire (two phases)."""

    n_qubits: int
    pair_phases: np.ndarray  # (n*(n-1)/2, 4)
    single_phases: np.ndarray  # (n, 2)

    @classmethod
    def sample(cls, n: int, rng: np.random.Generator) -> "DiagonalDesignCircuit":
        if n < 1:
            raise ValueError("need at least one qubit")
        pairs = rng.uniform(0.0, 2 * np.pi, size=(len(_pairs(n)), 4))
        singles = rng.uniform(0.0, 2 * np.pi, size=(n, 2))
        return cls(n, pairs, singles)

    def gates(self, wires: list[int] | None = None) -> list[GateOp]:
        wires = list(range(self.n_qubits)) if wires is None else list(wires)
        out = [GateOp(np.diag(np.exp(1j * th)), [wires[p], wires[q]], name="DIAG2")
               for th, (p, q) in zip(self.pair_phases, _pairs(self.n_qubits))]
        out += [GateOp(np.diag(np.exp(1j * th)), [w], name="DIAG1") for th, w in zip(self.single_phases, wires)]
        return out

    def diagonal(self) -> np.ndarray:
        idx = _local_index(self.n_qubits)
        n_pairs = len(self.pair_phases)
        theta = np.zeros(2**self.n_qubits)
        for g, ix in enumerate(idx):
            theta += self.pair_phases[g][ix] if g < n_pairs else self.single_phases[g - n_pairs][ix]
        return np.exp(1j * theta)


def sample_diagonals(n: int, rng: np.random.Generator, size: int) -> np.ndarray:
    """Diagonals of ``size`` independent design circuits, shape ``(size, 2**n)``."""
    idx = _local_index(n)
    n_pairs = len(_pairs(n))
    pairs = rng.uniform(0.0, 2 * np.pi, size=(size, n_pairs, 4))
    singles = rng.uniform(0.0, 2 * np.pi, size=(size, n, 2))
    theta = np.zeros((size, 2**n))
    for g, ix in enumerate(idx):
        theta += pairs[:, g, ix] if g < n_pairs else singles[:, g - n_pairs, ix]
    return np.exp(1j * theta)
