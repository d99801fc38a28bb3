"""Dense statevector simulator.

Wire convention: wire 0 is the most significant bit of the amplitude index,
so an n-qubit register vector equals ``kron(q_0, q_1, ..., q_{n-1})``. A gate
matrix acting on ``targets = [t_0, ..., t_{k-1}]`` uses the same ordering over
its targets: ``kron(A, B)`` applied on ``[a, b]`` puts ``A`` on wire ``a``.

Every kernel accepts amplitude arrays with leading batch axes, shape
``(..., 2**n)``, and per-item gate stacks of shape ``(batch, D, D)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NotUnitaryError, ShapeError
from .paulis import PAULI, parse_pauli_string
from .tensor import hermitian_eigh, is_unitary

UNITARY_TOL = 1e-10


@dataclass
class StateVector:
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        n = a.shape[-1].bit_length() - 1
        if a.ndim != 1 or 2**n != a.shape[-1]:
            raise ShapeError(f"amplitude vector of length {a.shape[-1]} is not a qubit register")
        self.amplitudes = a

    @property
    def n_qubits(self) -> int:
        return self.amplitudes.shape[0].bit_length() - 1

    @classmethod
    def zero(cls, n: int) -> "StateVector":
        a = np.zeros(2**n, dtype=complex)
        a[0] = 1.0
        return cls(a)

    @classmethod
    def basis(cls, bits: str) -> "StateVector":
        a = np.zeros(2 ** len(bits), dtype=complex)
        a[int(bits, 2) if bits else 0] = 1.0
        return cls(a)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy())


@dataclass
class GateOp:
    """A unitary on ``targets``; ``control`` adds a single control wire."""

    matrix: np.ndarray
    targets: list[int]
    control: int | None = None
    name: str = "U"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        self.targets = [int(t) for t in self.targets]
        k = len(self.targets)
        if self.matrix.shape != (2**k, 2**k):
            raise ShapeError(f"gate {self.name}: matrix {self.matrix.shape} does not fit {k} targets")
        wires = self.wires
        if len(set(wires)) != len(wires):
            raise ShapeError(f"gate {self.name}: repeated wires {wires}")

    @property
    def wires(self) -> list[int]:
        return ([self.control] if self.control is not None else []) + self.targets

    def full_matrix(self) -> np.ndarray:
        """Matrix over ``self.wires`` (control first)."""
        if self.control is None:
            return self.matrix
        d = self.matrix.shape[0]
        out = np.eye(2 * d, dtype=complex)
        out[d:, d:] = self.matrix
        return out

    def describe(self) -> str:
        extra = "".join(f" {k}={v}" for k, v in self.params.items())
        return f"{self.name} {','.join(map(str, self.wires))}{extra}"


def apply_matrix(amps: np.ndarray, matrix: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """Apply ``matrix`` (shared, or one per batch item) to ``targets``.

    ``amps`` has shape ``(2**n,)`` or ``(batch, 2**n)``. A per-item stack has
    shape ``(batch, D, D)``.
    """
    k = len(targets)
    batch_shape = amps.shape[:-1]
    nb = len(batch_shape)
    psi = amps.reshape(batch_shape + (2,) * n)
    src = [nb + t for t in targets]
    dst = list(range(nb + n - k, nb + n))
    psi = np.moveaxis(psi, src, dst)
    moved_shape = psi.shape
    if matrix.ndim == 2:
        psi = psi.reshape(-1, 2**k) @ matrix.T
    else:
        if nb != 1 or matrix.shape[0] != batch_shape[0]:
            raise ShapeError("per-item gate stack requires a single batch axis of matching length")
        psi = np.matmul(psi.reshape(batch_shape[0], -1, 2**k), matrix.transpose(0, 2, 1))
    psi = np.moveaxis(psi.reshape(moved_shape), dst, src)
    return psi.reshape(amps.shape)


def apply_gate(state: StateVector, gate: GateOp, check: bool = True) -> StateVector:
    if check and not is_unitary(gate.matrix, UNITARY_TOL):
        raise NotUnitaryError(f"gate {gate.name} on {gate.wires} is not unitary")
    n = state.n_qubits
    if max(gate.wires) >= n or min(gate.wires) < 0:
        raise ShapeError(f"gate {gate.name} touches wires {gate.wires} outside a {n}-qubit register")
    return StateVector(apply_matrix(state.amplitudes, gate.full_matrix(), gate.wires, n))


def apply_circuit(state: StateVector, gates: Sequence[GateOp], check: bool = True) -> StateVector:
    for g in gates:
        state = apply_gate(state, g, check)
    return state


def wire_marginals(amps: np.ndarray, wires: Sequence[int], n: int) -> np.ndarray:
    """Born probabilities of the computational outcomes on ``wires``.

    Returns shape ``(..., 2**len(wires))``, outcome index big-endian over ``wires``.
    """
    batch_shape = amps.shape[:-1]
    nb = len(batch_shape)
    p = np.abs(amps.reshape(batch_shape + (2,) * n)) ** 2
    keep = [nb + w for w in wires]
    rest = tuple(ax for ax in range(nb, nb + n) if ax not in keep)
    p = np.moveaxis(p, keep, list(range(nb, nb + len(wires))))
    p = p.sum(axis=tuple(range(nb + len(wires), nb + n))) if rest else p
    return p.reshape(batch_shape + (2 ** len(wires),))


def project_wires(amps: np.ndarray, wires: Sequence[int], outcome, n: int) -> np.ndarray:
    """Unnormalized projection of ``wires`` onto computational ``outcome``.

    ``outcome`` is an int (big-endian over ``wires``) or an array with one
    outcome per batch item. The measured wires stay in the register.
    """
    k = len(wires)
    bits = (np.asarray(outcome)[..., None] >> np.arange(k - 1, -1, -1)) & 1
    batch_shape = amps.shape[:-1]
    nb = len(batch_shape)
    idx = np.arange(2**n)
    mask = np.ones(batch_shape + (2**n,), dtype=bool)
    for pos, w in enumerate(wires):
        wb = (idx >> (n - 1 - w)) & 1
        mask &= wb == bits[..., pos:pos + 1] if nb else wb == bits[pos]
    return np.where(mask, amps, 0)


def measure_computational(state: StateVector, wires: Sequence[int], rng: np.random.Generator
                          ) -> tuple[tuple[int, ...], StateVector]:
    """Sample the computational-basis outcome on ``wires`` and collapse."""
    n = state.n_qubits
    p = wire_marginals(state.amplitudes, wires, n)
    k = int(rng.choice(p.size, p=p / p.sum()))
    post = project_wires(state.amplitudes, wires, k, n)
    post = post / np.linalg.norm(post)
    bits = tuple((k >> (len(wires) - 1 - i)) & 1 for i in range(len(wires)))
    return bits, StateVector(post)


_BASIS_CHANGE = {
    "X": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "Y": np.array([[1, -1j], [1, 1j]], dtype=complex) / np.sqrt(2),
    "Z": np.eye(2, dtype=complex),
}


@dataclass
class Observable:
    """Bounded Hermitian observable (operator norm at most 1) on given wires.

    kinds: ``pauli`` (coefficient times a Pauli string, measured by basis
    change plus parity), ``projector`` (rank-1 ``|v><v|``) and ``dense``.
    """

    kind: str
    wires: list[int]
    paulis: str = ""
    coefficient: float = 1.0
    vector: np.ndarray | None = None
    dense: np.ndarray | None = None
    _eig: tuple | None = field(default=None, repr=False)

    @classmethod
    def pauli(cls, paulis: str, wires: Sequence[int], coefficient: float = 1.0) -> "Observable":
        if len(paulis) != len(wires):
            raise ShapeError("one Pauli letter per wire")
        if abs(coefficient) > 1 + 1e-12:
            raise ValueError(f"observable norm {abs(coefficient)} exceeds 1")
        if any(c not in "IXYZ" for c in paulis):
            raise ValueError(f"bad Pauli string {paulis!r}")
        return cls("pauli", list(wires), paulis=paulis, coefficient=float(coefficient))

    @classmethod
    def from_label(cls, label: str) -> "Observable":
        """Parse ``"0.5 Z@0 X@3"`` style labels."""
        coeff, ops = parse_pauli_string(label)
        if not ops:
            raise ValueError("identity observable needs at least one wire; use 'I@w'")
        wires = sorted(ops)
        return cls.pauli("".join(ops[w] for w in wires), wires, coeff)

    @classmethod
    def projector(cls, vector: np.ndarray, wires: Sequence[int]) -> "Observable":
        v = np.asarray(vector, dtype=complex)
        if v.shape != (2 ** len(wires),):
            raise ShapeError("projector vector does not fit wires")
        return cls("projector", list(wires), vector=v / np.linalg.norm(v))

    @classmethod
    def hermitian(cls, matrix: np.ndarray, wires: Sequence[int]) -> "Observable":
        m = np.asarray(matrix, dtype=complex)
        if m.shape != (2 ** len(wires),) * 2:
            raise ShapeError("matrix does not fit wires")
        if np.abs(m - m.conj().T).max() > 1e-10:
            raise ValueError("observable is not Hermitian")
        obs = cls("dense", list(wires), dense=m)
        if np.max(np.abs(obs.eigensystem()[0])) > 1 + 1e-9:
            raise ValueError("observable norm exceeds 1")
        return obs

    def matrix(self) -> np.ndarray:
        if self.kind == "pauli":
            out = np.ones((1, 1), dtype=complex)
            for c in self.paulis:
                out = np.kron(out, PAULI[c])
            return self.coefficient * out
        if self.kind == "projector":
            return np.outer(self.vector, self.vector.conj())
        return self.dense

    def eigensystem(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct eigenvalues and the matching spectral projector basis.

        Returns ``(values, vectors)`` where column ``k`` of ``vectors``
        belongs to eigenvalue ``values[k]`` (values may repeat).
        """
        if self._eig is None:
            if self.kind == "projector":
                d = self.vector.size
                m = np.outer(self.vector, self.vector.conj())
                w, v = hermitian_eigh(m)
                w = np.where(w > 0.5, 1.0, 0.0)
                self._eig = (w, v)
            else:
                self._eig = hermitian_eigh(self.matrix())
        return self._eig

    def remap(self, mapping: dict[int, int]) -> "Observable":
        obs = Observable(self.kind, [mapping[w] for w in self.wires], self.paulis, self.coefficient,
                         self.vector, self.dense)
        obs._eig = self._eig
        return obs

    def split(self, wires_a: Sequence[int]) -> tuple["Observable | None", "Observable | None"]:
        """Factor a Pauli observable into its parts on ``wires_a`` and the rest."""
        if self.kind != "pauli":
            raise ValueError("only Pauli observables factor across a cut")
        sa = set(wires_a)
        pa = [(w, c) for w, c in zip(self.wires, self.paulis) if w in sa]
        pb = [(w, c) for w, c in zip(self.wires, self.paulis) if w not in sa]
        oa = Observable.pauli("".join(c for _, c in pa), [w for w, _ in pa], self.coefficient) if pa else None
        ob = Observable.pauli("".join(c for _, c in pb), [w for w, _ in pb], 1.0) if pb else None
        return oa, ob


def outcome_table(amps: np.ndarray, obs: Observable | None, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Joint outcome law of ``obs`` on a (batch of) state(s).

    Returns ``(values, probs)``: the possible measured values (length K) and
    probabilities of shape ``(..., K)``. Pauli observables are measured by a
    local basis change followed by a parity readout; other kinds by spectral
    projection.
    """
    batch_shape = amps.shape[:-1]
    if obs is None:
        return np.ones(1), np.sum(np.abs(amps) ** 2, axis=-1)[..., None]
    if obs.kind == "pauli":
        active = [(w, c) for w, c in zip(obs.wires, obs.paulis) if c != "I"]
        if not active:
            return np.array([obs.coefficient]), np.sum(np.abs(amps) ** 2, axis=-1)[..., None]
        psi = amps
        for w, c in active:
            if c != "Z":
                psi = apply_matrix(psi, _BASIS_CHANGE[c], [w], n)
        p = wire_marginals(psi, [w for w, _ in active], n)
        k = len(active)
        parity = np.array([bin(x).count("1") & 1 for x in range(2**k)])
        probs = np.stack([p[..., parity == 0].sum(-1), p[..., parity == 1].sum(-1)], axis=-1)
        return np.array([obs.coefficient, -obs.coefficient]), probs
    vals, vecs = obs.eigensystem()
    k = len(obs.wires)
    nb = len(batch_shape)
    psi = amps.reshape(batch_shape + (2,) * n)
    psi = np.moveaxis(psi, [nb + w for w in obs.wires], list(range(nb, nb + k)))
    psi = psi.reshape(batch_shape + (2**k, -1))
    coeff = np.einsum("ij,...ir->...jr", vecs.conj(), psi)
    pe = np.sum(np.abs(coeff) ** 2, axis=-1)
    uniq = np.unique(np.round(vals, 12))
    probs = np.stack([pe[..., np.isclose(vals, u, atol=1e-11)].sum(-1) for u in uniq], axis=-1)
    return uniq, probs


def measure_observable(state: StateVector, x: Observable, rng: np.random.Generator) -> float:
    """Sample an eigenvalue of ``x`` with Born probabilities (no collapse returned)."""
    vals, probs = outcome_table(state.amplitudes, x, state.n_qubits)
    probs = np.clip(probs, 0, None)
    k = rng.choice(vals.size, p=probs / probs.sum())
    return float(vals[k])


def exact_expectation(state: StateVector, x: Observable) -> float:
    vals, probs = outcome_table(state.amplitudes, x, state.n_qubits)
    return float(np.dot(vals, probs) / probs.sum())


def circuit_unitary(gates: Sequence[GateOp], n: int) -> np.ndarray:
    """Dense unitary of a gate list, built column by column from basis states."""
    basis = np.eye(2**n, dtype=complex)
    for g in gates:
        basis = apply_matrix(basis, g.full_matrix(), g.wires, n)
    return basis.T


class NonCPWarning(UserWarning):
    """Choi matrix has a negative eigenvalue beyond tolerance."""


def channel_to_choi(channel: Sequence[np.ndarray] | Callable[[np.ndarray], np.ndarray], dim: int,
                    cp_tol: float = 1e-6) -> np.ndarray:
    """Normalized Choi matrix ``(id (x) N)(|Phi><Phi|)``; reference factor first.

    ``channel`` is a Kraus list or a linear map on ``dim x dim`` matrices.
    A non-completely-positive result raises :class:`NonCPWarning` as a
    warning, not an error.
    """
    if callable(channel):
        blocks = {}
        for i in range(dim):
            for j in range(dim):
                e = np.zeros((dim, dim), dtype=complex)
                e[i, j] = 1.0
                blocks[i, j] = np.asarray(channel(e), dtype=complex)
        dout = blocks[0, 0].shape[0]
        j_mat = np.zeros((dim * dout, dim * dout), dtype=complex)
        for (i, j), b in blocks.items():
            j_mat[i * dout:(i + 1) * dout, j * dout:(j + 1) * dout] = b
        j_mat /= dim
    else:
        kraus = [np.asarray(k, dtype=complex) for k in channel]
        dout = kraus[0].shape[0]
        j_mat = np.zeros((dim * dout, dim * dout), dtype=complex)
        for k in kraus:
            v = k.T.reshape(-1) / np.sqrt(dim)  # entry (i, o) = K[o, i]
            j_mat += np.outer(v, v.conj())
    w, _ = hermitian_eigh(j_mat)
    if w.min() < -cp_tol:
        warnings.warn(f"Choi matrix has eigenvalue {w.min():.3g}; map is not completely positive",
                      NonCPWarning, stacklevel=2)
    return j_mat


def product_state(labels: str) -> StateVector:
    """Product state from per-qubit labels in ``01+-rl``."""
    single = {
        "0": np.array([1, 0], dtype=complex),
        "1": np.array([0, 1], dtype=complex),
        "+": np.array([1, 1], dtype=complex) / np.sqrt(2),
        "-": np.array([1, -1], dtype=complex) / np.sqrt(2),
        "r": np.array([1, 1j], dtype=complex) / np.sqrt(2),
        "l": np.array([1, -1j], dtype=complex) / np.sqrt(2),
    }
    out = np.ones(1, dtype=complex)
    for c in labels:
        if c not in single:
            raise ValueError(f"unknown qubit label {c!r}")
        out = np.kron(out, single[c])
    return StateVector(out)
