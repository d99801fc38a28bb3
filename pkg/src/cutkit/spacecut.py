"""Space-like cutting of a bipartite unitary with the double Hadamard test.

Given a local decomposition ``U = sum_i c_i V_i (x) W_i``, each trial draws a
setting ``(i, j, g)`` with probability ``c_i c_j / phi`` (never ``i == j`` with
``g == 1``), runs a circuit in which ancilla ``R_A`` selects ``V_i``/``V_j`` on
the A wires and ancilla ``R_B`` selects ``W_i``/``W_j`` on the B wires, and
returns ``phi * (-1)**(g + b1 + b2) * y``. Its mean is ``Tr(X U rho U^dag)``.

Register layout: the system register (A, B and any spectator wires E) comes
first; ``R_A`` and ``R_B`` are appended as the last two wires.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .decomp import LocalDecomposition, magnitude
from .errors import ShapeError
from .harness import CutEstimate, DEFAULT_BLOCK, make_estimate, run_blocks, sample_categorical
from .statesim import (GateOp, Observable, StateVector, apply_circuit, apply_matrix, measure_computational,
                       measure_observable, outcome_table)
from .tensor import BipartiteShape

H_GATE = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S_GATE = np.diag([1, 1j])


@dataclass(frozen=True)
class SettingSample:
    i: int
    j: int
    g: int


@dataclass(frozen=True)
class CutLayout:
    """Where the cut unitary sits inside the system register."""

    a_wires: tuple[int, ...]
    b_wires: tuple[int, ...]
    n_system: int

    @classmethod
    def default(cls, shape: BipartiteShape, n_extra: int = 0) -> "CutLayout":
        na = shape.dim_a.bit_length() - 1
        nb = shape.dim_b.bit_length() - 1
        if 2**na != shape.dim_a or 2**nb != shape.dim_b:
            raise ShapeError("circuit execution needs qubit dimensions")
        return cls(tuple(range(na)), tuple(range(na, na + nb)), na + nb + n_extra)

    @property
    def anc_a(self) -> int:
        return self.n_system

    @property
    def anc_b(self) -> int:
        return self.n_system + 1

    @property
    def n_qubits(self) -> int:
        return self.n_system + 2

    def check(self, shape: BipartiteShape) -> None:
        if 2 ** len(self.a_wires) != shape.dim_a or 2 ** len(self.b_wires) != shape.dim_b:
            raise ShapeError("layout wires do not match the decomposition shape")
        wires = self.a_wires + self.b_wires
        if len(set(wires)) != len(wires) or max(wires) >= self.n_system:
            raise ShapeError("layout wires overlap or exceed the system register")


@dataclass
class DoubleHadamardCircuit:
    gates: list[GateOp]
    n_qubits: int
    anc_a: int
    anc_b: int
    setting: SettingSample | None = None
    meta: dict = field(default_factory=dict)

    def dump(self) -> str:
        lines = [g.describe() for g in self.gates]
        lines.append(f"MEASURE {','.join(map(str, range(self.n_qubits)))}")
        return "\n".join(lines)


def setting_pmf(g: LocalDecomposition) -> dict[tuple[int, int, int], float]:
    """Exact law of the setting variables, keyed by ``(i, j, g)``."""
    c = g.coeffs
    phi = magnitude(g)
    pmf = {}
    for i in range(len(c)):
        for j in range(len(c)):
            for gb in (0, 1):
                if i == j and gb == 1:
                    continue
                pmf[i, j, gb] = c[i] * c[j] / phi
    return pmf


def sample_settings(g: LocalDecomposition, rng: np.random.Generator, size: int, stats: dict | None = None
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized sampler: ``i, j`` i.i.d. proportional to ``c``, fair ``g``, reject ``(i == j, g == 1)``.

    If ``stats`` is given, proposal and rejection counts are accumulated into it.
    """
    p = g.coeffs / g.coeffs.sum()
    ii = np.empty(size, dtype=np.int64)
    jj = np.empty(size, dtype=np.int64)
    gg = np.empty(size, dtype=np.int64)
    todo = np.arange(size)
    while todo.size:
        k = todo.size
        ii[todo] = rng.choice(len(p), size=k, p=p)
        jj[todo] = rng.choice(len(p), size=k, p=p)
        gg[todo] = rng.integers(0, 2, size=k)
        todo = todo[(ii[todo] == jj[todo]) & (gg[todo] == 1)]
        if stats is not None:
            stats["proposals"] = stats.get("proposals", 0) + k
            stats["rejections"] = stats.get("rejections", 0) + todo.size
    return ii, jj, gg


def sample_setting(g: LocalDecomposition, rng: np.random.Generator) -> SettingSample:
    i, j, gb = sample_settings(g, rng, 1)
    return SettingSample(int(i[0]), int(j[0]), int(gb[0]))


def rejection_rate(g: LocalDecomposition) -> float:
    c = g.coeffs
    return 0.5 * float(np.dot(c, c)) / float(np.sum(c)) ** 2


def _select(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    d = first.shape[0]
    m = np.zeros((2 * d, 2 * d), dtype=complex)
    m[:d, :d] = first
    m[d:, d:] = second
    return m


def build_circuit(g: LocalDecomposition, s: SettingSample, shape: BipartiteShape,
                  layout: CutLayout | None = None) -> DoubleHadamardCircuit:
    layout = layout or CutLayout.default(shape)
    layout.check(shape)
    m = len(g)
    if not (0 <= s.i < m and 0 <= s.j < m) or s.g not in (0, 1):
        raise IndexError(f"setting {s} out of range for {m} terms")
    ra, rb = layout.anc_a, layout.anc_b
    gates = [GateOp(H_GATE, [ra], name="H"), GateOp(H_GATE, [rb], name="H")]
    if s.g:
        gates += [GateOp(S_GATE, [ra], name="S"), GateOp(S_GATE, [rb], name="S")]
    gates.append(GateOp(_select(g.ops_a[s.i], g.ops_a[s.j]), [ra, *layout.a_wires], name="SELECT",
                        params={"i": s.i, "j": s.j}))
    gates.append(GateOp(_select(g.ops_b[s.i], g.ops_b[s.j]), [rb, *layout.b_wires], name="SELECT",
                        params={"i": s.i, "j": s.j}))
    gates += [GateOp(H_GATE, [ra], name="H"), GateOp(H_GATE, [rb], name="H")]
    return DoubleHadamardCircuit(gates, layout.n_qubits, ra, rb, s)


def prepare_system(rho_prep: StateVector | Sequence[GateOp] | np.ndarray, n_system: int) -> np.ndarray:
    """Pure system state from a vector or a gate list applied to ``|0...0>``."""
    if isinstance(rho_prep, StateVector):
        amps = rho_prep.amplitudes
    elif isinstance(rho_prep, np.ndarray):
        amps = np.asarray(rho_prep, dtype=complex)
    else:
        amps = apply_circuit(StateVector.zero(n_system), list(rho_prep)).amplitudes
    if amps.shape != (2**n_system,):
        raise ShapeError(f"prepared state has {amps.shape[0]} amplitudes, expected {2**n_system}")
    return amps / np.linalg.norm(amps)


def with_ancillas(amps: np.ndarray) -> np.ndarray:
    return np.kron(amps, np.array([1, 0, 0, 0], dtype=complex))


def run_trial(g: LocalDecomposition, shape: BipartiteShape, rho_prep, x: Observable,
              rng: np.random.Generator, layout: CutLayout | None = None) -> float:
    """One trial executed gate by gate on the reference simulator path."""
    layout = layout or CutLayout.default(shape)
    s = sample_setting(g, rng)
    circ = build_circuit(g, s, shape, layout)
    state = StateVector(with_ancillas(prepare_system(rho_prep, layout.n_system)))
    state = apply_circuit(state, circ.gates)
    (b1, b2), state = measure_computational(state, [layout.anc_a, layout.anc_b], rng)
    y = measure_observable(state, x, rng)
    return magnitude(g) * (-1) ** (s.g + b1 + b2) * y


def final_states(g: LocalDecomposition, layout: CutLayout, psi: np.ndarray,
                 ii: np.ndarray, jj: np.ndarray, gg: np.ndarray) -> np.ndarray:
    """Output states of the circuits for a batch of settings, shape ``(batch, 2**(n_system+2))``."""
    n = layout.n_qubits
    batch = len(ii)
    states = np.broadcast_to(with_ancillas(psi), (batch, 2**n)).copy()
    anc = [layout.anc_a, layout.anc_b]
    hh = np.kron(H_GATE, H_GATE)
    states = apply_matrix(states, hh, anc, n)
    if np.any(gg):
        # S on both ancillas multiplies |a1 a2> by i**(a1 + a2)
        idx = np.arange(2**n)
        ph = 1j ** (((idx >> (n - 1 - layout.anc_a)) & 1) + ((idx >> (n - 1 - layout.anc_b)) & 1))
        states[gg == 1] *= ph
    va, wb = np.stack(g.ops_a), np.stack(g.ops_b)
    da, db = va.shape[1], wb.shape[1]
    sel_a = np.zeros((batch, 2 * da, 2 * da), dtype=complex)
    sel_a[:, :da, :da] = va[ii]
    sel_a[:, da:, da:] = va[jj]
    states = apply_matrix(states, sel_a, [layout.anc_a, *layout.a_wires], n)
    sel_b = np.zeros((batch, 2 * db, 2 * db), dtype=complex)
    sel_b[:, :db, :db] = wb[ii]
    sel_b[:, db:, db:] = wb[jj]
    states = apply_matrix(states, sel_b, [layout.anc_b, *layout.b_wires], n)
    return apply_matrix(states, hh, anc, n)


def outcome_law(states: np.ndarray, layout: CutLayout, x: Observable) -> tuple[np.ndarray, np.ndarray]:
    """Joint law of ancilla bits ``b = 2*b1 + b2`` and the observable value.

    Returns ``(values, probs)`` with ``probs`` of shape ``(batch, 4, K)``.
    """
    if (layout.anc_a, layout.anc_b) != (layout.n_system, layout.n_system + 1):
        raise ShapeError("ancillas must be the last two wires")
    batch = states.shape[0]
    split = states.reshape(batch, 2**layout.n_system, 4)
    tables = []
    values = None
    for b in range(4):
        values, p = outcome_table(np.ascontiguousarray(split[:, :, b]), x, layout.n_system)
        tables.append(p)
    return values, np.stack(tables, axis=1)


_ANC_SIGN = np.array([1.0, -1.0, -1.0, 1.0])  # (-1)**(b1 + b2) for b = 2*b1 + b2


def conditional_means(g: LocalDecomposition, layout: CutLayout, psi: np.ndarray, x: Observable,
                      ii, jj, gg) -> np.ndarray:
    """Exact ``E[(-1)**(b1+b2) y | i, j, g]`` for each listed setting."""
    ii, jj, gg = (np.atleast_1d(np.asarray(v, dtype=np.int64)) for v in (ii, jj, gg))
    vals, probs = outcome_law(final_states(g, layout, psi, ii, jj, gg), layout, x)
    return np.einsum("b,k,nbk->n", _ANC_SIGN, vals, probs)


def _block_values(g: LocalDecomposition, layout: CutLayout, psi: np.ndarray, x: Observable,
                  rng: np.random.Generator, count: int, mode: str) -> np.ndarray:
    phi = magnitude(g)
    ii, jj, gg = sample_settings(g, rng, count)
    m = len(g)
    keys = (ii * m + jj) * 2 + gg
    uniq, inv = np.unique(keys, return_inverse=True)
    ui, uj, ug = uniq // (2 * m), (uniq // 2) % m, uniq % 2
    vals, probs = outcome_law(final_states(g, layout, psi, ui, uj, ug), layout, x)
    sign_g = np.where(gg == 1, -1.0, 1.0)
    if mode == "conditional":
        cond = np.einsum("b,k,nbk->n", _ANC_SIGN, vals, probs)
        return phi * sign_g * cond[inv]
    k = len(vals)
    flat = probs.reshape(len(uniq), 4 * k)[inv]
    pick = sample_categorical(flat, rng)
    b, y = pick // k, vals[pick % k]
    return phi * sign_g * _ANC_SIGN[b] * y


def estimate(g: LocalDecomposition, shape: BipartiteShape, rho_prep, x: Observable, trials: int,
             seed: int = 0, layout: CutLayout | None = None, mode: str = "sampled",
             threads: int | None = None, block_size: int = DEFAULT_BLOCK, keep_values: bool = False
             ) -> CutEstimate:
    """Average ``trials`` single-trial estimates of ``Tr(X U rho U^dag)``.

    ``mode="conditional"`` replaces the final measurements by their exact
    conditional mean for each sampled setting (validation only).
    """
    if trials <= 0:
        raise ValueError("trials must be positive")
    if mode not in ("sampled", "conditional"):
        raise ValueError(f"unknown mode {mode!r}")
    layout = layout or CutLayout.default(shape)
    layout.check(shape)
    psi = prepare_system(rho_prep, layout.n_system)
    values = run_blocks(lambda rng, k: _block_values(g, layout, psi, x, rng, k, mode),
                        trials, seed, block_size, threads)
    return make_estimate(values, magnitude(g), keep_values)


def _choi_columns(g: LocalDecomposition, shape: BipartiteShape, chunk: int = 64
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Vectors ``x_{s,b}`` and weights with ``J~ = sum w x x^dag``.

    The circuit runs on ``|Phi>`` over (reference, A, B); ancilla outcome ``b``
    projects onto ``x_{s,b}``, weighted by ``(-1)**(g + b1 + b2) c_i c_j``.
    """
    na = shape.dim_a.bit_length() - 1
    nb = shape.dim_b.bit_length() - 1
    n_ref = na + nb
    layout = CutLayout(tuple(range(n_ref, n_ref + na)), tuple(range(n_ref + na, n_ref + na + nb)), 2 * n_ref)
    layout.check(shape)
    d = shape.dim
    phi_state = np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)
    settings = list(setting_pmf(g))
    cols, wts = [], []
    c = g.coeffs
    for start in range(0, len(settings), chunk):
        part = settings[start:start + chunk]
        ii = np.array([s[0] for s in part])
        jj = np.array([s[1] for s in part])
        gg = np.array([s[2] for s in part])
        states = final_states(g, layout, phi_state, ii, jj, gg).reshape(len(part), d * d, 4)
        for b in range(4):
            cols.append(states[:, :, b].T)
            wts.append(c[ii] * c[jj] * np.where(gg == 1, -1.0, 1.0) * _ANC_SIGN[b])
    return np.concatenate(cols, axis=1), np.concatenate(wts)


def reconstruct_choi(g: LocalDecomposition, shape: BipartiteShape) -> np.ndarray:
    """Choi matrix (reference factor first) of the map realized by the cut."""
    if shape.dim > 16:
        raise ShapeError(f"explicit Choi reconstruction limited to d_A d_B <= 16, got {shape.dim}")
    x, w = _choi_columns(g, shape)
    return (x * w) @ x.conj().T


def choi_residual(g: LocalDecomposition, shape: BipartiteShape, u: np.ndarray) -> float:
    """Frobenius distance between the reconstructed Choi matrix and that of ``u``.

    Works without forming either matrix: with ``Y = [x_1 .. x_K, v_U] = QR``
    the difference equals ``Q (R W R^dag) Q^dag``, so its norm is that of the
    small core ``R W R^dag``.
    """
    if shape.dim > 64:
        raise ShapeError(f"Choi residual limited to d_A d_B <= 64, got {shape.dim}")
    x, w = _choi_columns(g, shape)
    v = u.T.reshape(-1) / np.sqrt(shape.dim)
    y = np.concatenate([x, v[:, None]], axis=1)
    weights = np.concatenate([w, [-1.0]])
    _, r = np.linalg.qr(y, mode="reduced")
    core = (r * weights) @ r.conj().T
    return float(np.linalg.norm(core))
