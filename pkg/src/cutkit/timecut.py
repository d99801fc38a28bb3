"""Time-like cutting of a wire register A by two measure-and-prepare channels.

``M0`` measures in a randomly phased Fourier basis and re-prepares the
observed equatorial state; ``M1`` measures in the computational basis and
prepares a uniformly random different basis state. With ``d = dim A``,
``id = d M0 - (d - 1) M1``. A trial picks ``z = 0`` with probability
``d / (2d - 1)``, applies ``M_z`` to A (other wires untouched) and returns
``(2d - 1) (-1)**z y`` for a measured eigenvalue ``y`` of the observable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .designs import DiagonalDesignCircuit, sample_diagonals
from .errors import ShapeError
from .harness import CutEstimate, DEFAULT_BLOCK, block_generator, make_estimate, run_blocks, sample_categorical
from .spacecut import prepare_system
from .statesim import Observable, StateVector, channel_to_choi, outcome_table
from .tensor import BipartiteShape, op_norm, partial_trace

__all__ = [
    "DiagonalDesignCircuit", "MeasureAndPrepare", "TimecutEstimate", "apply_M0", "apply_M1",
    "timecut_estimate", "variance_bound_check", "qpd_identity_check", "sampled_choi",
    "equatorial_second_moment", "analytic_moments",
]


def _hadamard_n(n: int) -> np.ndarray:
    h = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    out = np.ones((1, 1), dtype=complex)
    for _ in range(n):
        out = np.kron(out, h)
    return out


def _split_register(amps: np.ndarray, wires: Sequence[int], n: int) -> np.ndarray:
    """Reshape ``(batch, 2**n)`` to ``(batch, 2**k, rest)`` with ``wires`` first (big-endian)."""
    batch = amps.shape[0]
    psi = amps.reshape((batch,) + (2,) * n)
    psi = np.moveaxis(psi, [1 + w for w in wires], list(range(1, 1 + len(wires))))
    return psi.reshape(batch, 2 ** len(wires), -1)


def _join_register(split: np.ndarray, wires: Sequence[int], n: int) -> np.ndarray:
    batch = split.shape[0]
    k = len(wires)
    psi = split.reshape((batch,) + (2,) * n)
    psi = np.moveaxis(psi, list(range(1, 1 + k)), [1 + w for w in wires])
    return psi.reshape(batch, 2**n)


def _measure_and_replace(split: np.ndarray, outcome_amps: np.ndarray, new_vecs: np.ndarray,
                         rng: np.random.Generator) -> np.ndarray:
    """Measure the leading register of ``outcome_amps`` and prepare ``new_vecs[b, x]`` there.

    ``outcome_amps`` is ``(batch, D, rest)`` expressed in the measurement basis;
    ``new_vecs`` maps outcome ``x`` to the prepared state, shape ``(batch, D, D)``
    with the prepared vector in column ``x``.
    """
    probs = np.sum(np.abs(outcome_amps) ** 2, axis=2)
    x = sample_categorical(probs, rng)
    rows = np.arange(split.shape[0])
    rest = outcome_amps[rows, x, :]
    rest = rest / np.linalg.norm(rest, axis=1, keepdims=True)
    prep = new_vecs[rows, :, x]
    return prep[:, :, None] * rest[:, None, :]


def apply_m1_batch(amps: np.ndarray, wires: Sequence[int], n: int, rng: np.random.Generator) -> np.ndarray:
    d = 2 ** len(wires)
    if d < 2:
        raise ShapeError("cut register must have dimension at least 2")
    split = _split_register(amps, wires, n)
    probs = np.sum(np.abs(split) ** 2, axis=2)
    k = sample_categorical(probs, rng)
    rows = np.arange(split.shape[0])
    rest = split[rows, k, :]
    rest = rest / np.linalg.norm(rest, axis=1, keepdims=True)
    shift = rng.integers(1, d, size=len(k))
    ell = (k + shift) % d  # uniform over the d - 1 values different from k
    new = np.zeros_like(split)
    new[rows, ell, :] = rest
    return _join_register(new, wires, n)


def apply_m0_batch(amps: np.ndarray, wires: Sequence[int], n: int, rng: np.random.Generator) -> np.ndarray:
    """Phase-randomize, Fourier-measure and re-prepare on ``wires`` for every batch item."""
    k = len(wires)
    split = _split_register(amps, wires, n)
    diag = sample_diagonals(k, rng, split.shape[0])
    hn = _hadamard_n(k)
    rotated = np.einsum("xy,by,byr->bxr", hn, diag.conj(), split)
    prep = diag[:, :, None] * hn[None, :, :]
    new = _measure_and_replace(split, rotated, prep, rng)
    return _join_register(new, wires, n)


def apply_M1(state: StateVector, cut_wires: Sequence[int], rng: np.random.Generator) -> StateVector:
    out = apply_m1_batch(state.amplitudes[None, :], list(cut_wires), state.n_qubits, rng)
    return StateVector(out[0])


def apply_M0(state: StateVector, cut_wires: Sequence[int], rng: np.random.Generator) -> StateVector:
    out = apply_m0_batch(state.amplitudes[None, :], list(cut_wires), state.n_qubits, rng)
    return StateVector(out[0])


@dataclass
class MeasureAndPrepare:
    kind: str
    n: int

    def __post_init__(self):
        if self.kind not in ("M0", "M1"):
            raise ValueError(f"unknown channel {self.kind!r}")

    def apply(self, state: StateVector, cut_wires: Sequence[int], rng: np.random.Generator) -> StateVector:
        if len(cut_wires) != self.n:
            raise ShapeError("cut wire count does not match the channel")
        fn = apply_M0 if self.kind == "M0" else apply_M1
        return fn(state, cut_wires, rng)

    def apply_batch(self, amps: np.ndarray, cut_wires: Sequence[int], n: int, rng: np.random.Generator) -> np.ndarray:
        fn = apply_m0_batch if self.kind == "M0" else apply_m1_batch
        return fn(amps, cut_wires, n, rng)


@dataclass
class TimecutEstimate(CutEstimate):
    dim_a: int = 0
    bound: float = float("nan")

    def as_row(self) -> dict:
        return {"mean": self.mean, "variance": self.variance, "trials": self.trials,
                "one_norm": self.one_norm, "dA": self.dim_a, "bound": self.bound}


def _block_values(psi: np.ndarray, wires: list[int], n: int, obs: Observable, rng: np.random.Generator,
                  count: int) -> np.ndarray:
    d = 2 ** len(wires)
    z = (rng.random(count) >= d / (2 * d - 1)).astype(np.int64)
    states = np.broadcast_to(psi, (count, psi.size)).copy()
    for kind in (0, 1):
        sel = np.flatnonzero(z == kind)
        if sel.size:
            fn = apply_m0_batch if kind == 0 else apply_m1_batch
            states[sel] = fn(states[sel], wires, n, rng)
    vals, probs = outcome_table(states, obs, n)
    y = vals[sample_categorical(probs, rng)]
    return (2 * d - 1) * np.where(z == 0, 1.0, -1.0) * y


def analytic_moments(psi: np.ndarray, cut_wires: Sequence[int], obs: Observable, n: int
                     ) -> tuple[float, float]:
    """Exact mean and variance of the single-trial estimator.

    Uses ``M0(rho) = (rho + 1_A (x) rho_E - Delta_A(rho)) / d`` and
    ``M1(rho) = (1_A (x) rho_E - Delta_A(rho)) / (d - 1)`` with ``Delta_A``
    the dephasing of A.
    """
    wires = list(cut_wires)
    d = 2 ** len(wires)
    split = _split_register(psi[None, :], wires, n)[0]  # (d, rest)
    rho = np.einsum("ar,bs->arbs", split, split.conj())  # (d, rest, d, rest)
    rho_e = np.einsum("arat->rt", rho)
    eye_e = np.einsum("ab,rt->arbt", np.eye(d), rho_e)
    deph = np.einsum("ab,arbt->arbt", np.eye(d), rho)
    m0 = (rho + eye_e - deph) / d
    m1 = (eye_e - deph) / (d - 1)
    full = obs_full_matrix(obs, n)
    rest_wires = [w for w in range(n) if w not in wires]
    perm = wires + rest_wires
    x = full.reshape((2,) * (2 * n)).transpose(perm + [n + p for p in perm]).reshape(2**n, 2**n)
    x2 = x @ x
    dim = 2**n
    e0 = np.trace(x @ m0.reshape(dim, dim)).real
    e1 = np.trace(x @ m1.reshape(dim, dim)).real
    s0 = np.trace(x2 @ m0.reshape(dim, dim)).real
    s1 = np.trace(x2 @ m1.reshape(dim, dim)).real
    p0 = d / (2 * d - 1)
    w = 2 * d - 1
    mean = w * (p0 * e0 - (1 - p0) * e1)
    second = w * w * (p0 * s0 + (1 - p0) * s1)
    return mean, second - mean * mean


def obs_full_matrix(obs: Observable, n: int) -> np.ndarray:
    """Observable as a dense operator on the whole register (wire order 0..n-1)."""
    k = len(obs.wires)
    rest = [w for w in range(n) if w not in obs.wires]
    m = np.kron(obs.matrix(), np.eye(2 ** len(rest)))
    order = list(obs.wires) + rest
    inv = np.argsort(order)
    t = m.reshape((2,) * (2 * n)).transpose(list(inv) + [n + i for i in inv])
    return t.reshape(2**n, 2**n)


def timecut_estimate(rho_prep, cut_wires: Sequence[int], x: Observable, trials: int, seed: int = 0,
                     n_qubits: int | None = None, mode: str = "sampled", threads: int | None = None,
                     block_size: int = DEFAULT_BLOCK, keep_values: bool = False) -> TimecutEstimate:
    """Unbiased estimate of ``Tr(X rho)`` with the wire register ``cut_wires`` cut."""
    wires = list(cut_wires)
    if isinstance(rho_prep, StateVector):
        n = rho_prep.n_qubits
    elif isinstance(rho_prep, np.ndarray):
        n = rho_prep.size.bit_length() - 1
    else:
        if n_qubits is None:
            raise ValueError("n_qubits is required for gate-list preparations")
        n = n_qubits
    if len(set(wires)) != len(wires) or not wires or max(wires) >= n:
        raise ShapeError(f"bad cut wires {wires} for a {n}-qubit register")
    psi = prepare_system(rho_prep, n)
    d = 2 ** len(wires)
    if x.kind == "pauli":
        # X^2 = c^2 * identity, so |Tr_A X^2| = c^2 d
        bound = (2 * d - 1) * min(2.0 * x.coefficient**2 * d + 1.0, 2 * d - 1)
    else:
        bound = variance_bound_check(_obs_cut_order(x, wires, n), BipartiteShape(d, 2 ** (n - len(wires))))
    if mode == "analytic":
        mean, var = analytic_moments(psi, wires, x, n)
        return TimecutEstimate(mean, var, trials, float(2 * d - 1), None, d, bound)
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    values = run_blocks(lambda rng, k: _block_values(psi, wires, n, x, rng, k), trials, seed, block_size, threads)
    est = make_estimate(values, float(2 * d - 1), keep_values)
    return TimecutEstimate(est.mean, est.variance, est.trials, est.one_norm, est.values, d, bound)


def _obs_cut_order(x: Observable, wires: Sequence[int], n: int) -> np.ndarray:
    full = obs_full_matrix(x, n)
    rest = [w for w in range(n) if w not in wires]
    perm = list(wires) + rest
    return full.reshape((2,) * (2 * n)).transpose(perm + [n + p for p in perm]).reshape(2**n, 2**n)


def variance_bound_check(x: np.ndarray, shape: BipartiteShape) -> float:
    """``(2 d_A - 1) min(2 |Tr_A X^2| + 1, 2 d_A - 1)`` for ``X`` on ``A (x) E``."""
    x = np.asarray(x, dtype=complex)
    shape.check_square(x, "observable")
    da = shape.dim_a
    red = partial_trace(x @ x, shape, keep="B")
    return float((2 * da - 1) * min(2.0 * op_norm(red) + 1.0, 2 * da - 1))


def equatorial_second_moment(d: int) -> np.ndarray:
    """``E[|v><v| (x) |v><v|]`` for ``v = d^{-1/2} sum_j e^{i theta_j} |j>`` by exact phase moments.

    ``E exp(i(theta_j - theta_k + theta_l - theta_m))`` is 1 when ``{j, l} = {k, m}``
    as multisets and 0 otherwise.
    """
    j, l, k, m = np.meshgrid(*(np.arange(d),) * 4, indexing="ij")
    hit = ((j == k) & (l == m)) | ((j == m) & (l == k))
    # entry ((j, l), (k, m)) of |v><v| (x) |v><v| is v_j conj(v_k) v_l conj(v_m)
    return hit.astype(complex).reshape(d * d, d * d) / d**2


def choi_m0(d: int) -> np.ndarray:
    """``E[|conj v><conj v| (x) |v><v|]`` from the phase-moment rule."""
    a, b, c, e = np.meshgrid(*(np.arange(d),) * 4, indexing="ij")
    # entry ((a, b), (c, e)) = E conj(v_a) v_c v_b conj(v_e) -> phases -a + c + b - e
    hit = ((a == c) & (b == e)) | ((a == b) & (c == e))
    return hit.astype(complex).reshape(d * d, d * d) / d**2


def m1_kraus(d: int) -> list[np.ndarray]:
    out = []
    for k, l in itertools.permutations(range(d), 2):
        op = np.zeros((d, d), dtype=complex)
        op[l, k] = 1.0 / np.sqrt(d - 1)
        out.append(op)
    return out


def choi_m1(d: int) -> np.ndarray:
    return channel_to_choi(m1_kraus(d), d)


def max_entangled(d: int) -> np.ndarray:
    v = np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)
    return np.outer(v, v.conj())


def qpd_identity_check(d: int) -> float:
    """``|Phi - (d J0 - (d-1) J1)|_F`` from closed-form Choi matrices."""
    if d < 2 or d > 16:
        raise ValueError("d must lie in [2, 16]")
    j0 = choi_m0(d)
    j1 = choi_m1(d)
    return float(np.linalg.norm(max_entangled(d) - (d * j0 - (d - 1) * j1)))


def sampled_choi(kind: str, n: int, shots: int, seed: int = 0, chunk: int = 50000) -> np.ndarray:
    """Monte Carlo Choi matrix of ``M0`` or ``M1`` on ``n`` qubits (reference wires first)."""
    d = 2**n
    phi = np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)
    wires = list(range(n, 2 * n))
    fn = apply_m0_batch if kind == "M0" else apply_m1_batch
    acc = np.zeros((d * d, d * d), dtype=complex)
    done, block = 0, 0
    while done < shots:
        k = min(chunk, shots - done)
        rng = block_generator(seed, block)
        out = fn(np.broadcast_to(phi, (k, d * d)).copy(), wires, 2 * n, rng)
        acc += out.T @ out.conj()
        done += k
        block += 1
    return acc / shots
