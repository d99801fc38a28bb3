"""Dense linear algebra on bipartite operators.

Matrices are plain complex ``numpy.ndarray`` objects. A bipartite operator on
``H_A (x) H_B`` is stored in Kronecker order, i.e. the row index is
``a * dim_b + b``.

The singular value decomposition used throughout the package is a complex
one-sided Jacobi method implemented here; Hermitian eigenproblems are
delegated to :func:`numpy.linalg.eigh`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NumericalFailure, ShapeError

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class BipartiteShape:
    dim_a: int
    dim_b: int

    def __post_init__(self):
        if self.dim_a < 1 or self.dim_b < 1:
            raise ShapeError(f"dimensions must be positive, got {self.dim_a}x{self.dim_b}")

    @property
    def dim(self) -> int:
        return self.dim_a * self.dim_b

    @classmethod
    def qubits(cls, n_a: int, n_b: int) -> "BipartiteShape":
        return cls(2**n_a, 2**n_b)

    def check_square(self, m: np.ndarray, name: str = "operator") -> None:
        if m.shape != (self.dim, self.dim):
            raise ShapeError(f"{name} has shape {m.shape}, expected {(self.dim, self.dim)}")


def kron(*ops: np.ndarray) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def partial_transpose(m: np.ndarray, row_dims: tuple[int, int], col_dims: tuple[int, int] | None = None,
                      system: int = 1) -> np.ndarray:
    """Transpose one tensor factor of a (possibly rectangular) bipartite matrix.

    ``row_dims`` and ``col_dims`` give the factor dimensions of the row and
    column spaces. Transposing factor 1 maps ``|i><j| (x) |k><l|`` to
    ``|i><j| (x) |l><k|``, so the result has row dims ``(r0, c1)`` and column
    dims ``(c0, r1)``.
    """
    if col_dims is None:
        col_dims = row_dims
    r0, r1 = row_dims
    c0, c1 = col_dims
    if m.shape != (r0 * r1, c0 * c1):
        raise ShapeError(f"matrix shape {m.shape} incompatible with {row_dims} x {col_dims}")
    t = m.reshape(r0, r1, c0, c1)
    if system == 1:
        return t.transpose(0, 3, 2, 1).reshape(r0 * c1, c0 * r1)
    if system == 0:
        return t.transpose(2, 1, 0, 3).reshape(c0 * r1, r0 * c1)
    raise ValueError("system must be 0 or 1")


def partial_trace(m: np.ndarray, shape: BipartiteShape, keep: str = "A") -> np.ndarray:
    shape.check_square(m)
    t = m.reshape(shape.dim_a, shape.dim_b, shape.dim_a, shape.dim_b)
    if keep == "A":
        return np.einsum("ibjb->ij", t)
    if keep == "B":
        return np.einsum("aiaj->ij", t)
    raise ValueError("keep must be 'A' or 'B'")


def permutation_operator(perm: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    """Operator moving tensor factor ``k`` to position ``perm[k]``.

    The input space is ``(x)_k C^{dims[k]}``; the output space has factor
    ``dims[k]`` in slot ``perm[k]``. With ``perm=(1, 0)`` this is the swap
    ``|x>|y> -> |y>|x>``.
    """
    perm = list(perm)
    dims = list(dims)
    n = len(dims)
    if sorted(perm) != list(range(n)):
        raise ValueError(f"{perm} is not a permutation of range({n})")
    total = int(np.prod(dims))
    out_dims = [0] * n
    for k, p in enumerate(perm):
        out_dims[p] = dims[k]
    inv = [0] * n
    for k, p in enumerate(perm):
        inv[p] = k
    idx = np.arange(total).reshape(dims)
    # entry at output multi-index y came from input multi-index with x_k = y_perm[k]
    src = idx.transpose(inv).reshape(-1)
    f = np.zeros((total, total), dtype=complex)
    f[np.arange(total), src] = 1.0
    return f


def realign(m: np.ndarray, shape: BipartiteShape) -> np.ndarray:
    """Reshuffle ``M[(a,b),(a',b')] -> R[(a,a'),(b,b')]``."""
    shape.check_square(m)
    da, db = shape.dim_a, shape.dim_b
    return m.reshape(da, db, da, db).transpose(0, 2, 1, 3).reshape(da * da, db * db)


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Parallel Jacobi ordering: n-1 rounds of n/2 disjoint pairs (n even)."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        p = np.array([min(players[i], players[n - 1 - i]) for i in range(n // 2)])
        q = np.array([max(players[i], players[n - 1 - i]) for i in range(n // 2)])
        rounds.append((p, q))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _complete_orthonormal(u: np.ndarray, good: np.ndarray) -> np.ndarray:
    """Replace columns of ``u`` where ``good`` is False by an orthonormal completion."""
    u = u.copy()
    basis = [u[:, k] for k in range(u.shape[1]) if good[k]]
    candidates = iter(np.eye(u.shape[0], dtype=complex).T)
    for k in range(u.shape[1]):
        if good[k]:
            continue
        for e in candidates:
            v = e.copy()
            for _ in range(2):
                for b in basis:
                    v -= b * np.vdot(b, v)
            nv = np.linalg.norm(v)
            if nv > 1e-8:
                v /= nv
                u[:, k] = v
                basis.append(v)
                break
    return u


def svd(m: np.ndarray, max_sweeps: int = 80) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin singular value decomposition ``m = u @ diag(s) @ vh``.

    One-sided (Hestenes) Jacobi with a round-robin pair ordering, so each
    round rotates n/2 disjoint column pairs at once. A complex pair is
    handled by first absorbing the phase of the inner product into the
    second column, which reduces the step to a real rotation.

    Returns ``u`` of shape ``(rows, k)``, ``s`` (descending, length ``k``) and
    ``vh`` of shape ``(k, cols)`` with ``k = min(rows, cols)``.
    Raises :class:`NumericalFailure` if the sweep cap is reached.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2:
        raise ShapeError("svd expects a matrix")
    rows, cols = m.shape
    if rows < cols:
        u, s, vh = svd(m.conj().T, max_sweeps)
        return vh.conj().T, s, u.conj().T
    if cols == 0:
        return np.zeros((rows, 0), complex), np.zeros(0), np.zeros((0, 0), complex)

    n = cols + (cols % 2)
    a = np.zeros((rows, n), dtype=complex)
    a[:, :cols] = m
    v = np.eye(n, dtype=complex)
    tol = EPS * max(rows, 4)
    floor = max((EPS * np.linalg.norm(m)) ** 2, np.finfo(float).tiny)
    rounds = _round_robin(n) if n > 1 else []

    converged = n == 1
    for _ in range(max_sweeps):
        if converged:
            break
        rotated = False
        for p, q in rounds:
            ap, aq = a[:, p], a[:, q]
            alpha = np.einsum("ij,ij->j", ap.conj(), ap).real
            beta = np.einsum("ij,ij->j", aq.conj(), aq).real
            gamma = np.einsum("ij,ij->j", ap.conj(), aq)
            off = np.abs(gamma)
            act = off > tol * np.sqrt(alpha * beta)
            # columns at round-off level relative to the whole matrix are treated as zero
            act &= np.minimum(alpha, beta) > floor
            if not act.any():
                continue
            rotated = True
            p, q, alpha, beta, gamma, off = p[act], q[act], alpha[act], beta[act], gamma[act], off[act]
            phase = gamma / off
            zeta = (beta - alpha) / (2.0 * off)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            for mat in (a, v):
                xp = mat[:, p]
                xq = mat[:, q] * phase.conj()
                mat[:, p] = c * xp - s * xq
                mat[:, q] = s * xp + c * xq
        if not rotated:
            converged = True
    if not converged:
        raise NumericalFailure(f"Jacobi SVD did not converge in {max_sweeps} sweeps")

    # a padded zero column has zero inner products, so it is never rotated
    a, v = a[:, :cols], v[:cols, :cols]
    sig = np.linalg.norm(a, axis=0)
    order = np.argsort(-sig, kind="stable")
    sig, a, v = sig[order], a[:, order], v[:, order]
    smax = sig[0] if sig.size else 0.0
    good = sig > max(smax * EPS * max(rows, cols), np.finfo(float).tiny)
    u = np.zeros_like(a)
    u[:, good] = a[:, good] / sig[good]
    u = _complete_orthonormal(u, good)
    return u, sig, v.conj().T


def singular_values(m: np.ndarray) -> np.ndarray:
    return svd(m)[1]


def trace_norm(m: np.ndarray) -> float:
    return float(np.sum(singular_values(m)))


def op_norm(m: np.ndarray) -> float:
    s = singular_values(m)
    return float(s[0]) if s.size else 0.0


def frob_dist(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))


def hermitian_eigh(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix (symmetrized first)."""
    h = 0.5 * (m + m.conj().T)
    return np.linalg.eigh(h)


def unitarity_defect(u: np.ndarray) -> float:
    return float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[1])))


def is_unitary(u: np.ndarray, tol: float = 1e-10) -> bool:
    return u.ndim == 2 and u.shape[0] == u.shape[1] and unitarity_defect(u) <= tol


def nearest_unitary(m: np.ndarray) -> np.ndarray:
    """Unitary polar factor of ``m``."""
    u, _, vh = svd(m)
    return u @ vh


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a Ginibre matrix with phase fix."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_state(d: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return z / np.linalg.norm(z)
