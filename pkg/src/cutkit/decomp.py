"""Local decompositions of bipartite unitaries and the measures that price a cut.

A local decomposition writes ``U = sum_i c_i V_i (x) W_i`` with positive
weights and local unitaries. Its magnitude ``2 |c|_1^2 - |c|_2^2`` is the
1-norm of the cut built from it. The product extent is the smallest
magnitude over all valid decompositions; the Choi robustness is a lower
bound computable from an operator Schmidt decomposition.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.linalg import expm
from scipy.optimize import least_squares

from .designs import sample_diagonals
from .errors import DegenerateInputError, NotUnitaryError, ShapeError
from .paulis import pauli_basis
from .tensor import (BipartiteShape, is_unitary, nearest_unitary, partial_transpose,
                     permutation_operator, realign, svd, trace_norm)

VALIDITY_TOL = 1e-8
SCHMIDT_UNITARY_TOL = 1e-6


@dataclass
class LocalDecomposition:
    coeffs: np.ndarray
    ops_a: list[np.ndarray]
    ops_b: list[np.ndarray]
    shape: BipartiteShape

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if not (len(self.coeffs) == len(self.ops_a) == len(self.ops_b)):
            raise ShapeError("coefficient and operator lists differ in length")
        if np.any(self.coeffs <= 0):
            raise ValueError("local decomposition weights must be positive")
        for v in self.ops_a:
            if v.shape != (self.shape.dim_a,) * 2:
                raise ShapeError(f"A-side operator {v.shape} does not match d_A={self.shape.dim_a}")
        for w in self.ops_b:
            if w.shape != (self.shape.dim_b,) * 2:
                raise ShapeError(f"B-side operator {w.shape} does not match d_B={self.shape.dim_b}")

    @classmethod
    def from_terms(cls, terms, shape: BipartiteShape, prune: float = 1e-12) -> "LocalDecomposition":
        """Build from ``(complex coefficient, V, W)`` triples.

        The phase of each coefficient moves into the A-side operator; terms
        with modulus below ``prune`` are dropped.
        """
        cs, va, wb = [], [], []
        for c, v, w in terms:
            mag = abs(c)
            if mag < prune:
                continue
            cs.append(mag)
            va.append(np.asarray(v, dtype=complex) * (c / mag))
            wb.append(np.asarray(w, dtype=complex))
        return cls(np.array(cs), va, wb, shape)

    @classmethod
    def identity(cls, shape: BipartiteShape) -> "LocalDecomposition":
        return cls(np.ones(1), [np.eye(shape.dim_a, dtype=complex)], [np.eye(shape.dim_b, dtype=complex)], shape)

    def __len__(self) -> int:
        return len(self.coeffs)

    def matrix(self) -> np.ndarray:
        return sum(c * np.kron(v, w) for c, v, w in zip(self.coeffs, self.ops_a, self.ops_b))

    def residual(self, u: np.ndarray) -> float:
        return float(np.linalg.norm(self.matrix() - u))

    def is_valid_for(self, u: np.ndarray, tol: float = VALIDITY_TOL) -> bool:
        return self.residual(u) <= tol

    def all_unitary(self, tol: float = 1e-10) -> bool:
        return all(is_unitary(v, tol) for v in self.ops_a) and all(is_unitary(w, tol) for w in self.ops_b)


def magnitude(g: LocalDecomposition | np.ndarray) -> float:
    c = g.coeffs if isinstance(g, LocalDecomposition) else np.asarray(g, dtype=float)
    l1 = float(np.sum(np.abs(c)))
    return 2.0 * l1 * l1 - float(np.dot(c, c))


def product(g1: LocalDecomposition, g2: LocalDecomposition) -> LocalDecomposition:
    """Decomposition of ``U1 @ U2`` from decompositions of ``U1`` and ``U2``."""
    if g1.shape != g2.shape:
        raise ShapeError(f"shape mismatch {g1.shape} vs {g2.shape}")
    cs, va, wb = [], [], []
    for (a, v1, w1), (b, v2, w2) in itertools.product(zip(g1.coeffs, g1.ops_a, g1.ops_b),
                                                      zip(g2.coeffs, g2.ops_a, g2.ops_b)):
        cs.append(a * b)
        va.append(v1 @ v2)
        wb.append(w1 @ w2)
    return LocalDecomposition(np.array(cs), va, wb, g1.shape)


def tensor_product(g1: LocalDecomposition, g2: LocalDecomposition) -> LocalDecomposition:
    """Decomposition of ``U1 (x) U2`` across ``(A1 A2 | B1 B2)``.

    The result's A side is ``A1 (x) A2`` and B side ``B1 (x) B2``; the target
    matrix must be arranged in that factor order.
    """
    shape = BipartiteShape(g1.shape.dim_a * g2.shape.dim_a, g1.shape.dim_b * g2.shape.dim_b)
    cs, va, wb = [], [], []
    for (a, v1, w1), (b, v2, w2) in itertools.product(zip(g1.coeffs, g1.ops_a, g1.ops_b),
                                                      zip(g2.coeffs, g2.ops_a, g2.ops_b)):
        cs.append(a * b)
        va.append(np.kron(v1, v2))
        wb.append(np.kron(w1, w2))
    return LocalDecomposition(np.array(cs), va, wb, shape)


def _check_unitary(u: np.ndarray, shape: BipartiteShape) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    shape.check_square(u, "unitary")
    if not is_unitary(u, 1e-8):
        raise NotUnitaryError("input matrix is not unitary")
    return u


def _qubit_count(d: int) -> int:
    n = d.bit_length() - 1
    if 2**n != d:
        raise ShapeError(f"dimension {d} is not a power of two")
    return n


def pauli_decomposition(u: np.ndarray, shape: BipartiteShape) -> LocalDecomposition:
    """Expand ``u`` in the product Pauli basis."""
    u = _check_unitary(u, shape)
    na, nb = _qubit_count(shape.dim_a), _qubit_count(shape.dim_b)
    _, pa = pauli_basis(na)
    _, pb = pauli_basis(nb)
    r = realign(u, shape)
    # alpha[P, Q] = Tr((P (x) Q)^dag U) / d  with vec() taken row-major
    alpha = pa.reshape(len(pa), -1).conj() @ r @ pb.reshape(len(pb), -1).conj().T / shape.dim
    terms = [(alpha[i, j], pa[i], pb[j]) for i in range(len(pa)) for j in range(len(pb))]
    return LocalDecomposition.from_terms(terms, shape)


@dataclass
class SchmidtDecomposition:
    coeffs: np.ndarray
    ops_a: list[np.ndarray]
    ops_b: list[np.ndarray]
    shape: BipartiteShape
    unitary_flags: list[bool] = field(default_factory=list)

    def matrix(self) -> np.ndarray:
        return sum(l * np.kron(a, b) for l, a, b in zip(self.coeffs, self.ops_a, self.ops_b))

    @property
    def all_unitary(self) -> bool:
        return all(self.unitary_flags)

    def to_local(self) -> LocalDecomposition:
        return LocalDecomposition(self.coeffs.copy(), list(self.ops_a), list(self.ops_b), self.shape)


def _unitary_flag(op: np.ndarray) -> bool:
    d = op.shape[0]
    return float(np.linalg.norm(op.conj().T @ op - np.eye(d))) <= SCHMIDT_UNITARY_TOL


def operator_schmidt(u: np.ndarray, shape: BipartiteShape, cutoff: float = 1e-12) -> SchmidtDecomposition:
    """Operator Schmidt decomposition ``u = sum_j lam_j A_j (x) B_j``.

    Operators are normalized so ``Tr(A_j^dag A_k) = d_A delta_jk`` (same for B),
    which makes ``sum lam_j^2 = 1`` for a unitary.
    """
    u = np.asarray(u, dtype=complex)
    shape.check_square(u)
    da, db = shape.dim_a, shape.dim_b
    left, s, right_h = svd(realign(u, shape))
    lam = s / np.sqrt(shape.dim)
    keep = lam > cutoff * max(lam[0], 1.0)
    ops_a = [np.sqrt(da) * left[:, j].reshape(da, da) for j in np.flatnonzero(keep)]
    ops_b = [np.sqrt(db) * right_h[j, :].reshape(db, db) for j in np.flatnonzero(keep)]
    flags = [_unitary_flag(a) and _unitary_flag(b) for a, b in zip(ops_a, ops_b)]
    return SchmidtDecomposition(lam[keep], ops_a, ops_b, shape, flags)


def swap_operator(shape: BipartiteShape) -> np.ndarray:
    """``F : H_B (x) H_A -> H_A (x) H_B`` exchanging the factors."""
    return permutation_operator((1, 0), (shape.dim_b, shape.dim_a))


def choi_robustness(u: np.ndarray, shape: BipartiteShape) -> float:
    """``2 |(U F)^Gamma|_1^2 / (d_A d_B) - 1`` with the partial transpose on the second factor."""
    u = np.asarray(u, dtype=complex)
    shape.check_square(u)
    uf = u @ swap_operator(shape)
    # rows carry (A, B), columns carry (B, A) after the swap
    pt = partial_transpose(uf, (shape.dim_a, shape.dim_b), (shape.dim_b, shape.dim_a), system=1)
    tn = trace_norm(pt)
    return 2.0 * tn * tn / shape.dim - 1.0


def schmidt_robustness(sd: SchmidtDecomposition) -> float:
    s1 = float(np.sum(sd.coeffs))
    return 2.0 * s1 * s1 - 1.0


def _degenerate_blocks(lam: np.ndarray, rel: float = 1e-9) -> list[list[int]]:
    blocks: list[list[int]] = []
    for j, l in enumerate(lam):
        if blocks and abs(lam[blocks[-1][0]] - l) <= rel * max(lam[0], 1.0):
            blocks[-1].append(j)
        else:
            blocks.append([j])
    return blocks


def _hermitian_from_params(x: np.ndarray, k: int) -> np.ndarray:
    h = np.zeros((k, k), dtype=complex)
    iu = np.triu_indices(k, 1)
    n_off = len(iu[0])
    h[iu] = x[:n_off] + 1j * x[n_off:2 * n_off]
    h = h + h.conj().T
    h[np.diag_indices(k)] = x[2 * n_off:]
    return h


def _rotate_block(ops_a: list[np.ndarray], ops_b: list[np.ndarray], q: np.ndarray):
    """Rotate a degenerate block: A'_j = sum_l Q_lj A_l, B'_j = sum_l conj(Q_lj) B_l."""
    sa, sb = np.stack(ops_a), np.stack(ops_b)
    ra = np.einsum("lj,lxy->jxy", q, sa)
    rb = np.einsum("lj,lxy->jxy", q.conj(), sb)
    return list(ra), list(rb)


def _unitarize_block(ops_a, ops_b, seed: int = 0, starts: int = 12, tol: float = 1e-10):
    """Search a basis rotation inside a degenerate Schmidt block that makes every operator unitary.

    Degenerate Schmidt blocks determine only the span of the operators; the
    sum ``sum_j A_j (x) B_j`` is invariant under the paired rotation above.
    Returns the rotated operators or ``None`` if no start converges.
    """
    k = len(ops_a)
    sa, sb = np.stack(ops_a), np.stack(ops_b)
    da, db = sa.shape[1], sb.shape[1]
    ia, ib = np.eye(da), np.eye(db)

    def residual(x):
        q = expm(1j * _hermitian_from_params(x, k))
        ra = np.einsum("lj,lxy->jxy", q, sa)
        rb = np.einsum("lj,lxy->jxy", q.conj(), sb)
        ea = np.einsum("jyx,jyz->jxz", ra.conj(), ra) - ia
        eb = np.einsum("jyx,jyz->jxz", rb.conj(), rb) - ib
        e = np.concatenate([ea.reshape(-1), eb.reshape(-1)])
        return np.concatenate([e.real, e.imag])

    rng = np.random.default_rng(seed)
    for start in range(starts):
        x0 = np.zeros(k * k) if start == 0 else rng.normal(scale=np.pi / 2, size=k * k)
        sol = least_squares(residual, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=4000)
        if np.linalg.norm(sol.fun) < 1e-6:
            q = expm(1j * _hermitian_from_params(sol.x, k))
            ra, rb = _rotate_block(ops_a, ops_b, q)
            # snap to the exact unitary polar factor; the residual change is
            # bounded by the (tiny) defect and rechecked by the caller
            ra = [nearest_unitary(a) for a in ra]
            rb = [nearest_unitary(b) for b in rb]
            if max(np.linalg.norm(a.conj().T @ a - ia) for a in ra) < tol:
                return ra, rb
    return None


def unitary_schmidt_decomposition(u: np.ndarray, shape: BipartiteShape, seed: int = 0
                                  ) -> LocalDecomposition | None:
    """A Schmidt decomposition whose operators are all unitary, if one is found."""
    sd = operator_schmidt(u, shape)
    ops_a, ops_b = list(sd.ops_a), list(sd.ops_b)
    for block in _degenerate_blocks(sd.coeffs):
        if all(sd.unitary_flags[j] for j in block):
            continue
        if len(block) == 1:
            return None
        found = _unitarize_block([ops_a[j] for j in block], [ops_b[j] for j in block], seed=seed)
        if found is None:
            return None
        for j, a, b in zip(block, *found):
            ops_a[j], ops_b[j] = a, b
    ops_a = [nearest_unitary(a) for a in ops_a]
    ops_b = [nearest_unitary(b) for b in ops_b]
    g = LocalDecomposition(sd.coeffs.copy(), ops_a, ops_b, shape)
    return g if g.is_valid_for(u) else None


def _contraction_split(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unitaries averaging to ``m``, for ``|m|_op <= 1``."""
    left, s, right_h = svd(m)
    s = np.clip(s, 0.0, 1.0)
    root = np.sqrt(1.0 - s * s)
    u1 = left @ np.diag(s + 1j * root) @ right_h
    u2 = left @ np.diag(s - 1j * root) @ right_h
    return u1, u2


def split_schmidt_decomposition(sd: SchmidtDecomposition) -> LocalDecomposition:
    """Unitary decomposition from an arbitrary Schmidt decomposition.

    Each scaled operator is a contraction, hence the average of two unitaries,
    so every Schmidt term expands into four product-unitary terms.
    """
    terms = []
    for lam, a, b in zip(sd.coeffs, sd.ops_a, sd.ops_b):
        na, nb = svd(a)[1][0], svd(b)[1][0]
        ua = _contraction_split(a / na)
        ub = _contraction_split(b / nb)
        for x in ua:
            for y in ub:
                terms.append((lam * na * nb / 4.0, x, y))
    return LocalDecomposition.from_terms(terms, sd.shape)


class ExtentResult(NamedTuple):
    value: float
    certificate: LocalDecomposition | None
    certified: bool


def product_extent_schmidt(u: np.ndarray, shape: BipartiteShape, seed: int = 0) -> ExtentResult:
    """Product extent when a unitary Schmidt decomposition exists, else a flagged upper bound."""
    u = _check_unitary(u, shape)
    cert = unitary_schmidt_decomposition(u, shape, seed=seed)
    if cert is not None:
        s1 = float(np.sum(cert.coeffs))
        return ExtentResult(2.0 * s1 * s1 - 1.0, cert, True)
    candidates = [split_schmidt_decomposition(operator_schmidt(u, shape))]
    if 2 ** (shape.dim_a.bit_length() - 1) == shape.dim_a and 2 ** (shape.dim_b.bit_length() - 1) == shape.dim_b:
        candidates.append(pauli_decomposition(u, shape))
    candidates = [g for g in candidates if g.is_valid_for(u)]
    best = min(candidates, key=magnitude)
    return ExtentResult(magnitude(best), best, False)


def sandwich_bounds(u: np.ndarray, shape: BipartiteShape) -> tuple[float, float]:
    low = choi_robustness(u, shape)
    high = product_extent_schmidt(u, shape).value
    cap = 2.0 * shape.dim_a**2 * shape.dim_b**2 - 1.0
    assert 1.0 - 1e-8 <= low <= high + 1e-8, (low, high)
    assert high <= cap + 1e-8, (high, cap)
    return low, high


def schmidt_coefficients(psi: np.ndarray, shape: BipartiteShape) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Schmidt data of a pure state: ``psi = sum_j lam_j |a_j>|b_j>``; returns (lam, a-columns, b-rows)."""
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (shape.dim,):
        raise ShapeError(f"state of length {psi.shape} does not match {shape}")
    left, s, right_h = svd(psi.reshape(shape.dim_a, shape.dim_b))
    return s, left, right_h


def pure_robustness(psi: np.ndarray, shape: BipartiteShape) -> float:
    nrm = np.linalg.norm(psi)
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError(f"state is not normalized (norm {nrm})")
    lam = schmidt_coefficients(psi, shape)[0]
    s1 = float(np.sum(lam))
    return s1 * s1 - 1.0


@dataclass
class SeparablePair:
    """Separable states ``sigma_plus``/``sigma_minus`` with ``psi = (1+R) sigma_plus - R sigma_minus``."""

    sigma_minus: np.ndarray
    robustness: float
    lam: np.ndarray
    vecs_a: np.ndarray  # columns a_j
    vecs_b: np.ndarray  # columns b_j
    rng: np.random.Generator

    @property
    def n_terms(self) -> int:
        return len(self.lam)

    def sample(self, size: int = 1) -> np.ndarray:
        """Draw ``size`` product pure states ``|s>|t>``, shape ``(size, d_A d_B)``.

        The Schmidt index register is padded to ``2**n`` levels and scrambled by a
        random diagonal from the 2-qubit phase circuit family; ``|s>`` takes the
        conjugate phases and ``|t>`` the phases themselves.
        """
        r = self.n_terms
        n = max(1, int(np.ceil(np.log2(r))))
        diag = sample_diagonals(n, self.rng, size)[:, :r]
        w = np.sqrt(self.lam) / (1.0 + self.robustness) ** 0.25
        s = (diag.conj() * w) @ self.vecs_a.T
        t = (diag * w) @ self.vecs_b.T
        return np.einsum("ka,kb->kab", s, t).reshape(size, -1)

    def sigma_plus(self) -> np.ndarray:
        psi = np.einsum("j,aj,bj->ab", self.lam, self.vecs_a, self.vecs_b).reshape(-1)
        return (np.outer(psi, psi.conj()) + self.robustness * self.sigma_minus) / (1.0 + self.robustness)

    def sampled_mean(self, n_samples: int, chunk: int = 20000) -> np.ndarray:
        d = self.vecs_a.shape[0] * self.vecs_b.shape[0]
        acc = np.zeros((d, d), dtype=complex)
        done = 0
        while done < n_samples:
            k = min(chunk, n_samples - done)
            st = self.sample(k)
            acc += st.T @ st.conj()
            done += k
        return acc / n_samples


def optimal_separable_pair(psi: np.ndarray, shape: BipartiteShape, rng: np.random.Generator,
                           cutoff: float = 1e-12) -> SeparablePair:
    lam, left, right_h = schmidt_coefficients(psi, shape)
    keep = lam > cutoff
    lam = lam[keep]
    if len(lam) < 2:
        raise DegenerateInputError("state has Schmidt rank 1; robustness is zero")
    lam = lam / np.linalg.norm(lam)
    va = left[:, keep]
    vb = right_h[keep, :].T
    s1 = float(np.sum(lam))
    rob = s1 * s1 - 1.0
    d = shape.dim
    sigma_minus = np.zeros((d, d), dtype=complex)
    for k, l in itertools.permutations(range(len(lam)), 2):
        v = np.kron(va[:, k], vb[:, l])
        sigma_minus += lam[k] * lam[l] * np.outer(v, v.conj())
    sigma_minus /= rob
    return SeparablePair(sigma_minus, rob, lam, va, vb, rng)
