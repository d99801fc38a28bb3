"""Brute-force oracles binding the estimators to exact linear algebra.

Each oracle here is built along a separate code path from the code it
checks: dense operators are assembled by explicit bit manipulation rather
than by the simulator's tensor reshapes, and sampler laws are enumerated in
exact rational arithmetic.
"""

from __future__ import annotations

import csv
import itertools
import math
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import decomp, hamsim, spacecut, timecut
from .config import named_gate
from .decomp import LocalDecomposition, magnitude, pure_robustness
from .statesim import Observable
from .tensor import BipartiteShape, hermitian_eigh, random_state, random_unitary, unitarity_defect


@dataclass
class OracleReport:
    name: str
    computed: float
    oracle: float
    tolerance: float
    passed: bool
    relation: str = "eq"

    @classmethod
    def equal(cls, name: str, computed: float, oracle: float, tolerance: float) -> "OracleReport":
        return cls(name, float(computed), float(oracle), tolerance, abs(computed - oracle) <= tolerance, "eq")

    @classmethod
    def at_least(cls, name: str, computed: float, oracle: float, tolerance: float) -> "OracleReport":
        return cls(name, float(computed), float(oracle), tolerance, computed >= oracle - tolerance, "ge")

    @classmethod
    def at_most(cls, name: str, computed: float, oracle: float, tolerance: float) -> "OracleReport":
        return cls(name, float(computed), float(oracle), tolerance, computed <= oracle + tolerance, "le")


def pauli_operator(ops: Mapping[int, str], n: int) -> np.ndarray:
    """Dense Pauli string built from its action on basis states (wire 0 most significant)."""
    dim = 2**n
    out = np.zeros((dim, dim), dtype=complex)
    for x in range(dim):
        y, amp = x, 1.0 + 0j
        for w, c in ops.items():
            bit = (x >> (n - 1 - w)) & 1
            if c in "XY":
                y ^= 1 << (n - 1 - w)
            if c == "Y":
                amp *= 1j if bit == 0 else -1j
            elif c == "Z" and bit:
                amp = -amp
        out[y, x] += amp
    return out


def embed_operator(matrix: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """Dense ``2**n`` operator acting as ``matrix`` on ``targets`` (listed most significant first)."""
    k = len(targets)
    dim = 2**n
    out = np.zeros((dim, dim), dtype=complex)
    rest_mask = dim - 1
    for t in targets:
        rest_mask &= ~(1 << (n - 1 - t))
    for col in range(dim):
        sub_in = 0
        for t in targets:
            sub_in = (sub_in << 1) | ((col >> (n - 1 - t)) & 1)
        base = col & rest_mask
        for sub_out in range(2**k):
            amp = matrix[sub_out, sub_in]
            if amp == 0:
                continue
            row = base
            for pos, t in enumerate(targets):
                if (sub_out >> (k - 1 - pos)) & 1:
                    row |= 1 << (n - 1 - t)
            out[row, col] += amp
    return out


def dense_hamiltonian(ham) -> np.ndarray:
    n = ham.n_qubits
    return sum(t.coefficient * pauli_operator(dict(t.paulis), n) for t in ham.terms)


def dense_evolution(ham, t: float) -> np.ndarray:
    """``exp(-i H t)`` by Hermitian eigendecomposition of the dense Hamiltonian."""
    w, v = hermitian_eigh(dense_hamiltonian(ham))
    u = (v * np.exp(-1j * w * t)) @ v.conj().T
    if unitarity_defect(u) > 1e-10:
        raise ArithmeticError("dense evolution lost unitarity")
    return u


def pauli_exponential(ops: Mapping[int, str], angle: float, n: int) -> np.ndarray:
    """``exp(-i angle P) = cos(angle) 1 - i sin(angle) P`` (P squares to the identity)."""
    return math.cos(angle) * np.eye(2**n) - 1j * math.sin(angle) * pauli_operator(ops, n)


def expectation(psi: np.ndarray, x: np.ndarray) -> float:
    return float(np.real(np.vdot(psi, x @ psi)))


def cut_target_oracle(u: np.ndarray, a_wires: Sequence[int], b_wires: Sequence[int], psi: np.ndarray,
                      x_full: np.ndarray, n: int) -> float:
    """``Tr(X U rho U^dag)`` for a pure system state."""
    big = embed_operator(u, list(a_wires) + list(b_wires), n)
    return expectation(big @ psi, x_full)


def claim_cross_term(g: LocalDecomposition, a_wires, b_wires, psi: np.ndarray, x_full: np.ndarray, n: int,
                     i: int, j: int) -> float:
    """``(1/2)[<psi_j|X|psi_i> + <psi_i|X|psi_j>]`` with ``psi_k = (V_k (x) W_k) psi``."""
    wires = list(a_wires) + list(b_wires)
    pi = embed_operator(np.kron(g.ops_a[i], g.ops_b[i]), wires, n) @ psi
    pj = embed_operator(np.kron(g.ops_a[j], g.ops_b[j]), wires, n) @ psi
    return float(np.real(np.vdot(pj, x_full @ pi)))


# ---- sampler laws -------------------------------------------------------------


def enumerate_distribution(sampler_law: Callable[[tuple], float] | Mapping, support: Iterable[tuple]) -> dict:
    """Tabulate a probability law on an explicit support."""
    if isinstance(sampler_law, Mapping):
        return {s: sampler_law.get(s, 0) for s in support}
    return {s: sampler_law(s) for s in support}


def setting_process_law(c: Sequence[Fraction]) -> dict[tuple[int, int, int], Fraction]:
    """Exact law of: ``i, j`` i.i.d. proportional to ``c``; fair ``g``; reject ``(i == j, g == 1)``."""
    tot = sum(c)
    raw = {}
    for i, j, g in itertools.product(range(len(c)), range(len(c)), (0, 1)):
        raw[i, j, g] = Fraction(0) if (i == j and g == 1) else (c[i] / tot) * (c[j] / tot) / 2
    acc = sum(raw.values())
    return {k: v / acc for k, v in raw.items()}


def setting_formula_law(c: Sequence[Fraction]) -> dict[tuple[int, int, int], Fraction]:
    """``c_i c_j / (2 |c|_1^2 - |c|_2^2)`` with the forbidden settings at zero."""
    phi = 2 * sum(c) ** 2 - sum(x * x for x in c)
    return {(i, j, g): (Fraction(0) if (i == j and g == 1) else c[i] * c[j] / phi)
            for i, j, g in itertools.product(range(len(c)), range(len(c)), (0, 1))}


def plan_process_law(pairs: Sequence[tuple[Fraction, Fraction]], r: int) -> dict:
    """Exact law of the Bernoulli-plus-post-selection sampler.

    Keys are ``(x_bits, y_bits, g)`` with bit tuples of length ``r * len(pairs)``
    ordered step-major.
    """
    m = r * len(pairs)
    p1 = [c1 / (c0 + c1) for c0, c1 in pairs] * r
    law = {}
    for x in itertools.product((0, 1), repeat=m):
        px = math.prod(p if b else 1 - p for b, p in zip(x, p1))
        for y in itertools.product((0, 1), repeat=m):
            py = math.prod(p if b else 1 - p for b, p in zip(y, p1))
            for g in (0, 1):
                law[x, y, g] = Fraction(0) if (x == y and g == 1) else px * py / 2
    acc = sum(law.values())
    return {k: v / acc for k, v in law.items()}


def plan_formula_law(pairs: Sequence[tuple[Fraction, Fraction]], r: int) -> dict:
    """``c_x c_y / phi`` with ``phi = 2 prod(c0+c1)^{2r} - prod(c0^2+c1^2)^r``."""
    m = r * len(pairs)
    cs = list(pairs) * r
    phi = 2 * math.prod(c0 + c1 for c0, c1 in pairs) ** (2 * r) - math.prod(c0 * c0 + c1 * c1 for c0, c1 in pairs) ** r
    law = {}
    for x in itertools.product((0, 1), repeat=m):
        cx = math.prod(pair[b] for b, pair in zip(x, cs))
        for y in itertools.product((0, 1), repeat=m):
            cy = math.prod(pair[b] for b, pair in zip(y, cs))
            for g in (0, 1):
                law[x, y, g] = Fraction(0) if (x == y and g == 1) else cx * cy / phi
    return law


def tv_distance(samples: Iterable, pmf: Mapping) -> float:
    counts = Counter(samples)
    n = sum(counts.values())
    keys = set(counts) | set(pmf)
    return 0.5 * sum(abs(counts.get(k, 0) / n - float(pmf.get(k, 0))) for k in keys)


def chi_square_uniform(counts: Sequence[int]) -> tuple[float, int]:
    counts = np.asarray(counts, dtype=float)
    exp = counts.sum() / len(counts)
    return float(np.sum((counts - exp) ** 2 / exp)), len(counts) - 1


# ---- entanglement oracles ------------------------------------------------------


def choi_vector(u: np.ndarray, shape: BipartiteShape) -> np.ndarray:
    """``(1 (x) U)|Phi>`` regrouped as ``(A' A) | (B' B)``."""
    da, db = shape.dim_a, shape.dim_b
    d = da * db
    v = np.zeros((da, db, da, db), dtype=complex)  # (a', b', a, b)
    for col in range(d):
        ap, bp = divmod(col, db)
        v[ap, bp] = u[:, col].reshape(da, db)
    return v.transpose(0, 2, 1, 3).reshape(-1) / np.sqrt(d)


def robustness_inequality_audit(g: LocalDecomposition, target_u: np.ndarray, tol: float = 1e-8) -> OracleReport:
    """Check ``phi(g) >= 1 + 2 R(J_U)`` using the Choi vector's pure-state robustness."""
    sh = g.shape
    big = BipartiteShape(sh.dim_a**2, sh.dim_b**2)
    rob = pure_robustness(choi_vector(target_u, sh), big)
    return OracleReport.at_least("robustness_inequality", magnitude(g), 1.0 + 2.0 * rob, tol)


def sigma_plus_phase_average(lam: np.ndarray, vecs_a: np.ndarray, vecs_b: np.ndarray, rob: float) -> np.ndarray:
    """Exact ``E |s><s| (x) |t><t|`` over independent uniform phases per Schmidt index.

    A three-point grid per phase integrates every moment of order at most two
    in each phase exactly.
    """
    r = len(lam)
    w = np.sqrt(lam) / (1 + rob) ** 0.25
    grid = np.exp(2j * np.pi * np.arange(3) / 3)
    acc = 0
    for ph in itertools.product(grid, repeat=r):
        ph = np.array(ph)
        s = vecs_a @ (np.conj(ph) * w)
        t = vecs_b @ (ph * w)
        st = np.kron(s, t)
        acc = acc + np.outer(st, st.conj())
    return acc / 3**r


def design_moment_mismatch(n: int) -> int:
    """Count 4-tuples where pairwise-gate phase moments differ from fully random diagonal moments.

    ``E[D_x conj(D_y) D_z conj(D_w)]`` is 1 iff ``{x, z} = {y, w}`` for uniform
    independent phases on every basis state; for the circuit it is the
    product over gates of the same rule applied to the gate-local labels.
    """
    dim = 2**n
    bits = lambda v, q: (v >> (n - 1 - q)) & 1
    gates = [(p, q) for p in range(n) for q in range(p + 1, n)] + [(q,) for q in range(n)]
    bad = 0
    for x, y, z, w in itertools.product(range(dim), repeat=4):
        full = sorted((x, z)) == sorted((y, w))
        circ = True
        for gate in gates:
            lab = lambda v: tuple(bits(v, q) for q in gate)
            if sorted((lab(x), lab(z))) != sorted((lab(y), lab(w))):
                circ = False
                break
        bad += full != circ
    return bad


# ---- audit suite ---------------------------------------------------------------


def run_audit(seed: int = 0) -> list[OracleReport]:
    """Quick end-to-end oracle suite used by ``cutkit verify``."""
    rng = np.random.default_rng(seed)
    sh = BipartiteShape(2, 2)
    reports: list[OracleReport] = []
    cnot, swap = named_gate("cnot"), named_gate("swap")

    res = decomp.product_extent_schmidt(cnot, sh)
    reports.append(OracleReport.equal("extent_cnot", res.value, 3.0, 1e-8))
    reports.append(OracleReport.equal("choi_robustness_cnot", decomp.choi_robustness(cnot, sh), 3.0, 1e-8))
    reports.append(OracleReport.equal("choi_robustness_swap", decomp.choi_robustness(swap, sh), 7.0, 1e-8))
    for theta in (np.pi / 16, np.pi / 8, np.pi / 4):
        zz = named_gate(f"zz({theta})")
        val = decomp.product_extent_schmidt(zz, sh).value
        reports.append(OracleReport.equal(f"extent_zz_{theta:.4f}", val, 1 + 2 * abs(math.sin(2 * theta)), 1e-8))
        g = decomp.pauli_decomposition(zz, sh)
        reports.append(OracleReport.equal(f"choi_qpd_zz_{theta:.4f}", spacecut.choi_residual(g, sh, zz), 0.0, 1e-9))
    u = random_unitary(4, rng)
    g = decomp.pauli_decomposition(u, sh)
    reports.append(OracleReport.equal("choi_qpd_random", spacecut.choi_residual(g, sh, u), 0.0, 1e-9))
    sd = decomp.operator_schmidt(u, sh)
    reports.append(OracleReport.equal("schmidt_vs_trace_norm", decomp.schmidt_robustness(sd),
                                      decomp.choi_robustness(u, sh), 1e-8))
    for name, gate, dec in (("cnot_pauli", cnot, decomp.pauli_decomposition(cnot, sh)),
                            ("cnot_schmidt", cnot, res.certificate), ("random_pauli", u, g)):
        rep = robustness_inequality_audit(dec, gate)
        rep.name = f"robustness_inequality_{name}"
        reports.append(rep)

    # Claim-level identity on a 2+2+1 register
    layout = spacecut.CutLayout((0,), (1,), 3)
    psi = random_state(8, rng)
    obs = Observable.pauli("XZY", [0, 1, 2], 0.8)
    x_full = 0.8 * pauli_operator({0: "X", 1: "Z", 2: "Y"}, 3)
    worst = 0.0
    for i, j in itertools.product(range(len(g)), repeat=2):
        cm = spacecut.conditional_means(g, layout, psi, obs, [i, i], [j, j], [0, 1])
        worst = max(worst, abs((cm[0] - cm[1]) - claim_cross_term(g, (0,), (1,), psi, x_full, 3, i, j)))
    reports.append(OracleReport.equal("conditional_difference_identity", worst, 0.0, 1e-9))

    for d in (2, 4, 8):
        reports.append(OracleReport.equal(f"timelike_identity_d{d}", timecut.qpd_identity_check(d), 0.0, 1e-12))
    reports.append(OracleReport.equal("diagonal_design_moments_n3", design_moment_mismatch(3), 0, 0))

    ham = hamsim.classify([hamsim.PauliTerm.make(0.7, {0: "Z"}), hamsim.PauliTerm.make(-0.4, {1: "X"}),
                           hamsim.PauliTerm.make(0.3, {0: "X", 1: "Y"})], ([0], [1]), 2)
    plan = hamsim.make_plan(ham, 0.9, 0.05, r=2)
    exp_g = hamsim.expanded_decomposition(plan)
    reports.append(OracleReport.equal("closed_form_magnitude", plan.phi, magnitude(exp_g), 1e-12))
    reports.append(OracleReport.equal("expanded_validity", exp_g.residual(hamsim.trotter_unitary(ham, 0.9, 2)),
                                      0.0, 1e-8))
    reports.append(OracleReport.equal("dense_evolution_vs_trotter_limit",
                                      float(np.linalg.norm(dense_evolution(ham, 0.9)
                                                           - hamsim.trotter_unitary(ham, 0.9, 4096), 2)),
                                      0.0, 1e-3))
    pairs = [(Fraction(3, 5), Fraction(4, 5)), (Fraction(5, 13), Fraction(12, 13))]
    mismatch = sum(plan_process_law(pairs, 1)[k] != v for k, v in plan_formula_law(pairs, 1).items())
    reports.append(OracleReport.equal("plan_sampler_law_exact", mismatch, 0, 0))
    c = [Fraction(1, 2), Fraction(1, 3), Fraction(1, 6)]
    mismatch = sum(setting_process_law(c)[k] != v for k, v in setting_formula_law(c).items())
    reports.append(OracleReport.equal("setting_law_exact", mismatch, 0, 0))
    return reports


def write_junit(reports: Sequence[OracleReport], path: str | Path) -> None:
    failures = sum(not r.passed for r in reports)
    suite = ET.Element("testsuite", name="cutkit-verify", tests=str(len(reports)), failures=str(failures))
    for r in reports:
        case = ET.SubElement(suite, "testcase", classname="cutkit.verify", name=r.name)
        if not r.passed:
            msg = f"{r.computed!r} vs {r.oracle!r} ({r.relation}, tol {r.tolerance})"
            ET.SubElement(case, "failure", message=msg).text = msg
    ET.ElementTree(suite).write(path, encoding="utf-8", xml_declaration=True)


def write_csv(reports: Sequence[OracleReport], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "computed", "oracle", "tolerance", "relation", "passed"])
        for r in reports:
            w.writerow([r.name, f"{r.computed:.12g}", f"{r.oracle:.12g}", f"{r.tolerance:g}", r.relation,
                        str(r.passed).lower()])
