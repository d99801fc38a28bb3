"""Clustered Hamiltonian simulation with a space-like cut across the partition.

A Pauli Hamiltonian is split into terms interior to cluster A, interior to
cluster B, and boundary terms touching both. Each first-order Trotter step
applies interior rotations directly. Every boundary rotation
``exp(-i c P tau)`` is replaced by its two-term local decomposition
``|cos| (+-1) + |sin| (+-(-i) P_A) (x) P_B``. The product of all step
decompositions is never expanded: its settings are sampled term by term with
independent Bernoulli bits and one post-selection, and executed with two
ancillas that select local Pauli insertions on each side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import expm

from .decomp import LocalDecomposition, product
from .errors import ConfigError, SamplerFailure, ShapeError
from .harness import CutEstimate, DEFAULT_BLOCK, make_estimate, run_blocks, sample_categorical
from .paulis import PAULI, anticommute, parse_pauli_string
from .spacecut import H_GATE, S_GATE, DoubleHadamardCircuit, prepare_system
from .statesim import GateOp, Observable, apply_matrix, circuit_unitary, outcome_table
from .tensor import BipartiteShape, svd

LOCALITY_CAP = 4
PRUNE = 1e-14


@dataclass(frozen=True)
class PauliTerm:
    coefficient: float
    paulis: tuple[tuple[int, str], ...]

    @classmethod
    def make(cls, coefficient: float, ops: dict[int, str], cap: int = LOCALITY_CAP) -> "PauliTerm":
        ops = {w: c for w, c in ops.items() if c != "I"}
        if not ops:
            raise ValueError("Pauli term has empty support")
        if abs(coefficient) > 1 + 1e-12:
            raise ValueError(f"|coefficient| = {abs(coefficient)} exceeds 1")
        if len(ops) > cap:
            raise ValueError(f"term locality {len(ops)} exceeds cap {cap}")
        return cls(float(coefficient), tuple(sorted(ops.items())))

    @classmethod
    def parse(cls, text: str, cap: int = LOCALITY_CAP) -> "PauliTerm":
        coeff, ops = parse_pauli_string(text)
        return cls.make(coeff, ops, cap)

    @property
    def wires(self) -> list[int]:
        return [w for w, _ in self.paulis]

    @property
    def letters(self) -> str:
        return "".join(c for _, c in self.paulis)

    def restricted(self, wires: Iterable[int]) -> tuple[list[int], str]:
        keep = set(wires)
        sel = [(w, c) for w, c in self.paulis if w in keep]
        return [w for w, _ in sel], "".join(c for _, c in sel)

    def pauli_on(self, order: Sequence[int]) -> np.ndarray:
        """Pauli string (without coefficient) as a matrix over the listed wires."""
        ops = dict(self.paulis)
        out = np.ones((1, 1), dtype=complex)
        for w in order:
            out = np.kron(out, PAULI[ops.get(w, "I")])
        return out

    def label(self) -> str:
        return f"{self.coefficient:g} " + " ".join(f"{c}@{w}" for w, c in self.paulis)


def pauli_rotation(letters: str, angle: float) -> np.ndarray:
    """``exp(-i angle P) = cos(angle) I - i sin(angle) P`` for a Pauli string ``P``."""
    p = _pauli(letters)
    return math.cos(angle) * np.eye(p.shape[0]) - 1j * math.sin(angle) * p


@dataclass
class ClusteredHamiltonian:
    n_qubits: int
    a_wires: tuple[int, ...]
    b_wires: tuple[int, ...]
    interior_a: list[PauliTerm]
    interior_b: list[PauliTerm]
    boundary: list[PauliTerm]

    @property
    def eta(self) -> float:
        return float(sum(abs(t.coefficient) for t in self.boundary))

    @property
    def terms(self) -> list[PauliTerm]:
        """All terms in Trotter-step order."""
        return self.interior_a + self.interior_b + self.boundary

    @property
    def shape(self) -> BipartiteShape:
        return BipartiteShape.qubits(len(self.a_wires), len(self.b_wires))

    def total_weight(self) -> float:
        return float(sum(abs(t.coefficient) for t in self.terms))


def classify(terms: Sequence[PauliTerm], partition: tuple[Sequence[int], Sequence[int]],
             n_qubits: int | None = None) -> ClusteredHamiltonian:
    a, b = (tuple(sorted(set(p))) for p in partition)
    if set(a) & set(b):
        raise ShapeError(f"partition blocks overlap on {sorted(set(a) & set(b))}")
    n = n_qubits if n_qubits is not None else len(a) + len(b)
    if set(a) | set(b) != set(range(n)):
        raise ShapeError("partition must cover wires 0..n-1")
    ea, eb, bd = [], [], []
    for t in terms:
        if not t.paulis:
            raise ValueError("term with empty support")
        sup = set(t.wires)
        if not sup <= set(range(n)):
            raise ShapeError(f"term {t.label()} acts outside the register")
        if sup <= set(a):
            ea.append(t)
        elif sup <= set(b):
            eb.append(t)
        else:
            bd.append(t)
    return ClusteredHamiltonian(n, a, b, ea, eb, bd)


def parse_hamiltonian(text: str, source: str | None = None, cap: int = LOCALITY_CAP) -> ClusteredHamiltonian:
    """Parse the line format: ``qubits n``, ``partition A: 0,1``, then ``coeff P@w ...`` lines."""
    n = None
    part_a = part_b = None
    terms: list[PauliTerm] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head = line.split()[0].lower()
        try:
            if head == "qubits":
                parts = line.split()
                if len(parts) != 2:
                    raise ValueError("expected 'qubits <n>'")
                n = int(parts[1])
                if n < 2:
                    raise ValueError("need at least two qubits")
            elif head == "partition":
                label, _, wires = line[len("partition"):].partition(":")
                label = label.strip().upper()
                ws = [int(w) for w in wires.replace(",", " ").split()]
                if label == "A":
                    part_a = ws
                elif label == "B":
                    part_b = ws
                else:
                    raise ValueError(f"unknown partition block {label!r}")
            else:
                terms.append(PauliTerm.parse(line, cap))
        except ValueError as exc:
            raise ConfigError(str(exc), lineno, source) from None
    if n is None:
        raise ConfigError("missing 'qubits' header", None, source)
    if part_a is None:
        raise ConfigError("missing 'partition A:' line", None, source)
    if part_b is None:
        part_b = [w for w in range(n) if w not in part_a]
    if not terms:
        raise ConfigError("no Hamiltonian terms", None, source)
    try:
        return classify(terms, (part_a, part_b), n)
    except (ShapeError, ValueError) as exc:
        raise ConfigError(str(exc), None, source) from None


def load_hamiltonian(path: str | Path, cap: int = LOCALITY_CAP) -> ClusteredHamiltonian:
    path = Path(path)
    return parse_hamiltonian(path.read_text(), str(path), cap)


def dense_matrix(ham: ClusteredHamiltonian, order: Sequence[int] | None = None) -> np.ndarray:
    order = list(range(ham.n_qubits)) if order is None else list(order)
    return sum(t.coefficient * t.pauli_on(order) for t in ham.terms)


def trotter_unitary(ham: ClusteredHamiltonian, t: float, r: int, order: Sequence[int] | None = None) -> np.ndarray:
    """``T(t/r)^r`` for the step order interior A, interior B, boundary."""
    order = list(range(ham.n_qubits)) if order is None else list(order)
    tau = t / r
    step = np.eye(2 ** len(order), dtype=complex)
    for term in ham.terms:
        p = term.pauli_on(order)
        rot = math.cos(term.coefficient * tau) * np.eye(p.shape[0]) - 1j * math.sin(term.coefficient * tau) * p
        step = rot @ step
    return np.linalg.matrix_power(step, r)


def _commutator_weight(ham: ClusteredHamiltonian) -> float:
    terms = ham.terms
    tot = 0.0
    for j, p in enumerate(terms):
        for q in terms[j + 1:]:
            if anticommute(dict(p.paulis), dict(q.paulis)):
                tot += 2.0 * abs(p.coefficient * q.coefficient)
    return tot


def choose_r(ham: ClusteredHamiltonian, t: float, epsilon: float, strategy: str = "global",
             max_dense_qubits: int = 12) -> int:
    """Trotter step count with first-order error at most ``epsilon / 4``.

    ``global``: ``ceil(4 t^2 (sum|c|)^2 / epsilon)``.
    ``commutator``: ``ceil(2 t^2 sum_{j<k} |[H_j, H_k]| / epsilon)``.
    ``dense``: smallest ``r`` whose error, computed exactly, is within ``epsilon / 4``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if t == 0:
        return 1
    if strategy == "global":
        return max(1, math.ceil(4.0 * t * t * ham.total_weight() ** 2 / epsilon))
    if strategy == "commutator":
        return max(1, math.ceil(2.0 * t * t * _commutator_weight(ham) / epsilon))
    if strategy == "dense":
        if ham.n_qubits > max_dense_qubits:
            raise ValueError(f"dense step selection limited to {max_dense_qubits} qubits")
        exact = expm(-1j * t * dense_matrix(ham))

        def ok(r: int) -> bool:
            err = np.linalg.norm(trotter_unitary(ham, t, r) - exact, 2)
            return err <= epsilon / 4.0

        hi = 1
        while not ok(hi):
            hi *= 2
            if hi > 2**20:
                raise ValueError("no step count found")
        lo = hi // 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ok(mid):
                hi = mid
            else:
                lo = mid
        return hi
    raise ValueError(f"unknown r strategy {strategy!r}")


@dataclass
class BoundaryFactor:
    """Two-term decomposition of one boundary rotation, split into local pieces.

    ``ops_a[x]`` / ``ops_b[x]`` act on the term's own A and B wires for
    branch ``x`` (0 = identity branch, 1 = Pauli branch).
    """

    term: PauliTerm
    c0: float
    c1: float
    wires_a: list[int]
    wires_b: list[int]
    ops_a: tuple[np.ndarray, np.ndarray]
    ops_b: tuple[np.ndarray, np.ndarray]

    @property
    def p1(self) -> float:
        return self.c1 / (self.c0 + self.c1)


def boundary_factor(term: PauliTerm, tau: float, a_wires: Sequence[int], b_wires: Sequence[int]) -> BoundaryFactor:
    wa, la = term.restricted(a_wires)
    wb, lb = term.restricted(b_wires)
    if not wa or not wb:
        raise ValueError(f"term {term.label()} is not a boundary term")
    cos_v = math.cos(term.coefficient * tau)
    sin_v = math.sin(term.coefficient * tau)
    c0, c1 = abs(cos_v), abs(sin_v)
    c0 = 0.0 if c0 < PRUNE else c0
    c1 = 0.0 if c1 < PRUNE else c1
    s0 = -1.0 if cos_v < 0 else 1.0
    s1 = -1.0 if sin_v < 0 else 1.0
    pa = _pauli(la)
    pb = _pauli(lb)
    ida, idb = np.eye(pa.shape[0], dtype=complex), np.eye(pb.shape[0], dtype=complex)
    return BoundaryFactor(term, c0, c1, wa, wb, (s0 * ida, -1j * s1 * pa), (idb, pb))


def _pauli(letters: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for c in letters:
        out = np.kron(out, PAULI[c])
    return out


def boundary_decomposition(term: PauliTerm, t: float, r: int, a_wires: Sequence[int], b_wires: Sequence[int]
                           ) -> LocalDecomposition:
    """Local decomposition of ``exp(-i c P t / r)`` on the full A and B registers."""
    f = boundary_factor(term, t / r, a_wires, b_wires)
    a_wires, b_wires = list(a_wires), list(b_wires)
    ia = [a_wires.index(w) for w in f.wires_a]
    ib = [b_wires.index(w) for w in f.wires_b]
    na, nb = len(a_wires), len(b_wires)
    terms = []
    for x, c in ((0, f.c0), (1, f.c1)):
        va = circuit_unitary([GateOp(f.ops_a[x], ia)], na) if na else f.ops_a[x]
        wb = circuit_unitary([GateOp(f.ops_b[x], ib)], nb) if nb else f.ops_b[x]
        terms.append((c, va, wb))
    return LocalDecomposition.from_terms(terms, BipartiteShape(2**na, 2**nb), prune=PRUNE)


@dataclass
class HamsimPlan:
    ham: ClusteredHamiltonian
    t: float
    r: int
    epsilon: float
    retry_cap: int
    factors: list[BoundaryFactor]
    interior: list[tuple[np.ndarray, list[int], PauliTerm]]
    phi: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n_boundary(self) -> int:
        return len(self.factors)


def closed_form_log_terms(plan: HamsimPlan) -> tuple[float, float]:
    """``(log prod(c0+c1)^{2r}, log prod(c0^2+c1^2)^r)``."""
    l1 = 2 * plan.r * sum(math.log(f.c0 + f.c1) for f in plan.factors)
    l2 = plan.r * sum(math.log(f.c0 * f.c0 + f.c1 * f.c1) for f in plan.factors)
    return l1, l2


def closed_form_magnitude(plan: HamsimPlan) -> float:
    """``2 prod(c0+c1)^{2r} - prod(c0^2+c1^2)^r`` over boundary terms, evaluated in log space."""
    if not plan.factors:
        return 1.0
    l1, l2 = closed_form_log_terms(plan)
    if l1 > 700:
        return math.inf
    return math.exp(l1) * (2.0 - math.exp(l2 - l1))


def make_plan(ham: ClusteredHamiltonian, t: float, epsilon: float, r: int | None = None,
              r_strategy: str = "global", retry_cap: int = 64) -> HamsimPlan:
    if retry_cap < 1:
        raise ValueError("retry cap must be at least 1")
    if r is None:
        r = choose_r(ham, t, epsilon, r_strategy)
    if r < 1:
        raise ValueError("r must be positive")
    tau = t / r
    factors = [boundary_factor(term, tau, ham.a_wires, ham.b_wires) for term in ham.boundary]
    interior = [(pauli_rotation(term.letters, term.coefficient * tau), term.wires, term)
                for term in ham.interior_a + ham.interior_b]
    plan = HamsimPlan(ham, t, r, epsilon, retry_cap, factors, interior)
    plan.phi = closed_form_magnitude(plan)
    return plan


def expanded_decomposition(plan: HamsimPlan) -> LocalDecomposition:
    """Fully expanded local decomposition of the Trotter circuit on ``(A wires | B wires)``.

    Exponential in ``r`` times the number of boundary terms; meant for small
    cross-checks of the closed-form magnitude and the sampled law.
    """
    ham = plan.ham
    a_wires, b_wires = list(ham.a_wires), list(ham.b_wires)
    na, nb = len(a_wires), len(b_wires)
    shape = BipartiteShape(2**na, 2**nb)
    ua = circuit_unitary([GateOp(rot, [a_wires.index(w) for w in wires]) for rot, wires, term in plan.interior
                          if set(wires) <= set(a_wires)], na)
    ub = circuit_unitary([GateOp(rot, [b_wires.index(w) for w in wires]) for rot, wires, term in plan.interior
                          if set(wires) <= set(b_wires)], nb)
    step = LocalDecomposition(np.ones(1), [ua], [ub], shape)
    for term in ham.boundary:
        step = product(boundary_decomposition(term, plan.t, plan.r, a_wires, b_wires), step)
    total = LocalDecomposition.identity(shape)
    for _ in range(plan.r):
        total = product(step, total)
    return total


@dataclass(frozen=True)
class PlanSetting:
    x: np.ndarray  # (r, n_boundary) bits
    y: np.ndarray
    g: int


def sample_plan_settings(plan: HamsimPlan, rng: np.random.Generator, size: int
                         ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batch of settings ``(x, y, g)`` with ``x, y`` of shape ``(size, r, n_boundary)``.

    Bits are independent Bernoulli draws with ``P(1) = c1 / (c0 + c1)`` and
    ``g`` is a fair bit; ``x == y`` with ``g == 1`` is rejected and redrawn,
    at most ``retry_cap`` times per setting.
    """
    nb, r = plan.n_boundary, plan.r
    if nb == 0:
        z = np.zeros((size, r, 0), dtype=np.int8)
        return z, z.copy(), np.zeros(size, dtype=np.int64)
    p1 = np.array([f.p1 for f in plan.factors])
    x = np.empty((size, r, nb), dtype=np.int8)
    y = np.empty((size, r, nb), dtype=np.int8)
    g = np.empty(size, dtype=np.int64)
    todo = np.arange(size)
    for _ in range(plan.retry_cap):
        k = todo.size
        x[todo] = rng.random((k, r, nb)) < p1
        y[todo] = rng.random((k, r, nb)) < p1
        g[todo] = rng.integers(0, 2, size=k)
        same = np.all(x[todo] == y[todo], axis=(1, 2))
        todo = todo[same & (g[todo] == 1)]
        if todo.size == 0:
            return x, y, g
    raise SamplerFailure(f"{todo.size} setting(s) rejected {plan.retry_cap} times in a row")


def sample_plan_setting(plan: HamsimPlan, rng: np.random.Generator) -> PlanSetting:
    x, y, g = sample_plan_settings(plan, rng, 1)
    return PlanSetting(x[0], y[0], int(g[0]))


def _select(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    d = first.shape[0]
    m = np.zeros((2 * d, 2 * d), dtype=complex)
    m[:d, :d] = first
    m[d:, d:] = second
    return m


def assemble_local_circuits(plan: HamsimPlan, setting: PlanSetting) -> DoubleHadamardCircuit:
    """Gate list on system wires plus ``R_A = n`` and ``R_B = n + 1``.

    Boundary branches with ``x == y`` need no control and are emitted as plain
    local gates.
    """
    n = plan.ham.n_qubits
    ra, rb = n, n + 1
    gates = [GateOp(H_GATE, [ra], name="H"), GateOp(H_GATE, [rb], name="H")]
    if setting.g:
        gates += [GateOp(S_GATE, [ra], name="S"), GateOp(S_GATE, [rb], name="S")]
    for step in range(plan.r):
        for mat, wires, term in plan.interior:
            gates.append(GateOp(mat, wires, name="ROT", params={"step": step, "term": term.letters}))
        for k, f in enumerate(plan.factors):
            bx, by = int(setting.x[step, k]), int(setting.y[step, k])
            for anc, wires, ops in ((ra, f.wires_a, f.ops_a), (rb, f.wires_b, f.ops_b)):
                params = {"step": step, "term": k, "x": bx, "y": by}
                if bx == by:
                    gates.append(GateOp(ops[bx], wires, name="PAULI", params=params))
                else:
                    gates.append(GateOp(_select(ops[bx], ops[by]), [anc, *wires], name="SELECT", params=params))
    gates += [GateOp(H_GATE, [ra], name="H"), GateOp(H_GATE, [rb], name="H")]
    return DoubleHadamardCircuit(gates, n + 2, ra, rb, None, {"g": setting.g})


# ---- batched execution -------------------------------------------------------


@dataclass
class _Program:
    """Local register program: ``n`` wires, ancillas at ``ancs``."""

    n: int
    ancs: list[int]
    steps: list[tuple]  # ("shared", matrix, targets) | ("select", k, options(4,D,D), targets)


def _fuse_shared(ops: list[tuple[np.ndarray, list[int]]], max_union: int = 8) -> list[tuple[np.ndarray, list[int]]]:
    out: list[tuple[np.ndarray, list[int]]] = []
    group: list[tuple[np.ndarray, list[int]]] = []

    def flush():
        if not group:
            return
        wires = sorted(set(w for _, ws in group for w in ws))
        local = {w: i for i, w in enumerate(wires)}
        mat = circuit_unitary([GateOp(m, [local[w] for w in ws]) for m, ws in group], len(wires))
        out.append((mat, wires))
        group.clear()

    for m, ws in ops:
        union = set(w for _, g_ws in group for w in g_ws) | set(ws)
        if len(union) > max_union:
            flush()
        group.append((m, ws))
    flush()
    return out


def _program(plan: HamsimPlan, side: str) -> _Program:
    """Build the register program for ``side`` in ``{"A", "B", "AB"}`` with local wire numbering."""
    ham = plan.ham
    if side == "A":
        sys_wires = list(ham.a_wires)
    elif side == "B":
        sys_wires = list(ham.b_wires)
    else:
        sys_wires = list(range(ham.n_qubits))
    local = {w: i for i, w in enumerate(sys_wires)}
    n_sys = len(sys_wires)
    ancs = []
    if side in ("A", "AB"):
        ancs.append(n_sys + len(ancs))
    anc_a = ancs[0] if side in ("A", "AB") else None
    if side in ("B", "AB"):
        ancs.append(n_sys + len(ancs))
    anc_b = ancs[-1] if side in ("B", "AB") else None
    interior = [(m, [local[w] for w in ws]) for m, ws, _ in plan.interior if all(w in local for w in ws)]
    fused = _fuse_shared(interior)
    select_ops = []
    for k, f in enumerate(plan.factors):
        for anc, wires, ops in ((anc_a, f.wires_a, f.ops_a), (anc_b, f.wires_b, f.ops_b)):
            if anc is None:
                continue
            opts = np.stack([_select(ops[bx], ops[by]) for bx in (0, 1) for by in (0, 1)])
            select_ops.append((k, opts, [anc] + [local[w] for w in wires]))
    step_body = [("shared", m, ws) for m, ws in fused] + [("select", k, o, ws) for k, o, ws in select_ops]
    return _Program(n_sys + len(ancs), ancs, step_body)


def _run_program(prog: _Program, plan: HamsimPlan, psi: np.ndarray, x: np.ndarray, y: np.ndarray,
                 g: np.ndarray) -> np.ndarray:
    n = prog.n
    batch = len(g)
    n_anc = len(prog.ancs)
    states = np.broadcast_to(np.kron(psi, np.eye(2**n_anc, dtype=complex)[0]), (batch, 2**n)).copy()
    had = H_GATE
    for a in prog.ancs:
        states = apply_matrix(states, had, [a], n)
    if np.any(g):
        idx = np.arange(2**n)
        weight = sum(((idx >> (n - 1 - a)) & 1) for a in prog.ancs)
        states[g == 1] *= 1j ** weight
    codes = 2 * x.astype(np.int64) + y.astype(np.int64)  # (batch, r, nb)
    for step in range(plan.r):
        for op in prog.steps:
            if op[0] == "shared":
                states = apply_matrix(states, op[1], op[2], n)
                continue
            _, k, opts, targets = op
            col = codes[:, step, k]
            for v in range(4):
                sel = np.flatnonzero(col == v)
                if sel.size == 0:
                    continue
                if sel.size == batch:
                    states = apply_matrix(states, opts[v], targets, n)
                else:
                    states[sel] = apply_matrix(states[sel], opts[v], targets, n)
    for a in prog.ancs:
        states = apply_matrix(states, had, [a], n)
    return states


def _split_product_state(psi: np.ndarray, ham: ClusteredHamiltonian, tol: float = 1e-10):
    """Factor a system state across the partition, or return ``None`` if entangled."""
    n = ham.n_qubits
    t = psi.reshape((2,) * n).transpose(list(ham.a_wires) + list(ham.b_wires))
    m = t.reshape(2 ** len(ham.a_wires), 2 ** len(ham.b_wires))
    u, s, vh = svd(m)
    if s.size > 1 and s[1] > tol:
        return None
    return u[:, 0] * s[0], vh[0, :]


_ANC_SIGN_1 = np.array([1.0, -1.0])
_ANC_SIGN_2 = np.array([1.0, -1.0, -1.0, 1.0])


def _side_law(states: np.ndarray, n_sys: int, n_anc: int, obs: Observable | None):
    split = states.reshape(states.shape[0], 2**n_sys, 2**n_anc)
    tables = []
    vals = None
    for b in range(2**n_anc):
        vals, p = outcome_table(np.ascontiguousarray(split[:, :, b]), obs, n_sys)
        tables.append(p)
    return vals, np.stack(tables, axis=1)


def _block_values(plan: HamsimPlan, psi: np.ndarray, x_obs: Observable, rng: np.random.Generator,
                  count: int, mode: str) -> np.ndarray:
    ham = plan.ham
    x, y, g = sample_plan_settings(plan, rng, count)
    sign_g = np.where(g == 1, -1.0, 1.0)
    factored = plan.meta.get("factored")
    if factored is not None:
        (psi_a, obs_a), (psi_b, obs_b) = factored
        parts = []
        for side, ps, ob in (("A", psi_a, obs_a), ("B", psi_b, obs_b)):
            prog = plan.meta["prog_" + side]
            st = _run_program(prog, plan, ps, x, y, g)
            vals, probs = _side_law(st, prog.n - 1, 1, ob)
            parts.append((vals, probs))
        if mode == "conditional":
            ca = np.einsum("b,k,nbk->n", _ANC_SIGN_1, *parts[0])
            cb = np.einsum("b,k,nbk->n", _ANC_SIGN_1, *parts[1])
            return plan.phi * sign_g * ca * cb
        out = np.ones(count)
        for vals, probs in parts:
            k = len(vals)
            pick = sample_categorical(probs.reshape(count, 2 * k), rng)
            out *= _ANC_SIGN_1[pick // k] * vals[pick % k]
        return plan.phi * sign_g * out
    prog = plan.meta["prog_AB"]
    st = _run_program(prog, plan, psi, x, y, g)
    vals, probs = _side_law(st, ham.n_qubits, 2, x_obs)
    if mode == "conditional":
        return plan.phi * sign_g * np.einsum("b,k,nbk->n", _ANC_SIGN_2, vals, probs)
    k = len(vals)
    pick = sample_categorical(probs.reshape(count, 4 * k), rng)
    return plan.phi * sign_g * _ANC_SIGN_2[pick // k] * vals[pick % k]


def hamsim_estimate(ham: ClusteredHamiltonian, rho_prep, x: Observable, t: float, epsilon: float,
                    trials: int | None = None, seed: int = 0, r: int | None = None, r_strategy: str = "global",
                    retry_cap: int = 64, mode: str = "sampled", threads: int | None = None,
                    block_size: int = DEFAULT_BLOCK, chebyshev_c: float = 12.0, keep_values: bool = False
                    ) -> tuple[CutEstimate, HamsimPlan]:
    """Estimate ``Tr(X exp(-iHt) rho exp(iHt))`` using only A-local and B-local circuits.

    When ``trials`` is omitted, ``ceil(C exp(8 eta t) / epsilon^2)`` trials are used.
    Product inputs with a Pauli observable run the two sides as separate
    registers; otherwise the joint register is simulated.
    """
    if mode not in ("sampled", "conditional"):
        raise ValueError(f"unknown mode {mode!r}")
    plan = make_plan(ham, t, epsilon, r, r_strategy, retry_cap)
    if trials is None:
        trials = math.ceil(chebyshev_c * math.exp(8 * ham.eta * t) / epsilon**2)
    psi = prepare_system(rho_prep, ham.n_qubits)
    factored = None
    if x.kind == "pauli":
        split = _split_product_state(psi, ham)
        if split is not None:
            obs_a, obs_b = x.split(ham.a_wires)
            la = {w: i for i, w in enumerate(ham.a_wires)}
            lb = {w: i for i, w in enumerate(ham.b_wires)}
            obs_a = obs_a.remap(la) if obs_a else (Observable.pauli("I", [0], x.coefficient))
            obs_b = obs_b.remap(lb) if obs_b else None
            factored = ((split[0], obs_a), (split[1], obs_b))
    plan.meta["factored"] = factored
    if factored is not None:
        plan.meta["prog_A"] = _program(plan, "A")
        plan.meta["prog_B"] = _program(plan, "B")
    else:
        plan.meta["prog_AB"] = _program(plan, "AB")
    values = run_blocks(lambda rng, k: _block_values(plan, psi, x, rng, k, mode), trials, seed, block_size, threads)
    return make_estimate(values, plan.phi, keep_values), plan
