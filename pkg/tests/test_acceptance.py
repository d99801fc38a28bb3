"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Run directly (``python tests/test_acceptance.py``) or through pytest.
"""

from __future__ import annotations

import itertools
import math
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from cutkit import hamsim, spacecut, timecut
from cutkit.config import named_gate
from cutkit.decomp import (
    LocalDecomposition,
    choi_robustness,
    magnitude,
    operator_schmidt,
    optimal_separable_pair,
    pauli_decomposition,
    product_extent_schmidt,
    schmidt_robustness,
    tensor_product,
)
from cutkit.hamsim import PauliTerm, classify
from cutkit.spacecut import CutLayout, SettingSample
from cutkit.statesim import (
    GateOp,
    Observable,
    StateVector,
    apply_circuit,
    circuit_unitary,
    measure_computational,
    product_state,
)
from cutkit.tensor import BipartiteShape, random_state, random_unitary
from cutkit.verify import (
    claim_cross_term,
    cut_target_oracle,
    dense_evolution,
    embed_operator,
    pauli_operator,
    plan_formula_law,
    robustness_inequality_audit,
    sigma_plus_phase_average,
    tv_distance,
)

SH = BipartiteShape(2, 2)
_capture = {}


@pytest.fixture(autouse=True)
def _uncaptured(capsys):
    _capture["capsys"] = capsys
    yield
    _capture.clear()


def report(number: int, ok: bool, detail: str) -> None:
    with _capture["capsys"].disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}", flush=True)


def zz(theta: float) -> np.ndarray:
    return named_gate(f"zz({theta})")


def transversal_cnot(k: int) -> np.ndarray:
    cnot = named_gate("cnot")
    return circuit_unitary([GateOp(cnot, [j, k + j]) for j in range(k)], 2 * k)


def pauli_matrix_obs(obs: Observable, n: int) -> np.ndarray:
    return embed_operator(obs.matrix(), obs.wires, n)


# ---- 1 -------------------------------------------------------------------------------


def test_criterion_01_qpd_identity():
    start = time.perf_counter()
    worst = 0.0
    cnot = named_gate("cnot")
    cases = [(pauli_decomposition(cnot, SH), cnot)]
    for theta in (math.pi / 16, math.pi / 8, math.pi / 4):
        u = zz(theta)
        cases += [(pauli_decomposition(u, SH), u), (product_extent_schmidt(u, SH).certificate, u)]
    u = random_unitary(4, np.random.default_rng(1))
    cases.append((pauli_decomposition(u, SH), u))
    for g, target in cases:
        j = spacecut.reconstruct_choi(g, SH)
        phi = np.zeros(16, dtype=complex)
        for k in range(4):
            phi += np.kron(np.eye(4)[k], target[:, k]) / 2
        worst = max(worst, float(np.linalg.norm(j - np.outer(phi, phi.conj()))))
    g1 = product_extent_schmidt(cnot, SH).certificate
    g3 = tensor_product(tensor_product(g1, g1), g1)
    worst = max(worst, spacecut.choi_residual(g3, BipartiteShape(8, 8), transversal_cnot(3)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed <= 10
    report(1, ok, f"max Choi residual {worst:.2e} (<= 1e-9) in {elapsed:.1f}s (<= 10s)")
    assert ok


# ---- 2 -------------------------------------------------------------------------------


def test_criterion_02_entanglement_measures():
    checks = []
    cnot, swap = named_gate("cnot"), named_gate("swap")
    for name, u, expected in [("cnot", cnot, 3.0), ("swap", swap, 7.0)] + [
            (f"zz({t:.4f})", zz(t), 1 + 2 * abs(math.sin(2 * t))) for t in (math.pi / 16, math.pi / 8, math.pi / 4,
                                                                             0.3, 1.0)]:
        trace_route = choi_robustness(u, SH)
        schmidt_route = schmidt_robustness(operator_schmidt(u, SH))
        extent = product_extent_schmidt(u, SH)
        checks.append((name, abs(trace_route - expected), abs(schmidt_route - expected),
                       abs(extent.value - expected), extent.certified))
    worst = max(max(c[1:4]) for c in checks)
    ok = worst <= 1e-8 and all(c[4] for c in checks)
    report(2, ok, f"xi and R_c within {worst:.1e} of closed forms on {len(checks)} gates, both routes agree")
    assert ok


# ---- 3 -------------------------------------------------------------------------------


def _random_observable(rng: np.random.Generator, n: int) -> Observable:
    if rng.random() < 0.7:
        letters = "".join(rng.choice(list("XYZ"), n))
        return Observable.pauli(letters, list(range(n)), float(rng.uniform(-1, 1)))
    bits = rng.integers(0, 2, 3)
    vec = np.zeros(8)
    vec[int("".join(map(str, bits)), 2)] = 1
    return Observable.projector(vec, sorted(rng.choice(n, 3, replace=False).tolist()))


@pytest.mark.slow
def test_criterion_03_unbiased_and_variance_cap():
    rng = np.random.default_rng(2024)
    sh = BipartiteShape(4, 4)
    layout = CutLayout((0, 1), (2, 3), 5)
    failures = []
    max_ratio = 0.0
    for inst in range(50):
        u = random_unitary(16, rng)
        psi = random_state(32, rng)
        obs = _random_observable(rng, 5)
        g = product_extent_schmidt(u, sh, seed=inst).certificate
        est = spacecut.estimate(g, sh, psi, obs, 100000, seed=inst, layout=layout, keep_values=True)
        exact = cut_target_oracle(u, (0, 1), (2, 3), psi, pauli_matrix_obs(obs, 5), 5)
        phi = magnitude(g)
        dev = abs(est.mean - exact) / est.std_error if est.std_error > 0 else 0.0
        max_ratio = max(max_ratio, dev)
        if dev > 5 or est.variance > phi**2 or np.max(np.abs(est.values)) > phi:
            failures.append(inst)
    ok = not failures
    report(3, ok, f"50 instances at 2+2(+1) qubits, worst |mean-oracle|/SE = {max_ratio:.2f} (<= 5), "
                  f"variance <= phi^2 and |value| <= phi everywhere; failures {failures}")
    assert ok


# ---- 4 -------------------------------------------------------------------------------


def _circuit_branch_mean(g, s, layout, psi, x_full):
    """Exact E[(-1)^(b1+b2) y] by simulating the setting's circuit gate by gate."""
    circ = spacecut.build_circuit(g, s, g.shape, layout)
    out = apply_circuit(StateVector(spacecut.with_ancillas(psi)), circ.gates).amplitudes
    z = np.diag([1.0, -1.0])
    sign = np.kron(x_full, np.kron(z, z))
    return float(np.real(np.vdot(out, sign @ out)))


def test_criterion_04_conditional_difference_identity():
    rng = np.random.default_rng(4)
    layout = CutLayout((0,), (1,), 3)
    worst = 0.0
    decomps = [product_extent_schmidt(zz(0.3), SH).certificate]  # m = 2
    ops = [(random_unitary(2, rng), random_unitary(2, rng)) for _ in range(3)]
    decomps.append(LocalDecomposition(np.array([0.5, 0.3, 0.2]), [a for a, _ in ops], [b for _, b in ops], SH))
    for g in decomps:
        for _ in range(3):
            psi = random_state(8, rng)
            obs = Observable.pauli("".join(rng.choice(list("XYZ"), 3)), [0, 1, 2], float(rng.uniform(-1, 1)))
            x_full = pauli_matrix_obs(obs, 3)
            for i, j in itertools.product(range(len(g)), repeat=2):
                m0 = _circuit_branch_mean(g, SettingSample(i, j, 0), layout, psi, x_full)
                m1 = _circuit_branch_mean(g, SettingSample(i, j, 1), layout, psi, x_full)
                fast = spacecut.conditional_means(g, layout, psi, obs, [i, i], [j, j], [0, 1])
                cross = claim_cross_term(g, (0,), (1,), psi, x_full, 3, i, j)
                worst = max(worst, abs((m0 - m1) - cross), abs((fast[0] - fast[1]) - cross))
    ok = worst <= 1e-9
    report(4, ok, f"m=2,3 branch enumeration, max deviation {worst:.2e} (<= 1e-9)")
    assert ok


# ---- 5 -------------------------------------------------------------------------------


def tfim(eta: float) -> hamsim.ClusteredHamiltonian:
    terms = [PauliTerm.make(0.5, {0: "Z", 1: "Z"}), PauliTerm.make(0.5, {2: "Z", 3: "Z"})]
    terms += [PauliTerm.make(0.5, {w: "X"}) for w in range(4)]
    terms.append(PauliTerm.make(eta, {1: "Z", 2: "Z"}))
    return classify(terms, ([0, 1], [2, 3]), 4)


@pytest.mark.slow
def test_criterion_05_clustered_hamiltonian_simulation():
    start = time.perf_counter()
    t, eps = 1.0, 0.05
    obs = Observable.pauli("ZZ", [1, 2])
    psi = product_state("0000").amplitudes
    lines, ok = [], True
    for eta in (0.1, 0.2, 0.4):
        ham = tfim(eta)
        u = dense_evolution(ham, t)
        exact = float(np.real(np.vdot(u @ psi, pauli_operator({1: "Z", 2: "Z"}, 4) @ u @ psi)))
        hits = 0
        plan = None
        for rep in range(20):
            est, plan = hamsim.hamsim_estimate(ham, psi, obs, t, eps, seed=1000 * rep + 7, r_strategy="dense")
            hits += abs(est.mean - exact) <= eps
        trials = math.ceil(12 * math.exp(8 * eta * t) / eps**2)
        phi_ok = plan.phi <= math.exp(4 * eta * t)
        expanded = [abs(hamsim.make_plan(ham, t, eps, r=r).phi
                        - magnitude(hamsim.expanded_decomposition(hamsim.make_plan(ham, t, eps, r=r))))
                    for r in (1, 2)]
        ok &= hits >= 18 and phi_ok and max(expanded) <= 1e-12 and est.trials == trials
        lines.append(f"eta={eta}: {hits}/20 within eps, r={plan.r}, N={trials}, phi={plan.phi:.3f} "
                     f"<= {math.exp(4 * eta * t):.3f}, closed-vs-expanded {max(expanded):.1e}")
    elapsed = time.perf_counter() - start
    ok &= elapsed <= 300
    report(5, ok, "; ".join(lines) + f"; {elapsed:.0f}s (<= 300s)")
    assert ok


# ---- 6 -------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_06_sampler_laws():
    rng = np.random.default_rng(6)
    draws = 1_000_000
    tvs, rej_err = [], []
    for coeffs in ([0.7, 0.3], [0.5, 0.3, 0.2]):
        m = len(coeffs)
        g = LocalDecomposition(np.array(coeffs), [np.eye(2)] * m, [np.eye(2)] * m, SH)
        st: dict = {}
        ii, jj, gg = spacecut.sample_settings(g, rng, draws, st)
        tvs.append(tv_distance(zip(ii.tolist(), jj.tolist(), gg.tolist()), spacecut.setting_pmf(g)))
        rej_err.append(abs(st["rejections"] / st["proposals"] - spacecut.rejection_rate(g)))
    for n_boundary in (1, 2):
        terms = [PauliTerm.make(0.4, {0: "X"}), PauliTerm.make(0.8, {0: "Z", 1: "Z"})]
        if n_boundary == 2:
            terms.append(PauliTerm.make(0.5, {0: "Y", 1: "X"}))
        plan = hamsim.make_plan(classify(terms, ([0], [1]), 2), 1.0, 0.05, r=1)
        law = plan_formula_law([(Fraction(f.c0), Fraction(f.c1)) for f in plan.factors], 1)
        x, y, gb = hamsim.sample_plan_settings(plan, rng, draws)
        samples = zip(map(tuple, x.reshape(draws, -1).tolist()), map(tuple, y.reshape(draws, -1).tolist()),
                      gb.tolist())
        tvs.append(tv_distance(samples, {k: float(v) for k, v in law.items()}))
    ok = max(tvs) <= 0.005 and max(rej_err) <= 0.005
    report(6, ok, f"TV distances {', '.join(f'{v:.4f}' for v in tvs)} (<= 0.005); "
                  f"rejection-rate error {max(rej_err):.4f} (<= 0.005)")
    assert ok


# ---- 7 -------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_07_timelike_identity():
    analytic = {d: timecut.qpd_identity_check(d) for d in (2, 4, 8)}
    mc = {}
    for n in (1, 2, 3):
        d = 2**n
        mc[d] = max(np.linalg.norm(timecut.sampled_choi("M0", n, 1_000_000, seed=n) - timecut.choi_m0(d)),
                    np.linalg.norm(timecut.sampled_choi("M1", n, 1_000_000, seed=10 + n) - timecut.choi_m1(d)))
    ok = max(analytic.values()) <= 1e-12 and max(mc.values()) <= 0.02
    report(7, ok, f"analytic residual {max(analytic.values()):.1e} (<= 1e-12); "
                  f"MC Choi errors {', '.join(f'd={d}: {v:.4f}' for d, v in mc.items())} (<= 0.02)")
    assert ok


# ---- 8 -------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_08_rank_dependent_cost():
    dims, variances = [], []
    for n in (1, 2, 3, 4):
        d = 2**n
        psi = StateVector.zero(n + 1)
        ones = np.zeros(d)
        ones[-1] = 1
        obs = Observable.projector(ones, list(range(n)))
        est = timecut.timecut_estimate(psi, list(range(n)), obs, 400000, seed=80 + n)
        dims.append(d)
        variances.append(est.variance)
    slope = float(np.polyfit(np.log(dims), np.log(variances), 1)[0])
    rng = np.random.default_rng(8)
    cap_ok = True
    worst_ratio = 0.0
    for n in (1, 2, 3):
        d = 2**n
        m = n + 1
        full_rank = [Observable.pauli("I" * m, list(range(m)))]
        h = random_unitary(2**m, rng)
        full_rank.append(Observable.hermitian(h @ np.diag(rng.uniform(0.5, 1.0, 2**m)) @ h.conj().T,
                                              list(range(m))))
        for obs in full_rank:
            psi = random_state(2**m, rng)
            est = timecut.timecut_estimate(psi, list(range(n)), obs, 100000, seed=n)
            worst_ratio = max(worst_ratio, est.variance / (2 * d - 1) ** 2)
            cap_ok &= est.variance <= (2 * d - 1) ** 2
    ok = 0.8 <= slope <= 1.2 and cap_ok
    report(8, ok, f"rank-1 variances {', '.join(f'{v:.1f}' for v in variances)} at d_A={dims}, "
                  f"fitted exponent {slope:.3f} (in [0.8, 1.2]); full-rank variance / (2d-1)^2 <= {worst_ratio:.3f}")
    assert ok


# ---- 9 -------------------------------------------------------------------------------


def test_criterion_09_separable_pair():
    rng = np.random.default_rng(9)
    bell = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)
    pair = optimal_separable_pair(bell, SH, rng)
    analytic = float(np.abs(sigma_plus_phase_average(pair.lam, pair.vecs_a, pair.vecs_b, pair.robustness)
                            - pair.sigma_plus()).max())
    errors = [np.linalg.norm(pair.sampled_mean(100000) - pair.sigma_plus())]
    qutrit = random_state(9, rng)
    pair3 = optimal_separable_pair(qutrit, BipartiteShape(3, 3), rng)
    errors.append(np.linalg.norm(pair3.sampled_mean(100000) - pair3.sigma_plus()))
    rho = np.outer(qutrit, qutrit.conj())
    decomposed = (1 + pair3.robustness) * pair3.sigma_plus() - pair3.robustness * pair3.sigma_minus
    ok = analytic <= 1e-9 and max(errors) <= 0.01 and np.allclose(decomposed, rho)
    report(9, ok, f"d=2 analytic check {analytic:.1e} (<= 1e-9); sampled sigma+ errors "
                  f"Bell {errors[0]:.4f}, 3-level {errors[1]:.4f} (<= 0.01)")
    assert ok


# ---- 10 ------------------------------------------------------------------------------


def _regroup(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    t = np.kron(u1, u2).reshape([2] * 8)
    order = [0, 2, 1, 3]
    return t.transpose(order + [4 + w for w in order]).reshape(16, 16)


@pytest.mark.slow
def test_criterion_10_property_suites():
    rng = np.random.default_rng(10)
    notes = []
    # submultiplicativity with strictness
    strict_ok = True
    for k in range(500):
        u = random_unitary(4, rng) if k % 2 else zz(rng.uniform(0.05, 0.75))
        v = random_unitary(4, rng)
        xu, xv = product_extent_schmidt(u, SH).value, product_extent_schmidt(v, SH).value
        xuv = product_extent_schmidt(_regroup(u, v), BipartiteShape(4, 4)).value
        strict_ok &= xuv < xu * xv - 1e-9
    notes.append(f"strict submultiplicativity on 500 pairs: {strict_ok}")
    # local-unitary invariance
    lu = 0.0
    for _ in range(100):
        u = random_unitary(4, rng)
        w = np.kron(random_unitary(2, rng), random_unitary(2, rng)) @ u @ np.kron(random_unitary(2, rng),
                                                                                  random_unitary(2, rng))
        lu = max(lu, abs(choi_robustness(w, SH) - choi_robustness(u, SH)))
    notes.append(f"LU invariance {lu:.1e}")
    # robustness inequality on generated cuts
    audits = []
    for u in [named_gate("cnot"), named_gate("swap"), zz(0.2)] + [random_unitary(4, rng) for _ in range(20)]:
        audits += [robustness_inequality_audit(pauli_decomposition(u, SH), u),
                   robustness_inequality_audit(product_extent_schmidt(u, SH).certificate, u)]
    audit_ok = all(a.passed for a in audits)
    notes.append(f"robustness audit {sum(a.passed for a in audits)}/{len(audits)}")
    # determinism through the CLI
    cmd = [sys.executable, "-m", "cutkit", "extent", "zz(0.3)"]
    runs = [subprocess.run(cmd, capture_output=True, check=True).stdout for _ in range(2)]
    g = pauli_decomposition(random_unitary(4, rng), SH)
    psi = random_state(8, rng)
    obs = Observable.pauli("XYZ", [0, 1, 2])
    reruns = [spacecut.estimate(g, SH, psi, obs, 20000, seed=5, layout=CutLayout((0,), (1,), 3), threads=t).mean
              for t in (1, 4)]
    det_ok = runs[0] == runs[1] and reruns[0] == reruns[1]
    notes.append(f"deterministic reruns {det_ok}")
    # norm preservation
    norm_dev = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 6))
        gates = []
        for _ in range(6):
            k = int(rng.integers(1, min(2, n) + 1))
            gates.append(GateOp(random_unitary(2**k, rng), list(rng.permutation(n)[:k])))
        out = apply_circuit(StateVector(random_state(2**n, rng)), gates)
        norm_dev = max(norm_dev, abs(out.norm() - 1))
    notes.append(f"norm deviation {norm_dev:.1e}")
    # Born rule
    psi = random_state(8, rng)
    counts = np.zeros(8)
    mrng = np.random.default_rng(0)
    for _ in range(5000):
        bits, _ = measure_computational(StateVector(psi), [0, 1, 2], mrng)
        counts[4 * bits[0] + 2 * bits[1] + bits[2]] += 1
    pval = stats.chisquare(counts, np.abs(psi) ** 2 * counts.sum()).pvalue
    notes.append(f"Born chi2 p={pval:.3f}")
    ok = strict_ok and lu <= 1e-9 and audit_ok and det_ok and norm_dev <= 1e-12 and pval > 1e-3
    report(10, ok, "; ".join(notes))
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
