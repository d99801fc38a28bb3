import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cutkit.errors import ShapeError
from cutkit.statesim import Observable, StateVector, channel_to_choi
from cutkit.tensor import BipartiteShape, random_state, random_unitary
from cutkit.timecut import (
    MeasureAndPrepare,
    analytic_moments,
    apply_M0,
    apply_M1,
    choi_m0,
    choi_m1,
    max_entangled,
    obs_full_matrix,
    qpd_identity_check,
    sampled_choi,
    timecut_estimate,
    variance_bound_check,
)


def hadamard(n):
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    out = np.ones((1, 1))
    for _ in range(n):
        out = np.kron(out, h)
    return out


def m0_grid_oracle(d):
    """Choi of the equatorial measure-and-prepare channel, phases averaged on a 3-point grid."""
    n = d.bit_length() - 1
    hn = hadamard(n)
    grid = np.exp(2j * np.pi * np.arange(3) / 3)

    def channel(rho):
        out = np.zeros_like(rho)
        for ph in itertools.product(grid, repeat=d):
            dg = np.diag(ph)
            meas = hn @ dg.conj() @ rho @ dg @ hn
            for x in range(d):
                v = dg @ hn[:, x]
                out += meas[x, x] * np.outer(v, v.conj())
        return out / 3**d

    return channel_to_choi(channel, d)


@pytest.mark.parametrize("d", [2, 4, 8, 16])
def test_identity_decomposition(d):
    assert qpd_identity_check(d) < 1e-12


@pytest.mark.parametrize("d", [2, 4])
def test_m0_choi_matches_phase_grid(d):
    assert np.abs(choi_m0(d) - m0_grid_oracle(d)).max() < 1e-12


def test_channel_formulas(rng):
    d = 4
    psi = random_state(d, rng)
    rho = np.outer(psi, psi.conj())
    deph = np.diag(np.diag(rho))

    def apply(choi, rho):
        # reference first: J[(k, i), (l, j)] = M(|k><l|)[i, j] / d
        j = choi.reshape(d, d, d, d)
        return d * np.einsum("kl,kilj->ij", rho, j)

    assert np.allclose(apply(choi_m0(d), rho), (rho + np.eye(d) - deph) / d)
    assert np.allclose(apply(choi_m1(d), rho), (np.eye(d) - deph) / (d - 1))
    assert np.allclose(d * apply(choi_m0(d), rho) - (d - 1) * apply(choi_m1(d), rho), rho)


@pytest.mark.parametrize("kind, ref", [("M0", choi_m0), ("M1", choi_m1)])
def test_sampled_choi_close(kind, ref):
    assert np.linalg.norm(sampled_choi(kind, 1, 100000, seed=2) - ref(2)) < 0.02


def test_max_entangled_is_pure():
    phi = max_entangled(4)
    assert np.allclose(phi @ phi, phi)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_rank_one_variance_is_linear(n):
    d = 2**n
    m = n + 1
    psi = StateVector.zero(m).amplitudes
    obs = Observable.projector(np.eye(2**n)[-1], list(range(n)))
    mean, var = analytic_moments(psi, list(range(n)), obs, m)
    assert mean == pytest.approx(0.0, abs=1e-12)
    assert var == pytest.approx(4 * d - 2, abs=1e-9)


@given(st.integers(0, 2**31 - 1), st.integers(3, 4), st.data())
def test_analytic_mean_is_exact(seed, n, data):
    rng = np.random.default_rng(seed)
    wires = data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=n - 1, unique=True))
    psi = random_state(2**n, rng)
    h = random_unitary(2**n, rng)
    herm = h @ np.diag(rng.uniform(-1, 1, 2**n)) @ h.conj().T
    obs = Observable.hermitian(herm, list(range(n)))
    mean, var = analytic_moments(psi, wires, obs, n)
    assert mean == pytest.approx(np.real(np.vdot(psi, herm @ psi)), abs=1e-10)
    est = timecut_estimate(psi, wires, obs, 10, mode="analytic")
    assert var <= est.bound + 1e-9


def test_sampled_estimator_unbiased_and_matches_analytic():
    rng = np.random.default_rng(4)
    psi = random_state(16, rng)
    obs = Observable.pauli("ZXY", [0, 2, 3], 0.8)
    wires = [1, 2]
    est = timecut_estimate(psi, wires, obs, 100000, seed=6)
    mean, var = analytic_moments(psi, wires, obs, 4)
    assert abs(est.mean - mean) <= 5 * est.std_error
    assert est.variance == pytest.approx(var, rel=0.05)
    assert est.variance <= est.bound
    assert est.one_norm == 7.0 and est.dim_a == 4


def test_values_bounded_by_one_norm():
    est = timecut_estimate(StateVector.zero(2), [0], Observable.pauli("Z", [1]), 5000, seed=1, keep_values=True)
    assert np.all(np.abs(est.values) <= 3 + 1e-12)


def test_variance_bound_values():
    x = np.eye(4)
    assert variance_bound_check(x, BipartiteShape(2, 2)) == pytest.approx(3 * 3)
    p = np.zeros((4, 4))
    p[3, 3] = 1
    assert variance_bound_check(p, BipartiteShape(2, 2)) == pytest.approx(3 * 3)
    p8 = np.zeros((8, 8))
    p8[7, 7] = 1
    # rank one: 2 |Tr_A P| + 1 = 3 < 2d - 1
    assert variance_bound_check(p8, BipartiteShape(4, 2)) == pytest.approx(7 * 3)


def test_single_state_channels(rng):
    psi = StateVector(random_state(8, rng))
    for fn in (apply_M0, apply_M1):
        out = fn(psi, [0, 2], rng)
        assert out.norm() == pytest.approx(1.0)
    mp = MeasureAndPrepare("M1", 1)
    out = mp.apply(StateVector.zero(2), [0], rng)
    assert abs(out.amplitudes[2]) == pytest.approx(1.0)  # |0> -> |1> on the cut wire


def test_bad_cut_wires():
    with pytest.raises(ShapeError):
        timecut_estimate(StateVector.zero(2), [2], Observable.pauli("Z", [0]), 10)
    with pytest.raises(ShapeError):
        timecut_estimate(StateVector.zero(2), [0, 0], Observable.pauli("Z", [0]), 10)


def test_obs_full_matrix_wire_order():
    obs = Observable.pauli("Z", [1])
    assert np.allclose(obs_full_matrix(obs, 2), np.kron(np.eye(2), np.diag([1, -1])))
