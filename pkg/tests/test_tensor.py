import numpy as np
import pytest
from hypothesis import given, strategies as st

from cutkit.tensor import (
    BipartiteShape,
    kron,
    nearest_unitary,
    op_norm,
    partial_trace,
    partial_transpose,
    permutation_operator,
    random_state,
    random_unitary,
    realign,
    singular_values,
    svd,
    trace_norm,
    unitarity_defect,
)
from cutkit.errors import ShapeError


def _complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.mark.parametrize("shape", [(1, 1), (3, 3), (4, 7), (7, 4), (16, 16), (32, 9)])
def test_svd_reconstructs_and_matches_lapack(rng, shape):
    m = _complex(rng, *shape)
    u, s, vh = svd(m)
    assert np.allclose((u * s) @ vh, m, atol=1e-12)
    assert np.allclose(s, np.linalg.svd(m, compute_uv=False), atol=1e-12)
    assert np.all(np.diff(s) <= 1e-14)
    k = len(s)
    assert np.allclose(u.conj().T @ u, np.eye(k), atol=1e-12)
    assert np.allclose(vh @ vh.conj().T, np.eye(k), atol=1e-12)


def test_svd_rank_deficient(rng):
    a = _complex(rng, 6, 2) @ _complex(rng, 2, 6)
    s = singular_values(a)
    assert np.sum(s > 1e-10) == 2
    assert np.allclose(s, np.linalg.svd(a, compute_uv=False), atol=1e-11)


def test_svd_zero_matrix():
    u, s, vh = svd(np.zeros((3, 3)))
    assert np.allclose(s, 0)


@given(st.integers(0, 2**31), st.sampled_from([(2, 2), (2, 3), (3, 2), (4, 2)]))
def test_partial_transpose_is_involution(seed, dims):
    rng = np.random.default_rng(seed)
    d = dims[0] * dims[1]
    m = _complex(rng, d, d)
    once = partial_transpose(m, dims)
    assert np.allclose(partial_transpose(once, dims), m)
    # full transpose = PT on both factors
    both = partial_transpose(partial_transpose(m, dims, system=1), dims, system=0)
    assert np.allclose(both, m.T)


def test_partial_transpose_explicit_entries():
    m = np.arange(16, dtype=complex).reshape(4, 4)
    pt = partial_transpose(m, (2, 2), system=1)
    # entry <a b| M^T_B |a' b'> = <a b'| M |a' b>
    for a, b, ap, bp in np.ndindex(2, 2, 2, 2):
        assert pt[2 * a + b, 2 * ap + bp] == m[2 * a + bp, 2 * ap + b]


def test_partial_trace_of_product(rng):
    a = _complex(rng, 2, 2)
    b = _complex(rng, 3, 3)
    sh = BipartiteShape(2, 3)
    assert np.allclose(partial_trace(np.kron(a, b), sh, "A"), a * np.trace(b))
    assert np.allclose(partial_trace(np.kron(a, b), sh, "B"), b * np.trace(a))


def test_permutation_operator_swaps_factors(rng):
    a, b = _complex(rng, 2), _complex(rng, 3)
    f = permutation_operator((1, 0), (2, 3))
    assert np.allclose(f @ np.kron(a, b), np.kron(b, a))


def test_realign_of_product_is_rank_one(rng):
    a, b = _complex(rng, 2, 2), _complex(rng, 3, 3)
    r = realign(np.kron(a, b), BipartiteShape(2, 3))
    assert np.allclose(r, np.outer(a.reshape(-1), b.reshape(-1)))


def test_norms(rng):
    m = _complex(rng, 5, 5)
    s = np.linalg.svd(m, compute_uv=False)
    assert trace_norm(m) == pytest.approx(s.sum(), rel=1e-12)
    assert op_norm(m) == pytest.approx(s[0], rel=1e-12)


def test_nearest_unitary_and_random_unitary(rng):
    u = random_unitary(8, rng)
    assert unitarity_defect(u) < 1e-12
    noisy = u + 1e-3 * _complex(rng, 8, 8)
    w = nearest_unitary(noisy)
    assert unitarity_defect(w) < 1e-12
    assert np.linalg.norm(w - u) < 1e-2
    psi = random_state(8, rng)
    assert np.linalg.norm(psi) == pytest.approx(1.0)


def test_kron_order_and_shape_checks(rng):
    a, b = _complex(rng, 2, 2), _complex(rng, 2, 2)
    assert np.allclose(kron(a, b), np.kron(a, b))
    with pytest.raises(ShapeError):
        BipartiteShape(2, 2).check_square(np.eye(3), "u")
