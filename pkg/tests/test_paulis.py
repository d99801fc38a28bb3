import numpy as np
import pytest
from hypothesis import given, strategies as st

from cutkit.paulis import PAULI, anticommute, parse_pauli_string, pauli_basis, pauli_matrix


def test_parse_pauli_string():
    assert parse_pauli_string("0.5 Z@0 X@3") == (0.5, {0: "Z", 3: "X"})
    assert parse_pauli_string("Y@2") == (1.0, {2: "Y"})
    assert parse_pauli_string("-0.25 X@1") == (-0.25, {1: "X"})
    assert parse_pauli_string("I@2") == (1.0, {2: "I"})


@pytest.mark.parametrize("bad", ["0.5 Q@0", "Z@0 X@0", "Z@-1", "0.5 Z0"])
def test_parse_rejects(bad):
    with pytest.raises(ValueError):
        parse_pauli_string(bad)


def test_pauli_basis_is_trace_orthogonal():
    labels, stack = pauli_basis(2)
    assert len(labels) == 16
    gram = np.einsum("aij,bij->ab", stack.conj(), stack)
    assert np.allclose(gram, 4 * np.eye(16))


letters = st.sampled_from("IXYZ")


@given(st.dictionaries(st.integers(0, 3), letters, max_size=4),
       st.dictionaries(st.integers(0, 3), letters, max_size=4))
def test_anticommute_matches_matrices(p, q):
    def full(ops):
        return pauli_matrix("".join(ops.get(w, "I") for w in range(4)))
    a, b = full(p), full(q)
    anti = np.allclose(a @ b, -b @ a)
    assert anticommute(p, q) == anti


def test_single_qubit_algebra():
    x, y, z = PAULI["X"], PAULI["Y"], PAULI["Z"]
    assert np.allclose(x @ y, 1j * z)
