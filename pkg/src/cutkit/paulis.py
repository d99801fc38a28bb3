"""Pauli matrices, Pauli-string parsing and commutation."""

from __future__ import annotations

import itertools

import numpy as np

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli_matrix(letters: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for c in letters:
        out = np.kron(out, PAULI[c])
    return out


def pauli_basis(n: int) -> tuple[list[str], np.ndarray]:
    """All n-qubit Pauli labels and a stack of their matrices, shape (4**n, 2**n, 2**n)."""
    labels = ["".join(p) for p in itertools.product("IXYZ", repeat=n)]
    if n == 0:
        return [""], np.ones((1, 1, 1), dtype=complex)
    return labels, np.stack([pauli_matrix(l) for l in labels])


def parse_pauli_string(text: str) -> tuple[float, dict[int, str]]:
    """Parse ``"[coeff] P@w P@w ..."`` into ``(coeff, {wire: letter})``.

    A leading ``-`` without a number means coefficient -1. Explicit ``I``
    letters are kept so that identity observables can name their wires.
    """
    tokens = text.replace("*", " ").split()
    coeff = 1.0
    ops: dict[int, str] = {}
    for tok in tokens:
        if "@" not in tok:
            if tok == "-":
                coeff = -coeff
                continue
            try:
                coeff *= float(tok)
            except ValueError:
                raise ValueError(f"cannot parse token {tok!r}") from None
            continue
        letter, _, wire = tok.partition("@")
        letter = letter.upper()
        if letter.startswith("-"):
            coeff = -coeff
            letter = letter[1:]
        if letter not in PAULI:
            raise ValueError(f"unknown Pauli {letter!r} in {tok!r}")
        try:
            w = int(wire)
        except ValueError:
            raise ValueError(f"bad wire index in {tok!r}") from None
        if w < 0:
            raise ValueError(f"negative wire index in {tok!r}")
        if w in ops:
            raise ValueError(f"wire {w} repeated in {text!r}")
        ops[w] = letter
    return coeff, ops


def anticommute(p: dict[int, str], q: dict[int, str]) -> bool:
    """True if the Pauli strings (as wire->letter maps) anticommute."""
    clashes = sum(1 for w, a in p.items() if a != "I" and q.get(w, "I") not in ("I", a))
    return clashes % 2 == 1
