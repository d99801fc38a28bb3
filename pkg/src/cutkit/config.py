"""Flat ``key = value`` experiment files and the small spec languages they use.

Unitary specs
    ``cnot``, ``cz``, ``swap``, ``zz(theta)``, an optional ``^k`` suffix for the
    transversal k-fold copy (A gets the k control halves), or a gate list
    ``circuit: h 0; cnot 0 1; rz(0.3) 1`` acting on ``qubits`` wires.
State specs
    product labels over ``01+-rl`` (``0+1``), ``basis:0101``, ``random:<seed>``,
    ``ghz``.
Observable specs
    Pauli strings ``0.5 X@0 Z@2`` or ``projector:<bits>[@w,w,...]``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .statesim import GateOp, Observable, StateVector, circuit_unitary, product_state
from .tensor import BipartiteShape, random_state

_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_FIXED_1Q = {
    "h": _H,
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.diag([1, -1]).astype(complex),
    "s": np.diag([1, 1j]),
    "t": np.diag([1, np.exp(1j * np.pi / 4)]),
}
_FIXED_2Q = {
    "cnot": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    "cz": np.diag([1, 1, 1, -1]).astype(complex),
    "swap": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
}
_FIXED_2Q["cx"] = _FIXED_2Q["cnot"]
_PARAM = re.compile(r"^([a-z]+)\(([^()]*)\)$")
_PI_ANGLE = re.compile(r"^(-?)(?:([0-9.]+)\*)?pi(?:/([0-9.]+))?$")


def _angle(text: str) -> float:
    """A float, or ``[-][k*]pi[/m]``."""
    t = text.strip().replace(" ", "")
    m = _PI_ANGLE.match(t)
    if m:
        val = float(m.group(2) or 1) * math.pi / float(m.group(3) or 1)
        return -val if m.group(1) else val
    return float(t)


def _param_gate(name: str, theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    if name == "zz":
        return np.diag(np.exp(-1j * theta * np.array([1, -1, -1, 1])))
    if name == "rz":
        return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])
    if name == "rx":
        return np.array([[math.cos(theta / 2), -1j * math.sin(theta / 2)],
                         [-1j * math.sin(theta / 2), math.cos(theta / 2)]])
    if name == "ry":
        return np.array([[math.cos(theta / 2), -math.sin(theta / 2)],
                         [math.sin(theta / 2), math.cos(theta / 2)]], dtype=complex)
    if name == "xx":
        return c * np.eye(4) - 1j * s * np.kron(_FIXED_1Q["x"], _FIXED_1Q["x"])
    raise ValueError(f"unknown gate {name!r}")


def gate_matrix(token: str) -> np.ndarray:
    """Matrix of a single named gate such as ``cnot`` or ``zz(pi/8)``."""
    tok = token.strip().lower()
    if tok in _FIXED_1Q:
        return _FIXED_1Q[tok]
    if tok in _FIXED_2Q:
        return _FIXED_2Q[tok]
    m = _PARAM.match(tok)
    if not m:
        raise ValueError(f"unknown gate {token!r}")
    return _param_gate(m.group(1), _angle(m.group(2)))


def named_gate(spec: str) -> np.ndarray:
    return gate_matrix(spec)


def parse_gate_list(text: str, n: int) -> list[GateOp]:
    """``h 0; cnot 0 1; zz(0.2) 1 2`` into gate operations on ``n`` wires."""
    gates = []
    for item in re.split(r"[;\n]", text):
        parts = item.split()
        if not parts:
            continue
        mat = gate_matrix(parts[0])
        wires = [int(w) for w in parts[1:]]
        if 2 ** len(wires) != mat.shape[0]:
            raise ValueError(f"gate {parts[0]!r} needs {mat.shape[0].bit_length() - 1} wires")
        if any(w < 0 or w >= n for w in wires):
            raise ValueError(f"wire out of range in {item.strip()!r}")
        gates.append(GateOp(mat, wires, name=parts[0].upper()))
    return gates


@dataclass
class UnitarySpec:
    matrix: np.ndarray
    shape: BipartiteShape
    label: str


def parse_unitary(spec: str, n_a: int | None = None) -> UnitarySpec:
    """Resolve a unitary spec to a matrix on ``(A wires | B wires)``.

    For gate lists the first ``n_a`` wires (default half) form side A.
    """
    text = spec.strip()
    if text.lower().startswith("circuit:"):
        body = text.split(":", 1)[1]
        wires = [int(w) for item in re.split(r"[;\n]", body) for w in item.split()[1:]]
        n = max(max(wires, default=0) + 1, 2)
        na = n // 2 if n_a is None else n_a
        if not 0 < na < n:
            raise ValueError("partition must leave both sides non-empty")
        return UnitarySpec(circuit_unitary(parse_gate_list(body, n), n), BipartiteShape(2**na, 2 ** (n - na)), text)
    base, _, power = text.partition("^")
    mat = gate_matrix(base)
    if mat.shape[0] != 4:
        raise ValueError(f"{base!r} is not a two-qubit gate")
    k = int(power) if power else 1
    if k < 1:
        raise ValueError("transversal power must be positive")
    # copy j acts on wires (j, k + j): A holds the first halves
    gates = [GateOp(mat, [j, k + j]) for j in range(k)]
    return UnitarySpec(circuit_unitary(gates, 2 * k), BipartiteShape(2**k, 2**k), text)


def parse_state(spec: str, n: int) -> StateVector:
    text = spec.strip()
    low = text.lower()
    if low.startswith("basis:"):
        bits = text.split(":", 1)[1].strip()
        if len(bits) != n or set(bits) - {"0", "1"}:
            raise ValueError(f"basis label must be {n} bits")
        return StateVector.basis(bits)
    if low.startswith("random:"):
        seed = int(text.split(":", 1)[1])
        return StateVector(random_state(2**n, np.random.default_rng(seed)))
    if low == "ghz":
        v = np.zeros(2**n, dtype=complex)
        v[0] = v[-1] = 1 / math.sqrt(2)
        return StateVector(v)
    if len(text) != n:
        raise ValueError(f"product label must have {n} characters")
    return product_state(text)


def parse_observable(spec: str, n: int) -> Observable:
    text = spec.strip()
    if text.lower().startswith("projector:"):
        body = text.split(":", 1)[1].strip()
        bits, _, wires_txt = body.partition("@")
        bits = bits.strip()
        wires = [int(w) for w in wires_txt.split(",")] if wires_txt else list(range(len(bits)))
        if set(bits) - {"0", "1"} or len(bits) != len(wires):
            raise ValueError("projector needs one bit per wire")
        vec = np.zeros(2 ** len(bits), dtype=complex)
        vec[int(bits, 2)] = 1
        obs = Observable.projector(vec, wires)
    else:
        obs = Observable.from_label(text)
    if max(obs.wires) >= n or min(obs.wires) < 0:
        raise ValueError(f"observable wires exceed the {n}-qubit register")
    return obs


def parse_wires(text: str) -> list[int]:
    return [int(w) for w in text.replace(",", " ").split()]


@dataclass
class ExperimentConfig:
    kind: str
    values: dict[str, str] = field(default_factory=dict)
    lines: dict[str, int] = field(default_factory=dict)
    source: str | None = None

    def get(self, key: str, default: str | None = None) -> str | None:
        return self.values.get(key, default)

    def require(self, key: str) -> str:
        if key not in self.values:
            raise ConfigError(f"missing key {key!r}", None, self.source)
        return self.values[key]

    def convert(self, key: str, fn, default=None):
        """Apply ``fn`` to the raw value, mapping failures to a located ConfigError."""
        if key not in self.values:
            return default
        try:
            return fn(self.values[key])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{key}: {exc}", self.lines.get(key), self.source) from None


KINDS = ("spacecut", "timecut", "hamsim")


def parse_config(text: str, source: str | None = None) -> ExperimentConfig:
    values: dict[str, str] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip().lower()
        if not sep or not key or not re.fullmatch(r"[a-z_][a-z0-9_]*", key):
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, source)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno, source)
        values[key] = val.strip()
        lines[key] = lineno
    kind = values.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"'kind' must be one of {', '.join(KINDS)}", lines.get("kind"), source)
    return ExperimentConfig(kind, values, lines, source)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(exc), None, str(path)) from None
    return parse_config(text, str(path))


def looks_like_hamiltonian(text: str) -> bool:
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            return "=" not in line
    return False
