"""Exception hierarchy shared by every cutkit module."""

from __future__ import annotations


class CutkitError(Exception):
    """Base class for all errors raised by cutkit."""


class ShapeError(CutkitError, ValueError):
    """Operand dimensions do not match the declared bipartition or register."""


class NumericalFailure(CutkitError, ArithmeticError):
    """An iterative numerical routine failed to converge."""


class NotUnitaryError(CutkitError, ValueError):
    """A matrix declared unitary fails the unitarity tolerance."""


class DegenerateInputError(CutkitError, ValueError):
    """Input is valid but outside the domain of the construction (e.g. Schmidt rank 1)."""


class SamplerFailure(CutkitError, RuntimeError):
    """Post-selection sampler exhausted its retry cap."""


class ConfigError(CutkitError, ValueError):
    """Malformed configuration or input file."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}".strip() if where else message)
