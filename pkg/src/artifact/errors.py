"""Error types raised across the pipeline."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    end_line: int = 0
    end_col: int = 0

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


class LiftError(Exception):
    """Base class; every pipeline failure derives from it."""

    def __init__(self, message: str, span: Optional[Span] = None, filename: str = ""):
        self.message = message
        self.span = span
        self.filename = filename
        super().__init__(self.render())

    def render(self) -> str:
        prefix = ""
        if self.filename or self.span:
            loc = str(self.span) if self.span else "0:0"
            prefix = f"{self.filename or '<input>'}:{loc}: "
        return f"{prefix}{type(self).__name__}: {self.message}"

    def with_file(self, filename: str) -> "LiftError":
        self.filename = filename
        self.args = (self.render(),)
        return self


# frontend
class KernelSyntaxError(LiftError):
    def __init__(self, message: str, span: Optional[Span] = None, filename: str = "", expected: str = ""):
        self.expected = expected
        super().__init__(message, span, filename)


class UndeclaredIdentifier(LiftError):
    pass


class UnsupportedConstruct(LiftError):
    pass


class NonAffineSubscript(UnsupportedConstruct):
    pass


# ir
class IrregularLoop(LiftError):
    def __init__(self, message: str, level: int = 0, span: Optional[Span] = None, filename: str = ""):
        self.level = level
        super().__init__(message, span, filename)


class OutOfBounds(LiftError):
    def __init__(self, message: str, index=None, extent=None):
        self.index = index
        self.extent = extent
        super().__init__(message)


class MissingInput(LiftError):
    pass


# summary
class RuleMismatch(LiftError):
    pass


class MissingPostcondition(LiftError):
    pass


class DivisionByZeroConstant(LiftError):
    pass


# lifting
class SweepCapExceeded(LiftError):
    def __init__(self, message: str, scc_id: int = -1, cap: int = 0, last=()):
        self.scc_id = scc_id
        self.cap = cap
        self.last = tuple(last)
        super().__init__(message)


class NoStartVertex(LiftError):
    pass


class NonAffineBinding(LiftError):
    pass


class InconsistentOverlap(LiftError):
    pass


class PatternMismatch(LiftError):
    pass


# checker
class DomainTooLarge(LiftError):
    pass


class ShapeMismatch(LiftError):
    pass


class UnboundFreeVariable(LiftError):
    pass


# codegen
class UnrepresentableBranch(LiftError):
    pass
