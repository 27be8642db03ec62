"""Diagnostics shared by the IR parser, the solver, and the geometry checks."""

import json
from collections.abc import Iterable
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any


class DiagnosticCode(StrEnum):
    """Kinds of problems reported back to the author of an assembly."""

    PARSE_ERROR = "ParseError"
    UNRESOLVED_REFERENCE = "UnresolvedReference"
    DUPLICATE_NAME = "DuplicateName"
    FLOATING_COMPONENT = "FloatingComponent"
    INVALID_JOINT = "InvalidJoint"
    INCONSISTENT_CONSTRAINTS = "InconsistentConstraints"
    CONVERGENCE_FAILURE = "ConvergenceFailure"
    REDUNDANT_CONSTRAINTS = "RedundantConstraints"
    INTERSECTION = "Intersection"
    LIMIT_VIOLATION = "LimitViolation"
    STYLE_CAPACITY = "StyleCapacity"


class Severity(StrEnum):
    """How bad a diagnostic is."""

    ERROR = "Error"
    WARNING = "Warning"


@dataclass(frozen=True)
class Diagnostic:
    """A single agent-readable finding about an assembly."""

    code: DiagnosticCode
    severity: Severity
    message: str
    subjects: tuple[str, ...] = ()
    data: dict[str, Any] = field(default_factory=dict)

    @property
    def is_error(self) -> bool:
        """Whether this diagnostic blocks acceptance."""
        return self.severity is Severity.ERROR

    def to_dict(self) -> dict[str, Any]:
        """Plain-JSON form with a fixed key order."""
        return {
            "code": str(self.code),
            "severity": str(self.severity),
            "message": self.message,
            "subjects": list(self.subjects),
            "data": _jsonable(self.data),
        }

    def to_json_line(self) -> str:
        """Serialize as one compact JSON line."""
        return json.dumps(self.to_dict(), separators=(",", ":"))


class AssemblyError(ValueError):
    """Raised when an operation is called with arguments it cannot honor."""

    def __init__(self, diagnostic: Diagnostic) -> None:
        """Wrap a diagnostic so callers can surface it unchanged."""
        super().__init__(diagnostic.message)
        self.diagnostic = diagnostic


def error(
    code: DiagnosticCode,
    message: str,
    subjects: Iterable[str] = (),
    **data: Any,
) -> Diagnostic:
    """Build an Error-severity diagnostic."""
    return Diagnostic(code, Severity.ERROR, message, tuple(subjects), dict(data))


def warning(
    code: DiagnosticCode,
    message: str,
    subjects: Iterable[str] = (),
    **data: Any,
) -> Diagnostic:
    """Build a Warning-severity diagnostic."""
    return Diagnostic(code, Severity.WARNING, message, tuple(subjects), dict(data))


def has_errors(diagnostics: Iterable[Diagnostic]) -> bool:
    """Check whether any diagnostic is an Error."""
    return any(d.is_error for d in diagnostics)


def to_json_lines(diagnostics: Iterable[Diagnostic]) -> str:
    """Render diagnostics as a JSON-lines stream (empty string for none)."""
    return "".join(d.to_json_line() + "\n" for d in diagnostics)


def round_number(value: float, digits: int = 9) -> float | int:
    """Round for stable text output; integral values become ints, -0.0 becomes 0."""
    rounded = round(float(value), digits)
    if rounded == 0:
        return 0
    if rounded.is_integer() and abs(rounded) < 1e15:  # noqa: PLR2004
        return int(rounded)
    return rounded


def _jsonable(value: Any) -> Any:
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        return round_number(value)
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    # numpy scalars and arrays
    if hasattr(value, "tolist"):
        return _jsonable(value.tolist())
    return str(value)
