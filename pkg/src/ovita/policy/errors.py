"""Error taxonomy for the trajectory-policy sandbox.

Every failure mode is a structured exception: callers (the feedback loop,
the service) record these as data rather than crashing, so the classes
carry machine-readable fields, not just messages.
"""

from __future__ import annotations

import enum

__all__ = [
    "PolicyError",
    "PolicySyntaxError",
    "DisallowedConstruct",
    "RuntimeKind",
    "PolicyRuntimeError",
    "BudgetExceeded",
]


class PolicyError(Exception):
    """Base class for everything the policy layer can raise."""

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": str(self)}


class PolicySyntaxError(PolicyError):
    def __init__(self, line: int, col: int, expected: str, found: str):
        self.line = line
        self.col = col
        self.expected = expected
        self.found = found
        super().__init__(f"line {line}, col {col}: expected {expected}, found {found}")

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(line=self.line, col=self.col, expected=self.expected, found=self.found)
        return d


class DisallowedConstruct(PolicyError):
    """A reserved host-language construct appeared in the source.

    Raised, never silently stripped: the caller needs to know the program
    stepped outside the sandbox grammar.
    """

    def __init__(self, name: str, line: int = 0, col: int = 0):
        self.name = name
        self.line = line
        self.col = col
        super().__init__(
            f"line {line}, col {col}: '{name}' is not part of the sandbox language"
        )

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(name=self.name, line=self.line, col=self.col)
        return d


class RuntimeKind(enum.Enum):
    DIVISION_BY_ZERO = "division_by_zero"
    UNKNOWN_OBJECT_LABEL = "unknown_object_label"
    INDEX_OUT_OF_RANGE = "index_out_of_range"
    INVALID_ARGUMENT = "invalid_argument"
    NON_FINITE = "non_finite"
    UNKNOWN_FUNCTION = "unknown_function"
    UNKNOWN_VARIABLE = "unknown_variable"
    TYPE_MISMATCH = "type_mismatch"
    OUTPUT_TOO_LARGE = "output_too_large"


class PolicyRuntimeError(PolicyError):
    def __init__(self, kind: RuntimeKind, location: str, message: str):
        self.kind = kind
        self.location = location
        super().__init__(f"{kind.value} at {location}: {message}")

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(kind=self.kind.value, location=self.location)
        return d


class BudgetExceeded(PolicyError):
    def __init__(self, budget: int):
        self.budget = budget
        super().__init__(f"interpreter step budget of {budget} exhausted")

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["budget"] = self.budget
        return d
