"""Sandboxed trajectory-policy language: parse, inspect, execute.

A policy is a short program in a purpose-built DSL (let-bindings,
arithmetic, bounded loops, conditionals, and a catalog of trajectory
transforms). parse() yields the syntax tree plus the extracted top-level
parameters; execute() runs it against a trajectory and scene under a step
budget. Nothing in the language can reach files, network, or clocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import nodes
from .errors import (
    BudgetExceeded,
    DisallowedConstruct,
    PolicyError,
    PolicyRuntimeError,
    PolicySyntaxError,
    RuntimeKind,
)
from .interpreter import DEFAULT_BUDGET, PolicyResult, execute
from .nodes import Program, to_source
from .parser import parse_source
from .transforms import MAX_WAYPOINTS, BuiltinInfo, builtin_transforms

__all__ = [
    "PolicyProgram",
    "PolicyResult",
    "parse",
    "execute",
    "to_source",
    "builtin_transforms",
    "BuiltinInfo",
    "PolicyError",
    "PolicySyntaxError",
    "DisallowedConstruct",
    "PolicyRuntimeError",
    "RuntimeKind",
    "BudgetExceeded",
    "DEFAULT_BUDGET",
    "MAX_WAYPOINTS",
    "nodes",
]


@dataclass(frozen=True)
class PolicyProgram:
    """A parsed policy: original text, syntax tree, extracted parameters.

    params maps every top-level `let` with a literal right-hand side to its
    value, later bindings overriding earlier ones. canonical_source is the
    normalized text form; re-parsing it reproduces an equal tree.
    """

    source: str
    ast: Program
    params: dict = field(default_factory=dict)

    @property
    def canonical_source(self) -> str:
        return to_source(self.ast)


def parse(source: str) -> PolicyProgram:
    """Parse policy text, raising structured errors for anything invalid."""
    if not isinstance(source, str):
        raise TypeError(f"policy source must be a string, got {type(source).__name__}")
    ast = parse_source(source)
    params: dict = {}
    for stmt in ast.statements:
        if isinstance(stmt, nodes.Let) and isinstance(
            stmt.value, (nodes.Number, nodes.Str, nodes.Bool)
        ):
            params[stmt.name] = stmt.value.value
    return PolicyProgram(source=source, ast=ast, params=params)
