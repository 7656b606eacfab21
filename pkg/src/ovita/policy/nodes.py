"""Syntax tree for the trajectory-policy language.

Nodes are frozen dataclasses compared structurally; source positions ride
along for diagnostics but never participate in equality, so a re-parsed
canonical print compares equal to the original tree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

__all__ = [
    "Node",
    "Number",
    "Str",
    "Bool",
    "ListLit",
    "Var",
    "BinOp",
    "UnaryOp",
    "Index",
    "Call",
    "Let",
    "ExprStmt",
    "For",
    "If",
    "Program",
    "to_source",
]


@dataclass(frozen=True)
class Node:
    pass


def _pos_field():
    return field(default=0, compare=False)


@dataclass(frozen=True)
class Number(Node):
    value: float
    line: int = _pos_field()
    col: int = _pos_field()

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValueError("number literals must be finite")


@dataclass(frozen=True)
class Str(Node):
    value: str
    line: int = _pos_field()
    col: int = _pos_field()


@dataclass(frozen=True)
class Bool(Node):
    value: bool
    line: int = _pos_field()
    col: int = _pos_field()


@dataclass(frozen=True)
class ListLit(Node):
    items: tuple
    line: int = _pos_field()
    col: int = _pos_field()


@dataclass(frozen=True)
class Var(Node):
    name: str
    line: int = _pos_field()
    col: int = _pos_field()


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node
    line: int = _pos_field()
    col: int = _pos_field()


@dataclass(frozen=True)
class UnaryOp(Node):
    op: str  # "-" or "not"
    operand: Node
    line: int = _pos_field()
    col: int = _pos_field()


@dataclass(frozen=True)
class Index(Node):
    obj: Node
    index: Node
    line: int = _pos_field()
    col: int = _pos_field()


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: tuple
    kwargs: tuple  # ((name, Node), ...) in source order
    line: int = _pos_field()
    col: int = _pos_field()


@dataclass(frozen=True)
class Let(Node):
    name: str
    value: Node
    line: int = _pos_field()
    col: int = _pos_field()


@dataclass(frozen=True)
class ExprStmt(Node):
    expr: Node
    line: int = _pos_field()
    col: int = _pos_field()


@dataclass(frozen=True)
class For(Node):
    var: str
    start: Node
    end: Node
    body: tuple
    line: int = _pos_field()
    col: int = _pos_field()


@dataclass(frozen=True)
class If(Node):
    cond: Node
    then: tuple
    orelse: tuple
    line: int = _pos_field()
    col: int = _pos_field()


@dataclass(frozen=True)
class Program(Node):
    statements: tuple


# precedence levels, higher binds tighter
_PREC = {
    "or": 1,
    "and": 2,
    "==": 4, "!=": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5,
    "*": 6, "/": 6, "%": 6,
}
_UNARY_PREC = {"not": 3, "-": 7}
_POSTFIX_PREC = 8
_ATOM_PREC = 9


def _fmt_number(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, UnaryOp):
        return _UNARY_PREC[node.op]
    if isinstance(node, Index):
        return _POSTFIX_PREC
    return _ATOM_PREC


def _expr(node: Node) -> str:
    if isinstance(node, Number):
        return _fmt_number(node.value)
    if isinstance(node, Str):
        body = node.value.replace("\\", "\\\\").replace('"', '\\"')
        body = body.replace("\n", "\\n").replace("\t", "\\t")
        return f'"{body}"'
    if isinstance(node, Bool):
        return "true" if node.value else "false"
    if isinstance(node, ListLit):
        return "[" + ", ".join(_expr(i) for i in node.items) + "]"
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        parts = [_expr(a) for a in node.args]
        parts += [f"{k}={_expr(v)}" for k, v in node.kwargs]
        return f"{node.name}(" + ", ".join(parts) + ")"
    if isinstance(node, Index):
        base = _expr(node.obj)
        if _prec(node.obj) < _POSTFIX_PREC:
            base = f"({base})"
        return f"{base}[{_expr(node.index)}]"
    if isinstance(node, UnaryOp):
        mine = _UNARY_PREC[node.op]
        inner = _expr(node.operand)
        if _prec(node.operand) < mine:
            inner = f"({inner})"
        sep = " " if node.op == "not" else ""
        return f"{node.op}{sep}{inner}"
    if isinstance(node, BinOp):
        mine = _PREC[node.op]
        left, right = _expr(node.left), _expr(node.right)
        # left-associative chain: parenthesize an equal-precedence right
        # child; comparisons are non-associative so both sides need parens
        left_bound = mine + 1 if mine == 4 else mine
        if _prec(node.left) < left_bound:
            left = f"({left})"
        if _prec(node.right) <= mine:
            right = f"({right})"
        return f"{left} {node.op} {right}"
    raise TypeError(f"not an expression node: {node!r}")


def _stmt(node: Node, indent: int, out: list) -> None:
    pad = "  " * indent
    if isinstance(node, Let):
        out.append(f"{pad}let {node.name} = {_expr(node.value)};")
    elif isinstance(node, ExprStmt):
        out.append(f"{pad}{_expr(node.expr)};")
    elif isinstance(node, For):
        out.append(f"{pad}for {node.var} in {_expr(node.start)}..{_expr(node.end)} {{")
        for s in node.body:
            _stmt(s, indent + 1, out)
        out.append(f"{pad}}}")
    elif isinstance(node, If):
        out.append(f"{pad}if {_expr(node.cond)} {{")
        for s in node.then:
            _stmt(s, indent + 1, out)
        if node.orelse:
            out.append(f"{pad}}} else {{")
            for s in node.orelse:
                _stmt(s, indent + 1, out)
        out.append(f"{pad}}}")
    else:
        raise TypeError(f"not a statement node: {node!r}")


def to_source(program: Program) -> str:
    """Canonical textual form: parse(to_source(p)).ast == p."""
    out: list = []
    for s in program.statements:
        _stmt(s, 0, out)
    return "\n".join(out) + ("\n" if out else "")


Expr = Union[Number, Str, Bool, ListLit, Var, BinOp, UnaryOp, Index, Call]
