"""Bounded interpreter for parsed trajectory policies.

Execution is deterministic and hermetic: the only ambient inputs are the
working trajectory and the scene, reachable through the query builtins.
Each AST node evaluation costs one step against the budget; transforms are
atomic, so an aborted program never yields a half-transformed trajectory.
"""

from __future__ import annotations

import difflib
import math
import re
from dataclasses import dataclass

from ..model import Scene, Trajectory
from . import nodes as N
from .errors import BudgetExceeded, PolicyRuntimeError, RuntimeKind
from .transforms import MATH_FUNCTIONS, MAX_WAYPOINTS, QUERIES, TRANSFORMS

__all__ = ["PolicyResult", "execute", "DEFAULT_BUDGET"]

DEFAULT_BUDGET = 1_000_000


@dataclass(frozen=True)
class PolicyResult:
    trajectory: Trajectory
    trace: tuple  # ((step, description), ...)
    steps_used: int


def _where(node: N.Node) -> str:
    return f"line {node.line}, col {node.col}"


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return N._fmt_number(value)
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, list):
        return "[" + ", ".join(_render(v) for v in value) + "]"
    return repr(value)


_PY_NAME = re.compile(r"\b[a-z_]*[tq]_\w+\(\)")


class _Interpreter:
    def __init__(self, rows: list, scene: Scene, budget: int):
        self.rows = rows
        self.scene = scene
        self.budget = budget
        self.steps = 0
        self.trace: list = []
        self.env: dict = {}

    def tick(self) -> None:
        self.steps += 1
        if self.steps > self.budget:
            raise BudgetExceeded(self.budget)

    # ---- statements

    def run(self, program: N.Program) -> None:
        for stmt in program.statements:
            self.stmt(stmt)

    def stmt(self, node: N.Node) -> None:
        self.tick()
        if isinstance(node, N.Let):
            self.env[node.name] = self.expr(node.value)
        elif isinstance(node, N.ExprStmt):
            self.expr(node.expr)
        elif isinstance(node, N.For):
            start = self._loop_bound(node.start, "loop start")
            end = self._loop_bound(node.end, "loop end")
            for i in range(start, end):
                self.env[node.var] = float(i)
                for body_stmt in node.body:
                    self.stmt(body_stmt)
        elif isinstance(node, N.If):
            cond = self.expr(node.cond)
            if not isinstance(cond, bool):
                raise PolicyRuntimeError(
                    RuntimeKind.TYPE_MISMATCH, _where(node),
                    f"if condition must be a boolean, got {_render(cond)}",
                )
            for body_stmt in node.then if cond else node.orelse:
                self.stmt(body_stmt)
        else:
            raise TypeError(f"unexpected statement node {node!r}")

    def _loop_bound(self, node: N.Node, what: str) -> int:
        v = self.expr(node)
        if isinstance(v, bool) or not isinstance(v, float) or v != math.floor(v):
            raise PolicyRuntimeError(
                RuntimeKind.INVALID_ARGUMENT, _where(node),
                f"{what} must be a whole number, got {_render(v)}",
            )
        return int(v)

    # ---- expressions

    def expr(self, node: N.Node):
        self.tick()
        if isinstance(node, N.Number):
            return node.value
        if isinstance(node, N.Str):
            return node.value
        if isinstance(node, N.Bool):
            return node.value
        if isinstance(node, N.ListLit):
            return [self.expr(i) for i in node.items]
        if isinstance(node, N.Var):
            if node.name not in self.env:
                raise PolicyRuntimeError(
                    RuntimeKind.UNKNOWN_VARIABLE, _where(node), f"'{node.name}' is not defined"
                )
            return self.env[node.name]
        if isinstance(node, N.UnaryOp):
            return self._unary(node)
        if isinstance(node, N.BinOp):
            return self._binop(node)
        if isinstance(node, N.Index):
            return self._index(node)
        if isinstance(node, N.Call):
            return self._call(node)
        raise TypeError(f"unexpected expression node {node!r}")

    def _unary(self, node: N.UnaryOp):
        v = self.expr(node.operand)
        if node.op == "-":
            if isinstance(v, bool) or not isinstance(v, float):
                raise PolicyRuntimeError(
                    RuntimeKind.TYPE_MISMATCH, _where(node), f"cannot negate {_render(v)}"
                )
            return -v
        if isinstance(v, bool):
            return not v
        raise PolicyRuntimeError(
            RuntimeKind.TYPE_MISMATCH, _where(node), f"'not' needs a boolean, got {_render(v)}"
        )

    def _binop(self, node: N.BinOp):
        op = node.op
        if op in ("and", "or"):
            left = self.expr(node.left)
            if not isinstance(left, bool):
                raise PolicyRuntimeError(
                    RuntimeKind.TYPE_MISMATCH, _where(node), f"'{op}' needs booleans"
                )
            if op == "and" and not left:
                return False
            if op == "or" and left:
                return True
            right = self.expr(node.right)
            if not isinstance(right, bool):
                raise PolicyRuntimeError(
                    RuntimeKind.TYPE_MISMATCH, _where(node), f"'{op}' needs booleans"
                )
            return right

        left = self.expr(node.left)
        right = self.expr(node.right)
        if op in ("==", "!="):
            same_type = type(left) is type(right)
            equal = same_type and left == right
            return equal if op == "==" else not equal

        def num(v):
            if isinstance(v, bool) or not isinstance(v, float):
                raise PolicyRuntimeError(
                    RuntimeKind.TYPE_MISMATCH, _where(node),
                    f"'{op}' needs numbers, got {_render(v)}",
                )
            return v

        a, b = num(left), num(right)
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == ">":
            return a > b
        if op == ">=":
            return a >= b
        try:
            if op == "+":
                result = a + b
            elif op == "-":
                result = a - b
            elif op == "*":
                result = a * b
            elif op == "/":
                result = a / b
            elif op == "%":
                result = a % b
            else:
                raise TypeError(f"unexpected operator {op!r}")
        except ZeroDivisionError:
            raise PolicyRuntimeError(
                RuntimeKind.DIVISION_BY_ZERO, _where(node), f"{_render(a)} {op} 0"
            )
        if not math.isfinite(result):
            raise PolicyRuntimeError(
                RuntimeKind.NON_FINITE, _where(node),
                f"{_render(a)} {op} {_render(b)} is not finite",
            )
        return result

    def _index(self, node: N.Index):
        obj = self.expr(node.obj)
        idx = self.expr(node.index)
        if not isinstance(obj, list):
            raise PolicyRuntimeError(
                RuntimeKind.TYPE_MISMATCH, _where(node), f"cannot index into {_render(obj)}"
            )
        if isinstance(idx, bool) or not isinstance(idx, float) or idx != math.floor(idx):
            raise PolicyRuntimeError(
                RuntimeKind.INVALID_ARGUMENT, _where(node), f"index must be a whole number"
            )
        i = int(idx)
        if not (0 <= i < len(obj)):
            raise PolicyRuntimeError(
                RuntimeKind.INDEX_OUT_OF_RANGE, _where(node),
                f"index {i} outside 0..{len(obj) - 1}",
            )
        return obj[i]

    def _call(self, node: N.Call):
        where = _where(node)
        args = [self.expr(a) for a in node.args]
        kwargs = {}
        for key, value_node in node.kwargs:
            if key in kwargs:
                raise PolicyRuntimeError(
                    RuntimeKind.INVALID_ARGUMENT, where, f"duplicate keyword '{key}'"
                )
            kwargs[key] = self.expr(value_node)

        if node.name in TRANSFORMS:
            fn, _info = TRANSFORMS[node.name]
            new_rows = self._apply(fn, node.name, where, args, kwargs)
            self._audit(new_rows, node.name, where)
            self.rows = new_rows
            rendered = [_render(a) for a in args]
            rendered += [f"{k}={_render(v)}" for k, v in kwargs.items()]
            self.trace.append((self.steps, f"{node.name}({', '.join(rendered)})"))
            return None
        if node.name in QUERIES:
            fn, _info = QUERIES[node.name]
            return self._apply(fn, node.name, where, args, kwargs)
        if node.name in MATH_FUNCTIONS:
            fn = MATH_FUNCTIONS[node.name]
            try:
                return fn(where, *args, **kwargs)
            except PolicyRuntimeError:
                raise
            except (TypeError, ValueError) as e:
                raise PolicyRuntimeError(
                    RuntimeKind.INVALID_ARGUMENT, where, f"bad arguments for {node.name}: {e}"
                )

        hint = ""
        known = list(TRANSFORMS) + list(QUERIES) + list(MATH_FUNCTIONS)
        close = difflib.get_close_matches(node.name, known, n=1)
        if close:
            hint = f" (did you mean '{close[0]}'?)"
        raise PolicyRuntimeError(
            RuntimeKind.UNKNOWN_FUNCTION, where, f"no builtin named '{node.name}'{hint}"
        )

    def _apply(self, fn, name: str, where: str, args: list, kwargs: dict):
        try:
            return fn(self.rows, self.scene, where, *args, **kwargs)
        except PolicyRuntimeError:
            raise
        except TypeError as e:
            msg = _PY_NAME.sub(f"{name}()", str(e))
            raise PolicyRuntimeError(
                RuntimeKind.INVALID_ARGUMENT, where, f"bad arguments for {name}: {msg}"
            )

    def _audit(self, rows: list, name: str, where: str) -> None:
        if len(rows) > MAX_WAYPOINTS:
            raise PolicyRuntimeError(
                RuntimeKind.OUTPUT_TOO_LARGE, where,
                f"{name} produced {len(rows)} waypoints (limit {MAX_WAYPOINTS})",
            )
        clamped = 0
        for r in rows:
            if not all(math.isfinite(v) for v in r):
                raise PolicyRuntimeError(
                    RuntimeKind.NON_FINITE, where, f"{name} produced a non-finite waypoint"
                )
            if r[3] < 0.0:
                r[3] = 0.0
                clamped += 1
        if clamped:
            self.trace.append(
                (self.steps, f"{name}: clamped {clamped} negative speed(s) to 0")
            )


def execute(
    program, trajectory: Trajectory, scene: Scene, budget: int = DEFAULT_BUDGET
) -> PolicyResult:
    """Run a parsed policy against a trajectory within a step budget."""
    if budget <= 0:
        raise ValueError(f"budget must be positive, got {budget}")
    ast = program.ast if hasattr(program, "ast") else program
    if not isinstance(ast, N.Program):
        raise TypeError("execute expects a parsed policy program")
    rows = [[w.x, w.y, w.z, w.v] for w in trajectory.waypoints]
    interp = _Interpreter(rows, scene, budget)
    interp.run(ast)
    return PolicyResult(
        trajectory=Trajectory.from_rows(interp.rows, frame=trajectory.frame),
        trace=tuple(interp.trace),
        steps_used=interp.steps,
    )
