"""Built-in trajectory transforms and scene queries for the policy language.

Every transform is a pure function over a list of [x, y, z, v] rows; the
interpreter owns the working copy and swaps it wholesale on success, so a
failed call leaves no partial edit. The catalog entries document the exact
math; those strings are also what the language reference and the model
prompt are generated from, keeping all three in sync.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..model import Scene
from .errors import PolicyRuntimeError, RuntimeKind

__all__ = ["BuiltinInfo", "builtin_transforms", "TRANSFORMS", "QUERIES", "MATH_FUNCTIONS"]

MAX_WAYPOINTS = 100_000

Rows = list  # list of [x, y, z, v]


@dataclass(frozen=True)
class BuiltinInfo:
    name: str
    signature: str
    doc: str
    kind: str  # "transform" | "query" | "math"


def _err(kind: RuntimeKind, where: str, msg: str):
    raise PolicyRuntimeError(kind, where, msg)


def _num(value, name: str, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, float):
        _err(RuntimeKind.TYPE_MISMATCH, where, f"{name} must be a number, got {_type_name(value)}")
    return value


def _int(value, name: str, where: str) -> int:
    v = _num(value, name, where)
    if v != math.floor(v):
        _err(RuntimeKind.INVALID_ARGUMENT, where, f"{name} must be a whole number, got {v}")
    return int(v)


def _str_arg(value, name: str, where: str) -> str:
    if not isinstance(value, str):
        _err(RuntimeKind.TYPE_MISMATCH, where, f"{name} must be a string, got {_type_name(value)}")
    return value


def _vec3(value, name: str, where: str) -> list:
    if not isinstance(value, list) or len(value) != 3:
        _err(RuntimeKind.INVALID_ARGUMENT, where, f"{name} must be a list of 3 numbers")
    return [_num(v, f"{name}[{i}]", where) for i, v in enumerate(value)]


def _type_name(value) -> str:
    return {float: "number", str: "string", bool: "boolean", list: "list"}.get(
        type(value), type(value).__name__
    )


def _index(value, name: str, n: int, where: str) -> int:
    i = _int(value, name, where)
    if not (0 <= i < n):
        _err(RuntimeKind.INDEX_OUT_OF_RANGE, where, f"{name}={i} outside 0..{n - 1}")
    return i


def _find_object(scene: Scene, label: str, where: str):
    obj = scene.find(label)
    if obj is None:
        known = ", ".join(o.label for o in scene.objects) or "none"
        _err(RuntimeKind.UNKNOWN_OBJECT_LABEL, where, f"no object '{label}' (scene has: {known})")
    return obj


def _falloff_weights(rows: Rows, center, falloff: str, sigma: float, where: str) -> list:
    if falloff == "gaussian":
        if not (sigma > 0):
            _err(RuntimeKind.INVALID_ARGUMENT, where, f"sigma must be > 0, got {sigma}")
        out = []
        for r in rows:
            d_sq = sum((r[a] - center[a]) ** 2 for a in range(3))
            out.append(math.exp(-d_sq / (2.0 * sigma * sigma)))
        return out
    if falloff == "none":
        return [1.0] * len(rows)
    _err(RuntimeKind.INVALID_ARGUMENT, where, f"falloff must be 'gaussian' or 'none', got '{falloff}'")


# ---------------------------------------------------------------- transforms


def t_translate(rows: Rows, scene: Scene, where: str, axis=None, by=None, vector=None) -> Rows:
    if vector is not None:
        if axis is not None or by is not None:
            _err(RuntimeKind.INVALID_ARGUMENT, where, "give either vector or axis+by, not both")
        dx, dy, dz = _vec3(vector, "vector", where)
    else:
        if axis is None or by is None:
            _err(RuntimeKind.INVALID_ARGUMENT, where, "translate needs vector=[dx,dy,dz] or axis=..., by=...")
        axis = _str_arg(axis, "axis", where)
        amount = _num(by, "by", where)
        if axis not in ("x", "y", "z"):
            _err(RuntimeKind.INVALID_ARGUMENT, where, f"axis must be 'x', 'y' or 'z', got '{axis}'")
        dx, dy, dz = [amount if axis == a else 0.0 for a in ("x", "y", "z")]
    return [[r[0] + dx, r[1] + dy, r[2] + dz, r[3]] for r in rows]


def t_translate_range(rows: Rows, scene: Scene, where: str, i0, i1, vector) -> Rows:
    a = _index(i0, "i0", len(rows), where)
    b = _index(i1, "i1", len(rows), where)
    if a > b:
        _err(RuntimeKind.INVALID_ARGUMENT, where, f"i0={a} must not exceed i1={b}")
    dx, dy, dz = _vec3(vector, "vector", where)
    out = [list(r) for r in rows]
    for i in range(a, b + 1):
        out[i][0] += dx
        out[i][1] += dy
        out[i][2] += dz
    return out


def t_scale_speed(rows: Rows, scene: Scene, where: str, factor=None, profile=None,
                  v_start=None, v_end=None) -> Rows:
    if (factor is None) == (profile is None):
        _err(RuntimeKind.INVALID_ARGUMENT, where, "give exactly one of factor or profile")
    n = len(rows)
    out = [list(r) for r in rows]
    if factor is not None:
        f = _num(factor, "factor", where)
        for r in out:
            r[3] *= f
        return out
    profile = _str_arg(profile, "profile", where)
    mean_v = sum(r[3] for r in rows) / n
    if profile == "constant":
        for r in out:
            r[3] = mean_v
    elif profile == "linear_ramp":
        vs = rows[0][3] if v_start is None else _num(v_start, "v_start", where)
        ve = 0.0 if v_end is None else _num(v_end, "v_end", where)
        for i, r in enumerate(out):
            t = i / (n - 1)
            r[3] = vs + (ve - vs) * t
    elif profile == "trapezoidal":
        peak = 1.5 * mean_v
        for i, r in enumerate(out):
            t = i / (n - 1)
            r[3] = peak * min(1.0, 3.0 * t, 3.0 * (1.0 - t))
    else:
        _err(RuntimeKind.INVALID_ARGUMENT, where,
             f"profile must be 'constant', 'linear_ramp' or 'trapezoidal', got '{profile}'")
    return out


def _radial_move(rows: Rows, scene: Scene, where: str, label, offset, falloff, sigma,
                 retreat: bool) -> Rows:
    label = _str_arg(label, "label", where)
    off = _num(offset, "offset", where)
    if off < 0:
        _err(RuntimeKind.INVALID_ARGUMENT, where, f"offset must be >= 0, got {off}")
    falloff = _str_arg(falloff, "falloff", where)
    sigma = _num(sigma, "sigma", where)
    obj = _find_object(scene, label, where)
    center = list(obj.center)
    weights = _falloff_weights(rows, center, falloff, sigma, where)
    out = []
    for r, w in zip(rows, weights):
        d = math.sqrt(sum((r[a] - center[a]) ** 2 for a in range(3)))
        if d < 1e-12:
            out.append(list(r))  # no ray from the center; leave the point alone
            continue
        unit = [(r[a] - center[a]) / d for a in range(3)]
        target_d = d + off if retreat else off
        new = [r[a] + w * (center[a] + target_d * unit[a] - r[a]) for a in range(3)]
        out.append(new + [r[3]])
    return out


def t_approach(rows, scene, where, label, offset, falloff="gaussian", sigma=0.3):
    return _radial_move(rows, scene, where, label, offset, falloff, sigma, retreat=False)


def t_retreat(rows, scene, where, label, offset, falloff="gaussian", sigma=0.3):
    return _radial_move(rows, scene, where, label, offset, falloff, sigma, retreat=True)


def t_insert_spiral(rows: Rows, scene: Scene, where: str, center_index, radius,
                    turns=1.0, points=20.0) -> Rows:
    ci = _index(center_index, "center_index", len(rows), where)
    r_max = _num(radius, "radius", where)
    if not (r_max > 0):
        _err(RuntimeKind.INVALID_ARGUMENT, where, f"radius must be > 0, got {r_max}")
    n_turns = _num(turns, "turns", where)
    if not (n_turns > 0):
        _err(RuntimeKind.INVALID_ARGUMENT, where, f"turns must be > 0, got {n_turns}")
    k = _int(points, "points", where)
    if k < 1:
        _err(RuntimeKind.INVALID_ARGUMENT, where, f"points must be >= 1, got {k}")
    bx, by, bz, bv = rows[ci]
    spiral = []
    for j in range(k):
        r = r_max * (j + 1) / k
        theta = 2.0 * math.pi * n_turns * j / k
        spiral.append([bx + r * math.cos(theta), by + r * math.sin(theta), bz, bv])
    return [list(r) for r in rows[: ci + 1]] + spiral + [list(r) for r in rows[ci + 1 :]]


def t_insert_pause(rows: Rows, scene: Scene, where: str, index, steps) -> Rows:
    i = _index(index, "index", len(rows), where)
    k = _int(steps, "steps", where)
    if k < 1:
        _err(RuntimeKind.INVALID_ARGUMENT, where, f"steps must be >= 1, got {k}")
    px, py, pz, _ = rows[i]
    pause = [[px, py, pz, 0.0] for _ in range(k)]
    return [list(r) for r in rows[: i + 1]] + pause + [list(r) for r in rows[i + 1 :]]


def t_zigzag(rows: Rows, scene: Scene, where: str, amplitude, period) -> Rows:
    amp = _num(amplitude, "amplitude", where)
    per = _num(period, "period", where)
    if not (per > 0):
        _err(RuntimeKind.INVALID_ARGUMENT, where, f"period must be > 0, got {per}")
    n = len(rows)
    out = []
    for i, r in enumerate(rows):
        nxt = rows[min(i + 1, n - 1)]
        prv = rows[max(i - 1, 0)]
        tx, ty = nxt[0] - prv[0], nxt[1] - prv[1]
        norm = math.hypot(tx, ty)
        if norm < 1e-12:
            perp = (0.0, 1.0, 0.0)  # no horizontal tangent: fall back to +y
        else:
            perp = (-ty / norm, tx / norm, 0.0)
        s = amp * math.sin(2.0 * math.pi * i / per)
        out.append([r[0] + s * perp[0], r[1] + s * perp[1], r[2] + s * perp[2], r[3]])
    return out


def t_resample(rows: Rows, scene: Scene, where: str, n) -> Rows:
    m = _int(n, "n", where)
    if m < 2:
        _err(RuntimeKind.INVALID_ARGUMENT, where, f"n must be >= 2, got {m}")
    count = len(rows)
    # cumulative arc length over the polyline
    s = [0.0]
    for i in range(1, count):
        step = math.sqrt(sum((rows[i][a] - rows[i - 1][a]) ** 2 for a in range(3)))
        s.append(s[-1] + step)
    total = s[-1]
    if total == 0.0:
        # degenerate polyline: interpolate by index fraction instead
        out = []
        for j in range(m):
            u = j / (m - 1) * (count - 1)
            i = min(int(u), count - 2)
            t = u - i
            out.append([rows[i][a] + t * (rows[i + 1][a] - rows[i][a]) for a in range(4)])
        return out
    out = []
    seg = 0
    for j in range(m):
        target = total * j / (m - 1)
        while seg < count - 2 and s[seg + 1] < target:
            seg += 1
        span = s[seg + 1] - s[seg]
        t = 0.0 if span == 0.0 else (target - s[seg]) / span
        out.append([rows[seg][a] + t * (rows[seg + 1][a] - rows[seg][a]) for a in range(4)])
    # endpoints are preserved exactly, not through interpolation arithmetic
    out[0] = list(rows[0])
    out[-1] = list(rows[-1])
    return out


def t_set_goal(rows: Rows, scene: Scene, where: str, point, blend=0.0) -> Rows:
    goal = _vec3(point, "point", where)
    bl = _num(blend, "blend", where)
    if not (0.0 <= bl <= 1.0):
        _err(RuntimeKind.INVALID_ARGUMENT, where, f"blend must be in [0, 1], got {bl}")
    n = len(rows)
    last = rows[-1]
    shift = [goal[a] - last[a] for a in range(3)]
    out = [list(r) for r in rows]
    if bl == 0.0:
        for a in range(3):
            out[-1][a] += shift[a]
        return out
    exponent = 1.0 / bl - 1.0
    for i, r in enumerate(out):
        w = (i / (n - 1)) ** exponent
        for a in range(3):
            r[a] += w * shift[a]
    return out


def t_set_waypoint_position(rows: Rows, scene: Scene, where: str, index, point) -> Rows:
    i = _index(index, "index", len(rows), where)
    p = _vec3(point, "point", where)
    out = [list(r) for r in rows]
    out[i][0], out[i][1], out[i][2] = p
    return out


def t_set_waypoint_speed(rows: Rows, scene: Scene, where: str, index, v) -> Rows:
    i = _index(index, "index", len(rows), where)
    speed = _num(v, "v", where)
    out = [list(r) for r in rows]
    out[i][3] = speed
    return out


# ------------------------------------------------------------------- queries


def q_detect_objects(rows, scene, where):
    return [o.label for o in scene.objects]


def q_object_center(rows, scene, where, label):
    obj = _find_object(scene, _str_arg(label, "label", where), where)
    return [float(c) for c in obj.center]


def q_object_dimensions(rows, scene, where, label):
    obj = _find_object(scene, _str_arg(label, "label", where), where)
    return [float(d) for d in obj.dimensions]


def q_nearest_waypoint(rows, scene, where, label):
    obj = _find_object(scene, _str_arg(label, "label", where), where)
    best_i, best_d = 0, math.inf
    for i, r in enumerate(rows):
        d = sum((r[a] - obj.center[a]) ** 2 for a in range(3))
        if d < best_d:
            best_i, best_d = i, d
    return float(best_i)


def q_get_trajectory(rows, scene, where):
    return [list(r) for r in rows]


def q_num_waypoints(rows, scene, where):
    return float(len(rows))


def q_waypoint_position(rows, scene, where, index):
    i = _index(index, "index", len(rows), where)
    return list(rows[i][:3])


def q_waypoint_speed(rows, scene, where, index):
    i = _index(index, "index", len(rows), where)
    return float(rows[i][3])


# ---------------------------------------------------------- math and noise


def _noise(seed, where) -> float:
    # splitmix64 over a scaled seed: identical output on any IEEE-754 host
    s = int(round(_num(seed, "seed", where) * 1_000_003)) & 0xFFFFFFFFFFFFFFFF
    s = (s ^ (s >> 30)) * 0xBF58476D1CE4E5B9 & 0xFFFFFFFFFFFFFFFF
    s = (s ^ (s >> 27)) * 0x94D049BB133111EB & 0xFFFFFFFFFFFFFFFF
    s = s ^ (s >> 31)
    return (s >> 11) / float(1 << 53)


def _guard_math(fn, where: str, *args):
    try:
        result = fn(*args)
    except ValueError:
        _err(RuntimeKind.NON_FINITE, where, f"math domain error on input {args}")
    except OverflowError:
        _err(RuntimeKind.NON_FINITE, where, f"overflow on input {args}")
    if isinstance(result, float) and not math.isfinite(result):
        _err(RuntimeKind.NON_FINITE, where, f"non-finite result from input {args}")
    return result


TRANSFORMS = {
    "translate": (t_translate, BuiltinInfo(
        "translate", "translate(axis, by) | translate(vector=[dx, dy, dz])",
        "Shift every waypoint position by the vector (speed untouched): "
        "p_i' = p_i + [dx, dy, dz]. The axis form is shorthand for a vector "
        "with a single nonzero component.", "transform")),
    "translate_range": (t_translate_range, BuiltinInfo(
        "translate_range", "translate_range(i0, i1, vector)",
        "Shift waypoints i0..i1 inclusive by the vector; all other waypoints "
        "and all speeds unchanged.", "transform")),
    "scale_speed": (t_scale_speed, BuiltinInfo(
        "scale_speed", "scale_speed(factor) | scale_speed(profile, v_start?, v_end?)",
        "factor: v_i' = factor * v_i. profile='constant': v_i' = mean(v). "
        "profile='linear_ramp': v_i' = v_start + (v_end - v_start) * i/(N-1), "
        "v_start defaulting to v_0 and v_end to 0. profile='trapezoidal': "
        "v_i' = peak * min(1, 3t, 3(1-t)) with t = i/(N-1) and "
        "peak = 1.5 * mean(v) (ramp up over the first third, hold, ramp down).",
        "transform")),
    "approach": (t_approach, BuiltinInfo(
        "approach", "approach(label, offset, falloff='gaussian', sigma=0.3)",
        "Pull waypoints toward the labeled object: with d_i the distance from "
        "waypoint i to the object center c, the target point sits at distance "
        "`offset` from c along the ray to p_i, and p_i' = p_i + w_i * "
        "(target_i - p_i). falloff='gaussian': w_i = exp(-d_i^2 / (2 sigma^2)); "
        "falloff='none': w_i = 1. Waypoints at the exact center stay put.",
        "transform")),
    "retreat": (t_retreat, BuiltinInfo(
        "retreat", "retreat(label, offset, falloff='gaussian', sigma=0.3)",
        "Push waypoints away from the labeled object: target distance is "
        "d_i + offset along the outward ray, p_i' = p_i + w_i * offset * "
        "(p_i - c)/d_i, weights as in approach.", "transform")),
    "insert_spiral": (t_insert_spiral, BuiltinInfo(
        "insert_spiral", "insert_spiral(center_index, radius, turns=1, points=20)",
        "Insert `points` new waypoints after center_index tracing a flat "
        "spiral about that waypoint's position b: waypoint k (0-based) sits at "
        "b + [r_k cos(th_k), r_k sin(th_k), 0] with r_k = radius*(k+1)/points "
        "and th_k = 2 pi turns k / points; speeds copy waypoint center_index. "
        "Existing waypoints are untouched.", "transform")),
    "insert_pause": (t_insert_pause, BuiltinInfo(
        "insert_pause", "insert_pause(index, steps)",
        "Insert `steps` new waypoints after `index`, each duplicating that "
        "waypoint's position with v = 0.", "transform")),
    "zigzag": (t_zigzag, BuiltinInfo(
        "zigzag", "zigzag(amplitude, period)",
        "Offset waypoint i by amplitude * sin(2 pi i / period) along the "
        "horizontal perpendicular (-t_y, t_x, 0)/|..| of the local tangent "
        "t = p_{i+1} - p_{i-1} (one-sided at the ends, +y when the tangent "
        "has no horizontal part). amplitude=0 is the identity.", "transform")),
    "resample": (t_resample, BuiltinInfo(
        "resample", "resample(n)",
        "Re-sample the polyline to n waypoints uniformly in arc length, "
        "linearly interpolating positions and speeds; first and last "
        "waypoints are preserved exactly.", "transform")),
    "set_goal": (t_set_goal, BuiltinInfo(
        "set_goal", "set_goal(point, blend=0)",
        "Move the final waypoint to `point`. blend=0 moves only the final "
        "waypoint; blend in (0, 1] spreads the shift as p_i' = p_i + w_i * "
        "(point - p_last) with w_i = (i/(N-1))^(1/blend - 1), so blend=1 "
        "translates the whole trajectory.", "transform")),
    "set_waypoint_position": (t_set_waypoint_position, BuiltinInfo(
        "set_waypoint_position", "set_waypoint_position(index, point)",
        "Replace waypoint `index` position with `point`; speed kept.", "transform")),
    "set_waypoint_speed": (t_set_waypoint_speed, BuiltinInfo(
        "set_waypoint_speed", "set_waypoint_speed(index, v)",
        "Set waypoint `index` speed to v (negative values are clamped to 0 "
        "with a trace note).", "transform")),
}

QUERIES = {
    "detect_objects": (q_detect_objects, BuiltinInfo(
        "detect_objects", "detect_objects()",
        "Labels of all scene objects, in scene order.", "query")),
    "object_center": (q_object_center, BuiltinInfo(
        "object_center", "object_center(label)", "Center [x, y, z] of the labeled object.", "query")),
    "object_dimensions": (q_object_dimensions, BuiltinInfo(
        "object_dimensions", "object_dimensions(label)",
        "Edge lengths [dx, dy, dz] of the labeled object's box.", "query")),
    "nearest_waypoint": (q_nearest_waypoint, BuiltinInfo(
        "nearest_waypoint", "nearest_waypoint(label)",
        "Index of the waypoint closest to the labeled object's center "
        "(lowest index on ties).", "query")),
    "get_trajectory": (q_get_trajectory, BuiltinInfo(
        "get_trajectory", "get_trajectory()",
        "Current working trajectory as a list of [x, y, z, v] rows.", "query")),
    "num_waypoints": (q_num_waypoints, BuiltinInfo(
        "num_waypoints", "num_waypoints()", "Number of waypoints.", "query")),
    "waypoint_position": (q_waypoint_position, BuiltinInfo(
        "waypoint_position", "waypoint_position(index)", "[x, y, z] of the waypoint.", "query")),
    "waypoint_speed": (q_waypoint_speed, BuiltinInfo(
        "waypoint_speed", "waypoint_speed(index)", "Speed of the waypoint.", "query")),
}

MATH_FUNCTIONS = {
    "abs": lambda where, x: _guard_math(math.fabs, where, x),
    "sqrt": lambda where, x: _guard_math(math.sqrt, where, x),
    "sin": lambda where, x: _guard_math(math.sin, where, x),
    "cos": lambda where, x: _guard_math(math.cos, where, x),
    "floor": lambda where, x: _guard_math(lambda v: float(math.floor(v)), where, x),
    "ceil": lambda where, x: _guard_math(lambda v: float(math.ceil(v)), where, x),
    "round": lambda where, x: _guard_math(lambda v: float(round(v)), where, x),
    "pow": lambda where, a, b: _guard_math(math.pow, where, a, b),
    "min": lambda where, *xs: min(xs),
    "max": lambda where, *xs: max(xs),
    "length": lambda where, xs: float(len(xs)),
    "pi": lambda where: math.pi,
    "noise": lambda where, seed: _noise(seed, where),
}

_MATH_DOCS = {
    "abs": "Absolute value.", "sqrt": "Square root (negative input is an error).",
    "sin": "Sine (radians).", "cos": "Cosine (radians).",
    "floor": "Round down to a whole number.", "ceil": "Round up to a whole number.",
    "round": "Round to the nearest whole number (banker's rounding).",
    "pow": "pow(a, b) = a raised to b.", "min": "Smallest of the arguments.",
    "max": "Largest of the arguments.", "length": "Number of items in a list.",
    "pi": "The constant pi.",
    "noise": "Deterministic pseudo-random value in [0, 1) derived only from "
             "the explicit seed; the same seed always gives the same value.",
}


def builtin_transforms() -> tuple:
    """The full builtin catalog: transforms, queries, then math helpers."""
    entries = [info for _, info in TRANSFORMS.values()]
    entries += [info for _, info in QUERIES.values()]
    for name in MATH_FUNCTIONS:
        sig = f"{name}(...)" if name in ("min", "max") else None
        entries.append(BuiltinInfo(
            name,
            sig or {"pi": "pi()", "pow": "pow(a, b)", "noise": "noise(seed)",
                    "length": "length(list)"}.get(name, f"{name}(x)"),
            _MATH_DOCS[name],
            "math",
        ))
    return tuple(entries)
