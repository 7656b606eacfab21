"""Domain types shared across the package.

A trajectory is an ordered sequence of waypoints, each carrying a 3-D
position in meters and a scalar speed in m/s. Scenes hold labeled cuboid
objects. Robot profiles describe the workspace geometry and kinematic
limits used when projecting a trajectory onto its safe set.

All types here are immutable value objects and may be freely shared
between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "ModelError",
    "Waypoint",
    "Trajectory",
    "SceneObject",
    "Scene",
    "WorkspaceSpec",
    "CuboidWorkspace",
    "SphereWorkspace",
    "UnboundedWorkspace",
    "RobotProfile",
    "flatten",
    "unflatten",
    "bounding_sphere",
]


class ModelError(ValueError):
    """Raised when a domain invariant is violated."""


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ModelError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class Waypoint:
    """One trajectory sample: position (x, y, z) in meters plus speed in m/s."""

    x: float
    y: float
    z: float
    v: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "z", "v"):
            object.__setattr__(self, name, _require_finite(name, getattr(self, name)))
        if self.v < 0:
            raise ModelError(f"speed must be non-negative, got {self.v}")

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.z, self.v)


@dataclass(frozen=True)
class Trajectory:
    """Ordered sequence of at least two waypoints in a named coordinate frame."""

    waypoints: tuple[Waypoint, ...]
    frame: str = "world"

    def __post_init__(self) -> None:
        object.__setattr__(self, "waypoints", tuple(self.waypoints))
        if len(self.waypoints) < 2:
            raise ModelError(
                f"trajectory needs at least 2 waypoints, got {len(self.waypoints)}"
            )

    def __len__(self) -> int:
        return len(self.waypoints)

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence[float]], frame: str = "world") -> "Trajectory":
        """Build from an iterable of (x, y, z, v) rows."""
        wps = []
        for row in rows:
            vals = list(row)
            if len(vals) != 4:
                raise ModelError(f"waypoint row needs 4 values, got {len(vals)}")
            wps.append(Waypoint(*vals))
        return cls(waypoints=tuple(wps), frame=frame)

    def positions(self) -> np.ndarray:
        """N x 3 array of waypoint positions."""
        return np.array([[w.x, w.y, w.z] for w in self.waypoints])

    def speeds(self) -> np.ndarray:
        return np.array([w.v for w in self.waypoints])

    def to_dict(self) -> dict[str, Any]:
        return {
            "frame": self.frame,
            "waypoints": [list(w.as_tuple()) for w in self.waypoints],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Trajectory":
        return cls.from_rows(data["waypoints"], frame=data.get("frame", "world"))


@dataclass(frozen=True)
class SceneObject:
    """A labeled cuboid: center and strictly positive edge lengths, in meters."""

    label: str
    center: tuple[float, float, float]
    dimensions: tuple[float, float, float]
    properties: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        center = tuple(_require_finite("center", c) for c in self.center)
        dims = tuple(_require_finite("dimensions", d) for d in self.dimensions)
        if len(center) != 3 or len(dims) != 3:
            raise ModelError("center and dimensions must be 3-vectors")
        if any(d <= 0 for d in dims):
            raise ModelError(f"dimensions must be strictly positive, got {dims}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "dimensions", dims)
        object.__setattr__(self, "properties", dict(self.properties))

    @property
    def center_array(self) -> np.ndarray:
        return np.array(self.center)

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "center": list(self.center),
            "dimensions": list(self.dimensions),
            "properties": dict(self.properties),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SceneObject":
        return cls(
            label=data["label"],
            center=tuple(data["center"]),
            dimensions=tuple(data["dimensions"]),
            properties=data.get("properties") or {},
        )


@dataclass(frozen=True)
class Scene:
    """Collection of uniquely labeled objects plus an optional text description."""

    objects: tuple[SceneObject, ...] = ()
    description: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        labels = [o.label for o in self.objects]
        if len(set(labels)) != len(labels):
            dupes = sorted({l for l in labels if labels.count(l) > 1})
            raise ModelError(f"object labels must be unique, duplicated: {dupes}")

    def find(self, label: str) -> SceneObject | None:
        for obj in self.objects:
            if obj.label == label:
                return obj
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "description": self.description,
            "objects": [o.to_dict() for o in self.objects],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Scene":
        return cls(
            objects=tuple(SceneObject.from_dict(o) for o in data.get("objects", [])),
            description=data.get("description"),
        )


@dataclass(frozen=True)
class CuboidWorkspace:
    """Axis-aligned box the trajectory must stay inside."""

    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]

    def __post_init__(self) -> None:
        lo = tuple(_require_finite("min_corner", c) for c in self.min_corner)
        hi = tuple(_require_finite("max_corner", c) for c in self.max_corner)
        if len(lo) != 3 or len(hi) != 3:
            raise ModelError("workspace corners must be 3-vectors")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ModelError(f"workspace min must be < max component-wise: {lo} vs {hi}")
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)

    def to_dict(self) -> dict[str, Any]:
        return {"type": "cuboid", "min": list(self.min_corner), "max": list(self.max_corner)}


@dataclass(frozen=True)
class SphereWorkspace:
    """Spherical shell workspace: r_min <= distance-to-center <= r_max."""

    center: tuple[float, float, float]
    r_min: float
    r_max: float

    def __post_init__(self) -> None:
        center = tuple(_require_finite("center", c) for c in self.center)
        if len(center) != 3:
            raise ModelError("sphere center must be a 3-vector")
        r_min = _require_finite("r_min", self.r_min)
        r_max = _require_finite("r_max", self.r_max)
        if r_min < 0 or r_min >= r_max:
            raise ModelError(f"need 0 <= r_min < r_max, got r_min={r_min}, r_max={r_max}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "r_min", r_min)
        object.__setattr__(self, "r_max", r_max)

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "sphere",
            "center": list(self.center),
            "r_min": self.r_min,
            "r_max": self.r_max,
        }


@dataclass(frozen=True)
class UnboundedWorkspace:
    """No workspace bounds."""

    def to_dict(self) -> dict[str, Any]:
        return {"type": "unbounded"}


WorkspaceSpec = CuboidWorkspace | SphereWorkspace | UnboundedWorkspace


def workspace_from_dict(data: Mapping[str, Any]) -> WorkspaceSpec:
    kind = data.get("type")
    if kind == "cuboid":
        return CuboidWorkspace(min_corner=tuple(data["min"]), max_corner=tuple(data["max"]))
    if kind == "sphere":
        return SphereWorkspace(
            center=tuple(data["center"]), r_min=data["r_min"], r_max=data["r_max"]
        )
    if kind == "unbounded":
        return UnboundedWorkspace()
    raise ModelError(f"unknown workspace type: {kind!r}")


@dataclass(frozen=True)
class RobotProfile:
    """Workspace geometry plus the kinematic limits enforced on a trajectory.

    delta is the safety margin in meters: it tightens workspace bounds and
    inflates obstacle clearances. fix_start / fix_goal pin the respective
    endpoint waypoints (all four channels) to the reference. enforce_csm
    controls whether sessions run constraint enforcement after each policy
    execution.
    """

    workspace: WorkspaceSpec
    v_max: float
    delta: float = 0.05
    fix_start: bool = False
    fix_goal: bool = False
    enforce_csm: bool = True

    def __post_init__(self) -> None:
        v_max = _require_finite("v_max", self.v_max)
        delta = _require_finite("delta", self.delta)
        if v_max <= 0:
            raise ModelError(f"v_max must be > 0, got {v_max}")
        if delta < 0:
            raise ModelError(f"delta must be >= 0, got {delta}")
        object.__setattr__(self, "v_max", v_max)
        object.__setattr__(self, "delta", delta)

    def to_dict(self) -> dict[str, Any]:
        return {
            "workspace": self.workspace.to_dict(),
            "v_max": self.v_max,
            "delta": self.delta,
            "fix_start": self.fix_start,
            "fix_goal": self.fix_goal,
            "enforce_csm": self.enforce_csm,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RobotProfile":
        return cls(
            workspace=workspace_from_dict(data["workspace"]),
            v_max=data["v_max"],
            delta=data.get("delta", 0.05),
            fix_start=data.get("fix_start", False),
            fix_goal=data.get("fix_goal", False),
            enforce_csm=data.get("enforce_csm", True),
        )


def flatten(trajectory: Trajectory) -> np.ndarray:
    """Stack a trajectory into a single vector of length 4N.

    Entries 4i..4i+3 hold waypoint i as (x, y, z, v).
    """
    out = np.empty(4 * len(trajectory))
    for i, wp in enumerate(trajectory.waypoints):
        out[4 * i : 4 * i + 4] = wp.as_tuple()
    return out


def unflatten(x: np.ndarray, frame: str = "world") -> Trajectory:
    """Inverse of :func:`flatten`: rebuild a trajectory from a stacked vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size % 4 != 0:
        raise ModelError(f"stacked vector length must be a multiple of 4, got shape {x.shape}")
    n = x.size // 4
    if n < 2:
        raise ModelError(f"stacked vector must hold at least 2 waypoints, got {n}")
    rows = x.reshape(n, 4)
    return Trajectory.from_rows(rows, frame=frame)


def bounding_sphere(obj: SceneObject) -> tuple[np.ndarray, float]:
    """Circumscribing sphere of a cuboid object: (center, half-diagonal radius).

    The circumsphere is conservative: every point of the cuboid lies inside.
    """
    radius = float(np.linalg.norm(obj.dimensions)) / 2.0
    return obj.center_array, radius
