"""Input validation helpers.

check_* functions accept either a domain object or its plain-JSON form
(dict / nested lists) and return the validated domain object, raising
SchemaViolation with a field path on malformed input. They are the single
entry point every external surface (CLI, HTTP service, estimators) funnels
untrusted data through.
"""

from __future__ import annotations

from typing import Any, Mapping

from .model import (
    ModelError,
    RobotProfile,
    Scene,
    SceneObject,
    Trajectory,
)

__all__ = [
    "SchemaViolation",
    "check_trajectory",
    "check_scene",
    "check_profile",
]


class SchemaViolation(ValueError):
    """Malformed input, with the path of the offending field."""

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


def _expect_mapping(value: Any, path: str) -> Mapping[str, Any]:
    if not isinstance(value, Mapping):
        raise SchemaViolation(path, f"expected an object, got {type(value).__name__}")
    return value


def check_trajectory(value: Any, path: str = "trajectory") -> Trajectory:
    if isinstance(value, Trajectory):
        return value
    data = _expect_mapping(value, path)
    waypoints = data.get("waypoints")
    if not isinstance(waypoints, (list, tuple)):
        raise SchemaViolation(f"{path}.waypoints", "expected a list of waypoints")
    if len(waypoints) < 2:
        raise SchemaViolation(f"{path}.waypoints", "need at least 2 waypoints")
    for k, row in enumerate(waypoints):
        if not isinstance(row, (list, tuple)) or len(row) != 4:
            raise SchemaViolation(f"{path}.waypoints[{k}]", "expected 4 values (x, y, z, v)")
        for j, entry in enumerate(row):
            if not isinstance(entry, (int, float)) or isinstance(entry, bool):
                raise SchemaViolation(
                    f"{path}.waypoints[{k}][{j}]", f"expected a number, got {entry!r}"
                )
    frame = data.get("frame", "world")
    if not isinstance(frame, str) or not frame:
        raise SchemaViolation(f"{path}.frame", "expected a non-empty string")
    try:
        return Trajectory.from_rows(waypoints, frame=frame)
    except ModelError as exc:
        raise SchemaViolation(f"{path}.waypoints", str(exc)) from exc


def check_scene(value: Any, path: str = "scene") -> Scene:
    if isinstance(value, Scene):
        return value
    data = _expect_mapping(value, path)
    raw_objects = data.get("objects", [])
    if not isinstance(raw_objects, (list, tuple)):
        raise SchemaViolation(f"{path}.objects", "expected a list of objects")
    objects = []
    for k, raw in enumerate(raw_objects):
        obj_path = f"{path}.objects[{k}]"
        obj = _expect_mapping(raw, obj_path)
        label = obj.get("label")
        if not isinstance(label, str) or not label:
            raise SchemaViolation(f"{obj_path}.label", "expected a non-empty string")
        for key in ("center", "dimensions"):
            vec = obj.get(key)
            if not isinstance(vec, (list, tuple)) or len(vec) != 3:
                raise SchemaViolation(f"{obj_path}.{key}", "expected a 3-vector")
        properties = obj.get("properties") or {}
        if not isinstance(properties, Mapping):
            raise SchemaViolation(f"{obj_path}.properties", "expected a string map")
        try:
            objects.append(
                SceneObject(
                    label=label,
                    center=tuple(obj["center"]),
                    dimensions=tuple(obj["dimensions"]),
                    properties={str(k2): str(v2) for k2, v2 in properties.items()},
                )
            )
        except ModelError as exc:
            raise SchemaViolation(obj_path, str(exc)) from exc
    description = data.get("description")
    if description is not None and not isinstance(description, str):
        raise SchemaViolation(f"{path}.description", "expected a string or null")
    try:
        return Scene(objects=tuple(objects), description=description)
    except ModelError as exc:
        raise SchemaViolation(f"{path}.objects", str(exc)) from exc


def check_profile(value: Any, path: str = "profile") -> RobotProfile:
    if isinstance(value, RobotProfile):
        return value
    data = _expect_mapping(value, path)
    if "workspace" not in data:
        raise SchemaViolation(f"{path}.workspace", "missing required field")
    if "v_max" not in data:
        raise SchemaViolation(f"{path}.v_max", "missing required field")
    workspace = _expect_mapping(data["workspace"], f"{path}.workspace")
    if workspace.get("type") not in ("cuboid", "sphere", "unbounded"):
        raise SchemaViolation(
            f"{path}.workspace.type", "expected one of: cuboid, sphere, unbounded"
        )
    try:
        return RobotProfile.from_dict(data)
    except ModelError as exc:
        raise SchemaViolation(path, str(exc)) from exc
    except KeyError as exc:
        raise SchemaViolation(f"{path}.workspace", f"missing field {exc}") from exc
