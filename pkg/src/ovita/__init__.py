"""Language-driven trajectory adaptation with convex constraint enforcement."""

from .model import (
    CuboidWorkspace,
    RobotProfile,
    Scene,
    SceneObject,
    SphereWorkspace,
    Trajectory,
    UnboundedWorkspace,
    Waypoint,
    bounding_sphere,
    flatten,
    unflatten,
)

__version__ = "0.1.0"

__all__ = [
    "CuboidWorkspace",
    "RobotProfile",
    "Scene",
    "SceneObject",
    "SphereWorkspace",
    "Trajectory",
    "UnboundedWorkspace",
    "Waypoint",
    "bounding_sphere",
    "flatten",
    "unflatten",
    "__version__",
]
