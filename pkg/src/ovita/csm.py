"""Constraint satisfaction: project a reference trajectory onto its safe set.

The reference is whatever the adaptation policy produced; this module
builds a convex QP around it,

    minimize  lambda_dev ||x - x_ref||^2 + lambda_smooth ||D1 x||^2
    s.t.      workspace bounds, obstacle clearance, speed limits,
              optional pinned endpoints,

solves it, and reports both linear-constraint residuals and the violation
of the original (nonlinear) sphere constraints at the solution. Sphere
constraints are linearized once, by first-order Taylor expansion about the
reference; the linearization is only trusted near the reference, which is
why the report always carries true_violation_max.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import qp
from .model import (
    CuboidWorkspace,
    RobotProfile,
    Scene,
    SphereWorkspace,
    Trajectory,
    Waypoint,
    bounding_sphere,
    flatten,
)
from .validation import check_profile, check_scene, check_trajectory

__all__ = [
    "CsmConfig",
    "CsmReport",
    "DegenerateLinearization",
    "difference_matrix",
    "build_objective",
    "build_constraints",
    "enforce",
    "ConstraintProjector",
]

# threshold below which a linearization gradient is considered degenerate
_DEGENERATE_NORM = 1e-9


class DegenerateLinearization(ValueError):
    """Reference waypoint coincides with a sphere center: no usable gradient.

    The caller must perturb the reference before retrying; silently moving
    the waypoint here would make the output unexplainable.
    """

    def __init__(self, waypoint_index: int, center: np.ndarray, what: str):
        self.waypoint_index = waypoint_index
        self.center = np.asarray(center, dtype=float)
        self.what = what
        super().__init__(
            f"waypoint {waypoint_index} coincides with the {what} center "
            f"{self.center.tolist()}; perturb the reference (e.g. +1e-6 in x) and retry"
        )


@dataclass(frozen=True)
class CsmConfig:
    """Objective weights. Both must be strictly positive."""

    lambda_dev: float = 1.0
    lambda_smooth: float = 0.1
    smooth_speed_channel: bool = True

    def __post_init__(self) -> None:
        if not (self.lambda_dev > 0):
            raise ValueError(f"lambda_dev must be > 0, got {self.lambda_dev}")
        if not (self.lambda_smooth > 0):
            raise ValueError(f"lambda_smooth must be > 0, got {self.lambda_smooth}")


@dataclass(frozen=True)
class CsmReport:
    """Outcome of one enforcement pass.

    Violation metrics are computed on the raw optimizer output, so
    linearization error is always observable. deviation_cost is the squared
    distance between the solution and the reference over all channels.
    """

    solution: Trajectory
    status: qp.QpStatus
    linear_violation_max: float
    true_violation_max: float
    deviation_cost: float
    smoothness_cost: float
    solver_iterations: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "solution": self.solution.to_dict(),
            "status": self.status.value,
            "linear_violation_max": self.linear_violation_max,
            "true_violation_max": self.true_violation_max,
            "deviation_cost": self.deviation_cost,
            "smoothness_cost": self.smoothness_cost,
            "solver_iterations": self.solver_iterations,
        }


def difference_matrix(n_waypoints: int, include_speed: bool = True) -> np.ndarray:
    """Block first-order difference operator on the stacked 4N vector.

    Row block i is (waypoint i+1) - (waypoint i) over the smoothed channels
    (x, y, z and, when include_speed, v).
    """
    if n_waypoints < 2:
        raise ValueError(f"need at least 2 waypoints, got {n_waypoints}")
    channels = 4 if include_speed else 3
    D = np.zeros((channels * (n_waypoints - 1), 4 * n_waypoints))
    for i in range(n_waypoints - 1):
        for c in range(channels):
            D[channels * i + c, 4 * i + c] = -1.0
            D[channels * i + c, 4 * (i + 1) + c] = 1.0
    return D


def build_objective(ref: Trajectory, cfg: CsmConfig) -> tuple[np.ndarray, np.ndarray]:
    """P = 2 (lambda_dev I + lambda_smooth D1'D1), q = -2 lambda_dev x_ref."""
    n = len(ref)
    x_ref = flatten(ref)
    D = difference_matrix(n, include_speed=cfg.smooth_speed_channel)
    P = 2.0 * (cfg.lambda_dev * np.eye(4 * n) + cfg.lambda_smooth * (D.T @ D))
    q = -2.0 * cfg.lambda_dev * x_ref
    return P, q


def _sphere_gradient(p_ref: np.ndarray, center: np.ndarray, index: int, what: str) -> np.ndarray:
    diff = p_ref - center
    if float(np.linalg.norm(diff)) < _DEGENERATE_NORM:
        raise DegenerateLinearization(index, center, what)
    return 2.0 * diff


def build_constraints(
    ref: Trajectory, scene: Scene, profile: RobotProfile
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Assemble (G, h, A, b) on the stacked 4N vector.

    Position-type rows touch only x/y/z entries, velocity rows only v
    entries. Sphere-workspace and obstacle rows are half-spaces from a
    single Taylor expansion about the reference.
    """
    n = len(ref)
    dim = 4 * n
    positions = ref.positions()
    delta = profile.delta

    g_rows: list[np.ndarray] = []
    h_vals: list[float] = []

    def pos_slice(t: int) -> slice:
        return slice(4 * t, 4 * t + 3)

    ws = profile.workspace
    if isinstance(ws, CuboidWorkspace):
        lo = np.asarray(ws.min_corner) + delta
        hi = np.asarray(ws.max_corner) - delta
        if np.any(lo > hi):
            raise ValueError(
                f"safety margin {delta} leaves an empty workspace: "
                f"tightened bounds {lo.tolist()} .. {hi.tolist()}"
            )
        for t in range(n):
            for axis in range(3):
                row = np.zeros(dim)
                row[4 * t + axis] = 1.0
                g_rows.append(row)
                h_vals.append(hi[axis])
                row = np.zeros(dim)
                row[4 * t + axis] = -1.0
                g_rows.append(row)
                h_vals.append(-lo[axis])
    elif isinstance(ws, SphereWorkspace):
        center = np.asarray(ws.center)
        for t in range(n):
            p_ref = positions[t]
            grad = _sphere_gradient(p_ref, center, t, "workspace sphere")
            g_ref = float(np.sum((p_ref - center) ** 2))
            affine = g_ref - float(grad @ p_ref)
            # outer: g_ref + grad.(p - p_ref) <= r_max^2
            row = np.zeros(dim)
            row[pos_slice(t)] = grad
            g_rows.append(row)
            h_vals.append(ws.r_max**2 - affine)
            # inner: -(g_ref + grad.(p - p_ref)) <= -r_min^2
            row = np.zeros(dim)
            row[pos_slice(t)] = -grad
            g_rows.append(row)
            h_vals.append(affine - ws.r_min**2)

    for obj in scene.objects:
        center, radius = bounding_sphere(obj)
        clearance_sq = radius**2 + delta**2
        for t in range(n):
            p_ref = positions[t]
            grad = _sphere_gradient(p_ref, center, t, f"obstacle '{obj.label}'")
            g_ref = float(np.sum((p_ref - center) ** 2))
            # keep-out: g_ref + grad.(p - p_ref) >= clearance_sq
            row = np.zeros(dim)
            row[pos_slice(t)] = -grad
            g_rows.append(row)
            h_vals.append(g_ref - float(grad @ p_ref) - clearance_sq)

    for t in range(n):
        row = np.zeros(dim)
        row[4 * t + 3] = 1.0
        g_rows.append(row)
        h_vals.append(profile.v_max)
        row = np.zeros(dim)
        row[4 * t + 3] = -1.0
        g_rows.append(row)
        h_vals.append(0.0)

    a_rows: list[np.ndarray] = []
    b_vals: list[float] = []
    x_ref = flatten(ref)

    def pin(t: int) -> None:
        for c in range(4):
            row = np.zeros(dim)
            row[4 * t + c] = 1.0
            a_rows.append(row)
            b_vals.append(x_ref[4 * t + c])

    if profile.fix_start:
        pin(0)
    if profile.fix_goal:
        pin(n - 1)

    G = np.array(g_rows) if g_rows else np.zeros((0, dim))
    h = np.array(h_vals)
    A = np.array(a_rows) if a_rows else np.zeros((0, dim))
    b = np.array(b_vals)
    return G, h, A, b


def _true_sphere_violation(
    x: np.ndarray, scene: Scene, profile: RobotProfile
) -> float:
    """Max violation of the original quadratic sphere constraints at x."""
    n = x.size // 4
    worst = 0.0
    ws = profile.workspace
    for t in range(n):
        p = x[4 * t : 4 * t + 3]
        if isinstance(ws, SphereWorkspace):
            d_sq = float(np.sum((p - np.asarray(ws.center)) ** 2))
            worst = max(worst, d_sq - ws.r_max**2, ws.r_min**2 - d_sq)
        for obj in scene.objects:
            center, radius = bounding_sphere(obj)
            d_sq = float(np.sum((p - center) ** 2))
            worst = max(worst, radius**2 + profile.delta**2 - d_sq)
    return max(worst, 0.0)


def _solution_trajectory(x: np.ndarray, frame: str) -> Trajectory:
    # the optimizer may leave speeds a hair below zero; representation snaps
    # them to the domain while every report metric still sees the raw vector
    rows = x.reshape(-1, 4).copy()
    rows[:, 3] = np.maximum(rows[:, 3], 0.0)
    return Trajectory(
        waypoints=tuple(Waypoint(*row) for row in rows),
        frame=frame,
    )


def enforce(
    ref: Trajectory,
    scene: Scene,
    profile: RobotProfile,
    cfg: CsmConfig,
    solver_config: Optional[qp.SolverConfig] = None,
) -> CsmReport:
    """Build the QP about the reference, solve it, audit the result.

    The QP output is returned as-is: infeasible or truncated solves keep
    their status and their violations are reported, never masked.
    """
    P, q = build_objective(ref, cfg)
    G, h, A, b = build_constraints(ref, scene, profile)
    problem = qp.QpProblem(P=P, q=q, G=G, h=h, A=A, b=b)
    sol = qp.solve(problem, solver_config)

    x_star = sol.x_star
    x_ref = flatten(ref)

    linear_violation = 0.0
    if G.shape[0]:
        linear_violation = max(linear_violation, float(np.max(G @ x_star - h, initial=0.0)))
    if A.shape[0]:
        linear_violation = max(linear_violation, float(np.max(np.abs(A @ x_star - b), initial=0.0)))

    D = difference_matrix(len(ref), include_speed=cfg.smooth_speed_channel)
    return CsmReport(
        solution=_solution_trajectory(x_star, ref.frame),
        status=sol.status,
        linear_violation_max=linear_violation,
        true_violation_max=_true_sphere_violation(x_star, scene, profile),
        deviation_cost=float(np.sum((x_star - x_ref) ** 2)),
        smoothness_cost=float(np.sum((D @ x_star) ** 2)),
        solver_iterations=sol.iterations,
    )


class ConstraintProjector(BaseEstimator, TransformerMixin):
    """Estimator-style wrapper around :func:`enforce`.

    Parameters mirror CsmConfig plus the scene/profile context, so the
    projector drops into sklearn pipelines and grid searches. transform()
    maps a trajectory (or its JSON dict form) to the enforced trajectory;
    the full report of the last transform is kept on ``report_``.
    """

    def __init__(
        self,
        scene: Scene | dict | None = None,
        profile: RobotProfile | dict | None = None,
        lambda_dev: float = 1.0,
        lambda_smooth: float = 0.1,
        smooth_speed_channel: bool = True,
    ):
        self.scene = scene
        self.profile = profile
        self.lambda_dev = lambda_dev
        self.lambda_smooth = lambda_smooth
        self.smooth_speed_channel = smooth_speed_channel

    def _context(self) -> tuple[Scene, RobotProfile, CsmConfig]:
        if self.profile is None:
            raise ValueError("ConstraintProjector requires a robot profile")
        scene = check_scene(self.scene) if self.scene is not None else Scene()
        profile = check_profile(self.profile)
        cfg = CsmConfig(
            lambda_dev=self.lambda_dev,
            lambda_smooth=self.lambda_smooth,
            smooth_speed_channel=self.smooth_speed_channel,
        )
        return scene, profile, cfg

    def fit(self, X=None, y=None) -> "ConstraintProjector":
        """Stateless: validates the configuration and returns self."""
        self._context()
        return self

    def transform(self, X) -> Trajectory:
        scene, profile, cfg = self._context()
        ref = check_trajectory(X)
        self.report_ = enforce(ref, scene, profile, cfg)
        return self.report_.solution
