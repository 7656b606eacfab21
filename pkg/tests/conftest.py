from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ovita.model import RobotProfile, Scene, SceneObject, Trajectory, UnboundedWorkspace


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def line_trajectory():
    """Straight 10-waypoint line along x at speed 1."""
    rows = [[i * 0.5, 0.0, 0.5, 1.0] for i in range(10)]
    return Trajectory.from_rows(rows)


@pytest.fixture
def cup_scene():
    return Scene(
        objects=(
            SceneObject(label="cup", center=(2.0, 0.5, 0.5), dimensions=(0.1, 0.1, 0.15)),
            SceneObject(
                label="table",
                center=(3.0, 0.0, 0.2),
                dimensions=(1.0, 1.0, 0.4),
                properties={"color": "brown"},
            ),
        ),
        description="A cup sits on a table.",
    )


@pytest.fixture
def free_profile():
    return RobotProfile(workspace=UnboundedWorkspace(), v_max=2.0, delta=0.0)


def random_trajectory(rng, n=8, scale=1.0):
    pos = rng.normal(size=(n, 3)) * scale
    v = rng.uniform(0.1, 1.5, size=n)
    return Trajectory.from_rows(np.column_stack([pos, v]))
