"""Dataset I/O: sample files, the bundled example corpus, plot-data emission.

A sample file is one JSON object:

    {
      "instruction": "Shift the whole path 20 centimeters to the left.",
      "trajectory":  {core-model trajectory schema},
      "scene":       {core-model scene schema},
      "profile":     {core-model profile schema},     # optional
      "followups":   [{"instruction": ..., "context": "original"|"current"}]  # optional
    }

``followups`` scripts the later turns of a feedback session; single-shot
samples omit it. Validation is strict and reports the JSON path of the
offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Any, Mapping, Optional

from .model import RobotProfile, Scene, Trajectory
from .validation import SchemaViolation, check_profile, check_scene, check_trajectory

__all__ = [
    "DatasetSample",
    "convert_latte_sample",
    "corpus_replay_path",
    "corpus_sample_names",
    "load_corpus_sample",
    "load_sample",
    "emit_plot_data",
    "sample_from_dict",
]

VALID_CONTEXTS = ("original", "current")


@dataclass(frozen=True)
class DatasetSample:
    trajectory: Trajectory
    scene: Scene
    instruction: str
    profile: Optional[RobotProfile] = None
    followups: tuple[tuple[str, str], ...] = ()

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "instruction": self.instruction,
            "trajectory": self.trajectory.to_dict(),
            "scene": self.scene.to_dict(),
        }
        if self.profile is not None:
            out["profile"] = self.profile.to_dict()
        if self.followups:
            out["followups"] = [
                {"instruction": text, "context": ctx} for text, ctx in self.followups
            ]
        return out


def sample_from_dict(data: Mapping[str, Any], path: str = "sample") -> DatasetSample:
    if not isinstance(data, Mapping):
        raise SchemaViolation(path, f"expected an object, got {type(data).__name__}")
    for key in ("instruction", "trajectory", "scene"):
        if key not in data:
            raise SchemaViolation(f"{path}.{key}", "missing required field")
    instruction = data["instruction"]
    if not isinstance(instruction, str) or not instruction.strip():
        raise SchemaViolation(f"{path}.instruction", "expected a non-empty string")

    trajectory = check_trajectory(data["trajectory"], path=f"{path}.trajectory")
    scene = check_scene(data["scene"], path=f"{path}.scene")
    profile = None
    if data.get("profile") is not None:
        profile = check_profile(data["profile"], path=f"{path}.profile")

    followups: list[tuple[str, str]] = []
    raw_followups = data.get("followups", [])
    if not isinstance(raw_followups, (list, tuple)):
        raise SchemaViolation(f"{path}.followups", "expected a list")
    for i, item in enumerate(raw_followups):
        where = f"{path}.followups[{i}]"
        if not isinstance(item, Mapping):
            raise SchemaViolation(where, "expected an object")
        text = item.get("instruction")
        if not isinstance(text, str) or not text.strip():
            raise SchemaViolation(f"{where}.instruction", "expected a non-empty string")
        ctx = item.get("context", "current")
        if ctx not in VALID_CONTEXTS:
            raise SchemaViolation(
                f"{where}.context", f'expected "original" or "current", got {ctx!r}'
            )
        followups.append((text, ctx))

    unknown = set(data) - {"instruction", "trajectory", "scene", "profile", "followups"}
    if unknown:
        raise SchemaViolation(f"{path}.{sorted(unknown)[0]}", "unknown field")

    return DatasetSample(
        trajectory=trajectory,
        scene=scene,
        instruction=instruction,
        profile=profile,
        followups=tuple(followups),
    )


def load_sample(path: str) -> DatasetSample:
    """Read and validate one sample file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(str(path), f"not valid JSON: {exc}") from exc
    return sample_from_dict(data, path=str(path))


# ------------------------------------------------------------ bundled corpus


def _corpus_root():
    return resources.files("ovita") / "corpus"


def corpus_sample_names() -> list[str]:
    """Names of the bundled samples, in corpus order."""
    root = _corpus_root() / "samples"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))


def load_corpus_sample(name: str) -> DatasetSample:
    raw = (_corpus_root() / "samples" / name).read_text(encoding="utf-8")
    return sample_from_dict(json.loads(raw), path=f"corpus/{name}")


def corpus_replay_path() -> str:
    """Filesystem path of the bundled replay transcript."""
    return str(_corpus_root() / "replay.jsonl")


# --------------------------------------------------------- LaTTe conversion


def convert_latte_sample(data: Mapping[str, Any]) -> dict[str, Any]:
    """Convert an upstream-style record into the sample schema.

    Expected input keys: ``input_traj`` (list of [x, y, z, v] rows), ``text``
    (the instruction), ``obj_names``, ``obj_poses`` (centers), and optionally
    ``obj_sizes``. Objects without a size get a 10 cm cube.
    """
    if not isinstance(data, Mapping):
        raise SchemaViolation("latte", "expected an object")
    for key in ("input_traj", "text", "obj_names", "obj_poses"):
        if key not in data:
            raise SchemaViolation(f"latte.{key}", "missing required field")
    names = data["obj_names"]
    poses = data["obj_poses"]
    if len(names) != len(poses):
        raise SchemaViolation(
            "latte.obj_poses", f"{len(poses)} poses for {len(names)} names"
        )
    sizes = data.get("obj_sizes")
    if sizes is not None and len(sizes) != len(names):
        raise SchemaViolation(
            "latte.obj_sizes", f"{len(sizes)} sizes for {len(names)} names"
        )

    objects = []
    for i, (name, pose) in enumerate(zip(names, poses)):
        size = sizes[i] if sizes is not None else (0.1, 0.1, 0.1)
        objects.append({
            "label": str(name),
            "center": [float(c) for c in pose[:3]],
            "dimensions": [float(s) for s in size],
        })

    rows = []
    for row in data["input_traj"]:
        row = list(row)
        if len(row) == 3:
            row.append(1.0)  # speed channel missing upstream: default 1 m/s
        rows.append([float(c) for c in row])

    sample = {
        "instruction": str(data["text"]),
        "trajectory": {"waypoints": rows},
        "scene": {"objects": objects},
    }
    # validate before handing it back
    sample_from_dict(sample, path="latte")
    return sample


# ------------------------------------------------------------ plot emission


def emit_plot_data(bundle: Mapping[str, Any]) -> dict[str, Any]:
    """Flatten a visualization bundle into plain plotting arrays.

    Input is the turn view produced by the session layer. Output holds the
    xyz polylines and speed arrays for both trajectories plus the object
    list, ready for any plotting frontend.
    """
    initial = bundle["initial"]["waypoints"]
    adapted = bundle["adapted"]["waypoints"]
    return {
        "initial": [[w[0], w[1], w[2]] for w in initial],
        "adapted": [[w[0], w[1], w[2]] for w in adapted],
        "speeds_initial": [w[3] for w in initial],
        "speeds_adapted": [w[3] for w in adapted],
        "objects": list(bundle.get("scene", {}).get("objects", [])),
    }
