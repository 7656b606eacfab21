"""Prompt grounding: turn (instruction, scene, trajectory) into chat text.

Everything here is a pure function of its inputs and the on-disk template
assets. That purity is what makes content-addressed replay possible: the
same inputs always hash to the same transcript key.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from ..model import Scene, Trajectory
from ..policy import PolicyProgram, builtin_transforms

__all__ = ["EmptyInstruction", "GroundedPrompt", "ground", "build_explain_prompt"]

# how many waypoints a prompt lists verbatim before switching to head/tail
_TRAJECTORY_LIST_CAP = 40


class EmptyInstruction(ValueError):
    def __init__(self):
        super().__init__("instruction must be a non-empty string")


@dataclass(frozen=True)
class GroundedPrompt:
    """Final chat messages plus the constituent parts, kept for inspection."""

    system: str
    user: str
    instruction: str
    scene_description: str
    object_table: str
    coordinate_preamble: str
    trajectory_rules: str
    function_definitions: str
    examples: str  # empty string when examples are excluded


def _template(name: str) -> str:
    return (resources.files("ovita.gateway") / "templates" / name).read_text(
        encoding="utf-8"
    )


def _fmt(value: float) -> str:
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def _section(text: str, header: str) -> str:
    """The body of a '## header' section, without the header line."""
    lines = text.split("\n")
    out: list = []
    inside = False
    for line in lines:
        if line.startswith("## "):
            if inside:
                break
            inside = line[3:].strip() == header
            continue
        if inside:
            out.append(line)
    return "\n".join(out).strip()


def function_definitions_text() -> str:
    """Builtin catalog rendered for the prompt, grouped by kind."""
    groups = {"transform": [], "query": [], "math": []}
    for info in builtin_transforms():
        groups[info.kind].append(f"- {info.signature}\n  {info.doc}")
    parts = []
    for kind, title in (("transform", "Trajectory transforms"),
                        ("query", "Scene and trajectory queries"),
                        ("math", "Math helpers")):
        parts.append(f"### {title}\n" + "\n".join(groups[kind]))
    return "\n\n".join(parts)


def object_table_text(scene: Scene) -> str:
    if not scene.objects:
        return "no objects detected"
    lines = []
    for obj in scene.objects:
        cx, cy, cz = (_fmt(c) for c in obj.center)
        dx, dy, dz = (_fmt(d) for d in obj.dimensions)
        line = (
            f"- {obj.label}: center = ({cx}, {cy}, {cz}), "
            f"dimensions = ({dx}, {dy}, {dz})"
        )
        if obj.properties:
            props = ", ".join(f"{k}={obj.properties[k]}" for k in sorted(obj.properties))
            line += f", properties: {props}"
        lines.append(line)
    return "\n".join(lines)


def trajectory_summary_text(trajectory: Trajectory) -> str:
    n = len(trajectory)
    rows = [[w.x, w.y, w.z, w.v] for w in trajectory.waypoints]

    def fmt_row(i: int) -> str:
        x, y, z, v = rows[i]
        return f"  {i}: [{_fmt(x)}, {_fmt(y)}, {_fmt(z)}, {_fmt(v)}]"

    header = f"{n} waypoints as [x, y, z, v]:"
    if n <= _TRAJECTORY_LIST_CAP:
        body = "\n".join(fmt_row(i) for i in range(n))
    else:
        head = "\n".join(fmt_row(i) for i in range(20))
        tail = "\n".join(fmt_row(i) for i in range(n - 20, n))
        body = f"{head}\n  ... ({n - 40} waypoints omitted) ...\n{tail}"
    return f"{header}\n{body}"


def ground(
    instruction: str,
    scene: Scene,
    trajectory: Trajectory,
    include_examples: bool = True,
) -> GroundedPrompt:
    """Instantiate the prompt template. Deterministic; no I/O beyond assets."""
    if not isinstance(instruction, str) or not instruction.strip():
        raise EmptyInstruction()

    fn_defs = function_definitions_text()
    system = _template("system.txt").replace("[[FUNCTION_DEFINITIONS]]", fn_defs)
    examples = _template("examples.txt").strip() if include_examples else ""
    if examples:
        system = f"{system.rstrip()}\n\n{examples}\n"

    scene_description = scene.description or "no description provided"
    object_table = object_table_text(scene)
    trajectory_summary = trajectory_summary_text(trajectory)
    user = (
        _template("user.txt")
        .replace("[[SCENE_DESCRIPTION]]", scene_description)
        .replace("[[OBJECT_TABLE]]", object_table)
        .replace("[[TRAJECTORY_SUMMARY]]", trajectory_summary)
        .replace("[[INSTRUCTION]]", instruction.strip())
    )

    base_system = _template("system.txt")
    return GroundedPrompt(
        system=system,
        user=user,
        instruction=instruction.strip(),
        scene_description=scene_description,
        object_table=object_table,
        coordinate_preamble=_section(base_system, "Coordinate system"),
        trajectory_rules=_section(base_system, "Trajectory characteristics"),
        function_definitions=fn_defs,
        examples=examples,
    )


def build_explain_prompt(program: PolicyProgram, plan: str) -> GroundedPrompt:
    """Prompt asking for a methodology/parameters/assumptions explanation."""
    if program.params:
        params = "\n".join(
            f"- {name} = {value}" for name, value in sorted(program.params.items())
        )
    else:
        params = "none extracted"
    user = (
        _template("explain_user.txt")
        .replace("[[PLAN]]", plan.strip() or "not provided")
        .replace("[[CODE]]", program.canonical_source)
        .replace("[[PARAMS]]", params)
    )
    system = _template("explain_system.txt")
    return GroundedPrompt(
        system=system,
        user=user,
        instruction=plan.strip(),
        scene_description="",
        object_table="",
        coordinate_preamble="",
        trajectory_rules="",
        function_definitions="",
        examples="",
    )
