"""Feedback sessions: versioned trajectory history plus the instruction transcript.

A session starts from a base trajectory, a scene and a robot profile. Each
turn runs the full pipeline: prompt grounding, model completion, policy
parsing and execution, then optional constraint enforcement. Failures along
that pipeline are recorded inside the turn, never raised, because the
feedback loop itself is the recovery mechanism: the operator reads the error
and issues a correction.

Context semantics for follow-up turns:

- ``original``: the new text is appended to the running original-context
  instruction chain (joined with " Additionally: ") and the resulting policy
  is applied to the base trajectory.
- ``current``: the new text stands alone and the policy is applied to the
  latest output trajectory.

The first turn must use ``original`` since there is no current trajectory yet.

Turn error taxonomy (stage / code), a closed set shared with the HTTP API:

- gateway / replay_miss, auth_missing, network_failure
- model_output / unparseable
- policy_parse / syntax_error, disallowed_construct
- policy_execute / one of the sandbox runtime kinds, budget_exceeded
- csm / degenerate_linearization

Persistence is one JSON file per session, written atomically. Replaying a
persisted transcript against the replay backend reproduces every trajectory
bit for bit.
"""

from __future__ import annotations

import dataclasses
import json
import os
import re
import threading
import uuid
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Optional

from . import csm as csm_mod
from . import qp
from .gateway import (
    AuthMissing,
    BackendConfig,
    ModelResponse,
    NetworkFailure,
    ReplayMiss,
    complete,
    explain as gateway_explain,
    ground,
    prompt_hash,
)
from .model import RobotProfile, Scene, Trajectory
from .policy import (
    BudgetExceeded,
    DisallowedConstruct,
    PolicyProgram,
    PolicyRuntimeError,
    PolicySyntaxError,
    execute,
    parse,
)
from .validation import check_profile, check_scene, check_trajectory

__all__ = [
    "CONTEXT_CURRENT",
    "CONTEXT_ORIGINAL",
    "FEEDBACK_JOINER",
    "FirstTurnMustBeOriginal",
    "InvalidContext",
    "NothingToExplain",
    "Session",
    "SessionClosed",
    "SessionError",
    "SessionStore",
    "Turn",
    "TurnError",
    "UnknownSession",
    "UnknownTurn",
    "adapt",
    "executability_report",
    "explain_turn",
    "replay_transcript",
    "session_from_dict",
    "session_to_dict",
    "start",
    "visualize_payload",
]

CONTEXT_ORIGINAL = "original"
CONTEXT_CURRENT = "current"
FEEDBACK_JOINER = " Additionally: "

STATUS_ACTIVE = "active"
STATUS_CLOSED = "closed"

SCHEMA_VERSION = 1


class SessionError(ValueError):
    """Base class for session-level failures surfaced to callers."""


class SessionClosed(SessionError):
    def __init__(self, session_id: str):
        self.session_id = session_id
        super().__init__(f"session {session_id} is closed")


class FirstTurnMustBeOriginal(SessionError):
    def __init__(self) -> None:
        super().__init__(
            'the first turn must use context "original": there is no current '
            "trajectory to modify yet"
        )


class InvalidContext(SessionError):
    def __init__(self, value: object):
        super().__init__(
            f'context must be "original" or "current", got {value!r}'
        )


class UnknownTurn(SessionError, IndexError):
    def __init__(self, index: object, n_turns: int):
        super().__init__(f"turn {index!r} does not exist (session has {n_turns} turns)")


class UnknownSession(SessionError, KeyError):
    def __init__(self, session_id: str):
        self.session_id = session_id
        SessionError.__init__(self, f"no persisted session with id {session_id!r}")


class NothingToExplain(SessionError):
    def __init__(self, index: int):
        super().__init__(
            f"turn {index} has no policy program to explain (it failed before "
            "code was parsed)"
        )


@dataclass(frozen=True)
class TurnError:
    """A pipeline failure recorded inside a turn."""

    stage: str
    code: str
    message: str
    details: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "stage": self.stage,
            "code": self.code,
            "message": self.message,
            "details": dict(self.details),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TurnError":
        return cls(
            stage=str(data["stage"]),
            code=str(data["code"]),
            message=str(data["message"]),
            details=dict(data.get("details", {})),
        )


@dataclass(frozen=True)
class Turn:
    """One committed pipeline run. Immutable once appended.

    ``output_trajectory`` equals ``input_trajectory`` when the turn failed,
    so a follow-up with context "current" always has a well-defined input.
    """

    index: int
    instruction: str
    context: str
    effective_instruction: str
    prompt_sha256: str
    response: Optional[ModelResponse]
    program: Optional[PolicyProgram]
    plan: str
    input_trajectory: Trajectory
    output_trajectory: Trajectory
    trace: tuple[tuple[int, str], ...] = ()
    steps_used: Optional[int] = None
    csm: Optional[Mapping[str, Any]] = None
    error: Optional[TurnError] = None
    explanation: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def params(self) -> dict[str, Any]:
        return dict(self.program.params) if self.program is not None else {}

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "instruction": self.instruction,
            "context": self.context,
            "effective_instruction": self.effective_instruction,
            "prompt_sha256": self.prompt_sha256,
            "response": self.response.to_dict() if self.response else None,
            "program": self.program.source if self.program else None,
            "plan": self.plan,
            "input_trajectory": self.input_trajectory.to_dict(),
            "output_trajectory": self.output_trajectory.to_dict(),
            "trace": [[step, text] for step, text in self.trace],
            "steps_used": self.steps_used,
            "csm": dict(self.csm) if self.csm is not None else None,
            "error": self.error.to_dict() if self.error else None,
            "explanation": self.explanation,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Turn":
        raw_response = data.get("response")
        response = None
        if raw_response is not None:
            response = ModelResponse(
                raw=raw_response["raw"],
                plan=raw_response["plan"],
                code=raw_response["code"],
                parse_ok=bool(raw_response["parse_ok"]),
            )
        program_source = data.get("program")
        program = parse(program_source) if program_source is not None else None
        raw_error = data.get("error")
        return cls(
            index=int(data["index"]),
            instruction=data["instruction"],
            context=data["context"],
            effective_instruction=data["effective_instruction"],
            prompt_sha256=data["prompt_sha256"],
            response=response,
            program=program,
            plan=data.get("plan", ""),
            input_trajectory=Trajectory.from_dict(data["input_trajectory"]),
            output_trajectory=Trajectory.from_dict(data["output_trajectory"]),
            trace=tuple((int(s), str(t)) for s, t in data.get("trace", [])),
            steps_used=data.get("steps_used"),
            csm=data.get("csm"),
            error=TurnError.from_dict(raw_error) if raw_error else None,
            explanation=data.get("explanation"),
        )


@dataclass
class Session:
    id: str
    base_trajectory: Trajectory
    scene: Scene
    profile: RobotProfile
    turns: list[Turn] = field(default_factory=list)
    status: str = STATUS_ACTIVE


def session_to_dict(session: Session) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "id": session.id,
        "status": session.status,
        "base_trajectory": session.base_trajectory.to_dict(),
        "scene": session.scene.to_dict(),
        "profile": session.profile.to_dict(),
        "turns": [t.to_dict() for t in session.turns],
    }


def session_from_dict(data: Mapping[str, Any]) -> Session:
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SessionError(f"unsupported session schema version {version!r}")
    return Session(
        id=str(data["id"]),
        base_trajectory=Trajectory.from_dict(data["base_trajectory"]),
        scene=Scene.from_dict(data["scene"]),
        profile=RobotProfile.from_dict(data["profile"]),
        turns=[Turn.from_dict(t) for t in data.get("turns", [])],
        status=data.get("status", STATUS_ACTIVE),
    )


_ID_RE = re.compile(r"^[A-Za-z0-9_-]{1,128}$")


class SessionStore:
    """One JSON file per session under a directory. Writes are atomic."""

    def __init__(self, directory: str):
        self.directory = str(directory)
        os.makedirs(self.directory, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def path_for(self, session_id: str) -> str:
        if not _ID_RE.match(session_id):
            # ids are path components; reject separators and oddities outright
            raise SessionError(f"invalid session id {session_id!r}")
        return os.path.join(self.directory, f"{session_id}.json")

    def lock_for(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def save(self, session: Session) -> str:
        path = self.path_for(session.id)
        payload = json.dumps(session_to_dict(session), indent=2, sort_keys=True)
        tmp = f"{path}.tmp.{os.getpid()}"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(payload)
            fh.write("\n")
        os.replace(tmp, path)
        return path

    def exists(self, session_id: str) -> bool:
        return os.path.exists(self.path_for(session_id))

    def load(self, session_id: str) -> Session:
        path = self.path_for(session_id)
        if not os.path.exists(path):
            raise UnknownSession(session_id)
        with open(path, "r", encoding="utf-8") as fh:
            return session_from_dict(json.load(fh))

    def ids(self) -> list[str]:
        names = [n[:-5] for n in os.listdir(self.directory) if n.endswith(".json")]
        return sorted(names)


def _normalize_context(context: object) -> str:
    if isinstance(context, str) and context.lower() in (CONTEXT_ORIGINAL, CONTEXT_CURRENT):
        return context.lower()
    raise InvalidContext(context)


def _effective_instruction(session: Session, instruction: str, context: str) -> str:
    if context == CONTEXT_CURRENT:
        return instruction
    chain = [t.instruction for t in session.turns if t.context == CONTEXT_ORIGINAL]
    chain.append(instruction)
    return FEEDBACK_JOINER.join(chain)


def start(
    base: Trajectory | Mapping[str, Any],
    scene: Scene | Mapping[str, Any],
    profile: RobotProfile | Mapping[str, Any],
    store: Optional[SessionStore] = None,
    session_id: Optional[str] = None,
) -> Session:
    """Open a session. Inputs may be domain objects or their JSON forms."""
    session = Session(
        id=session_id if session_id is not None else uuid.uuid4().hex,
        base_trajectory=check_trajectory(base),
        scene=check_scene(scene),
        profile=check_profile(profile),
    )
    if store is not None:
        store.save(session)
    return session


def adapt(
    session: Session,
    instruction: str,
    context: str = CONTEXT_ORIGINAL,
    config: Optional[BackendConfig] = None,
    *,
    store: Optional[SessionStore] = None,
    transport: Optional[Callable] = None,
    sleep: Optional[Callable[[float], None]] = None,
    csm_config: Optional[csm_mod.CsmConfig] = None,
    solver_config: Optional[qp.SolverConfig] = None,
) -> Turn:
    """Run one full adaptation turn and append it to the transcript.

    Pipeline failures (gateway, model output, policy parse, policy execution,
    constraint linearization) are recorded in the returned turn with the
    trajectory left unchanged; only caller errors raise.
    """
    if session.status != STATUS_ACTIVE:
        raise SessionClosed(session.id)
    ctx = _normalize_context(context)
    if not session.turns and ctx == CONTEXT_CURRENT:
        raise FirstTurnMustBeOriginal()
    if config is None:
        config = BackendConfig()

    effective = _effective_instruction(session, instruction, ctx)
    if ctx == CONTEXT_ORIGINAL:
        source = session.base_trajectory
    else:
        source = session.turns[-1].output_trajectory

    prompt = ground(effective, session.scene, source)

    response: Optional[ModelResponse] = None
    program: Optional[PolicyProgram] = None
    error: Optional[TurnError] = None
    output = source
    trace: tuple[tuple[int, str], ...] = ()
    steps_used: Optional[int] = None
    csm_dict: Optional[dict[str, Any]] = None

    kwargs: dict[str, Any] = {}
    if transport is not None:
        kwargs["transport"] = transport
    if sleep is not None:
        kwargs["sleep"] = sleep
    try:
        response = complete(prompt, config, **kwargs)
    except ReplayMiss as exc:
        error = TurnError("gateway", "replay_miss", str(exc), {"prompt_sha256": exc.digest})
    except AuthMissing as exc:
        error = TurnError("gateway", "auth_missing", str(exc))
    except NetworkFailure as exc:
        error = TurnError("gateway", "network_failure", str(exc), {"status": exc.status})

    if error is None and not response.parse_ok:
        error = TurnError(
            "model_output",
            "unparseable",
            "model output does not contain a JSON object with plan and code",
        )

    if error is None:
        try:
            program = parse(response.code)
        except DisallowedConstruct as exc:
            error = TurnError("policy_parse", "disallowed_construct", str(exc), exc.to_dict())
        except PolicySyntaxError as exc:
            error = TurnError("policy_parse", "syntax_error", str(exc), exc.to_dict())

    if error is None:
        try:
            result = execute(program, source, session.scene)
            output = result.trajectory
            trace = result.trace
            steps_used = result.steps_used
        except PolicyRuntimeError as exc:
            error = TurnError("policy_execute", exc.kind.value, str(exc), exc.to_dict())
        except BudgetExceeded as exc:
            error = TurnError("policy_execute", "budget_exceeded", str(exc), exc.to_dict())

    if error is None and session.profile.enforce_csm:
        try:
            report = csm_mod.enforce(
                output,
                session.scene,
                session.profile,
                csm_config if csm_config is not None else csm_mod.CsmConfig(),
                solver_config,
            )
            csm_dict = report.to_dict()
            # a non-optimal solve keeps the raw policy output: its iterate is
            # not a certified projection, only the report is worth keeping
            if report.status == qp.QpStatus.OPTIMAL:
                output = report.solution
        except csm_mod.DegenerateLinearization as exc:
            error = TurnError(
                "csm",
                "degenerate_linearization",
                str(exc),
                {"waypoint_index": exc.waypoint_index},
            )
            output = source

    turn = Turn(
        index=len(session.turns),
        instruction=instruction,
        context=ctx,
        effective_instruction=effective,
        prompt_sha256=prompt_hash(prompt),
        response=response,
        program=program,
        plan=response.plan if response is not None else "",
        input_trajectory=source,
        output_trajectory=output if error is None else source,
        trace=trace,
        steps_used=steps_used,
        csm=csm_dict,
        error=error,
    )
    session.turns.append(turn)
    if store is not None:
        store.save(session)
    return turn


def _turn_at(session: Session, index: int) -> Turn:
    if not isinstance(index, int) or isinstance(index, bool):
        raise UnknownTurn(index, len(session.turns))
    if index < 0 or index >= len(session.turns):
        raise UnknownTurn(index, len(session.turns))
    return session.turns[index]


def visualize_payload(session: Session, turn_index: int) -> dict[str, Any]:
    """The comparison bundle for one turn, as one JSON-ready document.

    Carries both trajectories, the plan, the extracted parameters, the
    explanation when one has been generated, constraint metrics and the
    error record for failed turns. The scene rides along so a plotter can
    draw obstacles without a second lookup.
    """
    turn = _turn_at(session, turn_index)
    csm_section = None
    if turn.csm is not None:
        csm_section = {
            "status": turn.csm.get("status"),
            "linear_violation_max": turn.csm.get("linear_violation_max"),
            "true_violation_max": turn.csm.get("true_violation_max"),
            "deviation_cost": turn.csm.get("deviation_cost"),
            "smoothness_cost": turn.csm.get("smoothness_cost"),
            "solver_iterations": turn.csm.get("solver_iterations"),
        }
    return {
        "session_id": session.id,
        "turn_index": turn.index,
        "context": turn.context,
        "instruction": turn.instruction,
        "effective_instruction": turn.effective_instruction,
        "initial": turn.input_trajectory.to_dict(),
        "adapted": turn.output_trajectory.to_dict(),
        "plan": turn.plan,
        "params": turn.params,
        "trace": [[step, text] for step, text in turn.trace],
        "explanation": turn.explanation,
        "csm": csm_section,
        "error": turn.error.to_dict() if turn.error else None,
        "scene": session.scene.to_dict(),
    }


def explain_turn(
    session: Session,
    turn_index: int,
    config: Optional[BackendConfig] = None,
    *,
    store: Optional[SessionStore] = None,
    transport: Optional[Callable] = None,
    sleep: Optional[Callable[[float], None]] = None,
) -> str:
    """Generate (or return the cached) natural-language explanation for a turn.

    The explanation is the one late-filled field on a committed turn: it is
    derived presentation data, the adaptation itself never changes.
    """
    turn = _turn_at(session, turn_index)
    if turn.explanation is not None:
        return turn.explanation
    if turn.program is None:
        raise NothingToExplain(turn_index)
    if config is None:
        config = BackendConfig()
    kwargs: dict[str, Any] = {}
    if transport is not None:
        kwargs["transport"] = transport
    if sleep is not None:
        kwargs["sleep"] = sleep
    text = gateway_explain(turn.program, turn.plan, config, **kwargs)
    session.turns[turn_index] = dataclasses.replace(turn, explanation=text)
    if store is not None:
        store.save(session)
    return text


def executability_report(sessions: Iterable[Session]) -> dict[str, Any]:
    """Parse/execute success accounting across session transcripts.

    Denominators: ``parse_rate`` is parsed-over-responses (model replies
    that yielded a loadable program) and ``execute_rate`` is
    executed-over-responses (replies whose program also ran to completion;
    a downstream constraint-stage failure still counts as executed). Rates
    are None when no model response was ever received.
    """
    turns = [t for s in sessions for t in s.turns]
    responded = [t for t in turns if t.response is not None]
    parsed = [t for t in responded if t.program is not None]
    executed = [t for t in parsed
                if t.error is None or t.error.stage == "csm"]

    def rate(part: list, whole: list) -> Optional[float]:
        return len(part) / len(whole) if whole else None

    return {
        "turns": len(turns),
        "responses": len(responded),
        "parsed": len(parsed),
        "executed": len(executed),
        "parse_rate": rate(parsed, responded),
        "execute_rate": rate(executed, responded),
    }


def replay_transcript(
    session: Session,
    config: Optional[BackendConfig] = None,
    *,
    transport: Optional[Callable] = None,
    sleep: Optional[Callable[[float], None]] = None,
) -> tuple[Session, list[dict[str, Any]]]:
    """Re-run a persisted transcript and diff it against the stored outputs.

    Returns the freshly computed session plus one diff record per turn with
    the maximum absolute waypoint difference. All-zero diffs certify
    end-to-end determinism of the stored file.
    """
    fresh = start(session.base_trajectory, session.scene, session.profile,
                  session_id=session.id)
    diffs: list[dict[str, Any]] = []
    for recorded in session.turns:
        replayed = adapt(
            fresh,
            recorded.instruction,
            recorded.context,
            config,
            transport=transport,
            sleep=sleep,
        )
        old_rows = [w.as_tuple() for w in recorded.output_trajectory.waypoints]
        new_rows = [w.as_tuple() for w in replayed.output_trajectory.waypoints]
        if len(old_rows) == len(new_rows):
            max_diff = max(
                (abs(a - b) for old, new in zip(old_rows, new_rows)
                 for a, b in zip(old, new)),
                default=0.0,
            )
            shape_changed = False
        else:
            max_diff = float("inf")
            shape_changed = True
        old_err = recorded.error.code if recorded.error else None
        new_err = replayed.error.code if replayed.error else None
        diffs.append({
            "turn": recorded.index,
            "match": max_diff == 0.0 and old_err == new_err,
            "max_abs_diff": max_diff,
            "shape_changed": shape_changed,
            "recorded_error": old_err,
            "replayed_error": new_err,
        })
    return fresh, diffs
