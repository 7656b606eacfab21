"""Command-line entry point.

Commands: adapt, enforce, tune, serve, session replay, policy run,
dataset validate. Exit codes: 0 success, 1 domain error, 2 usage error.
Every command prints machine-readable JSON with --json, human text otherwise.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from typing import Any, Optional

import click

from . import csm as csm_mod
from . import qp
from . import session as sess
from .dataset import (
    DatasetSample,
    corpus_replay_path,
    corpus_sample_names,
    emit_plot_data,
    load_corpus_sample,
    load_sample,
)
from .gateway import (
    AuthMissing,
    BackendConfig,
    NetworkFailure,
    ReplayMiss,
    backend_from_env,
)
from .model import ModelError, RobotProfile, Scene, UnboundedWorkspace
from .policy import PolicyError, execute, parse
from .tuner import EmptySpace, tune
from .validation import SchemaViolation, check_profile, check_scene, check_trajectory

# single-shot runs without a profile skip constraint enforcement entirely
DEFAULT_PROFILE = RobotProfile(workspace=UnboundedWorkspace(), v_max=1e9,
                               enforce_csm=False)

_DOMAIN_ERRORS = (
    SchemaViolation,
    ModelError,
    sess.SessionError,
    PolicyError,
    csm_mod.DegenerateLinearization,
    EmptySpace,
    ReplayMiss,
    NetworkFailure,
    AuthMissing,
    OSError,
)


def domain_errors(fn):
    """Print domain failures to stderr and exit 1 instead of tracebacking."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _DOMAIN_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _read_json(path: str) -> Any:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(path, f"not valid JSON: {exc}") from exc


def _write_json(path: str, data: Any) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _emit(data: Any) -> None:
    click.echo(json.dumps(data, indent=2, sort_keys=True))


def _make_backend(backend: Optional[str], replay: Optional[str]) -> BackendConfig:
    """Environment config with CLI flags layered on top."""
    cfg = backend_from_env()
    kind = backend or cfg.kind
    transcript = replay or cfg.transcript_path
    if kind == "replay" and transcript is None:
        transcript = corpus_replay_path()  # bundled transcript as last resort
    return BackendConfig(
        kind=kind,
        endpoint=cfg.endpoint,
        model=cfg.model,
        temperature=cfg.temperature,
        api_key_env=cfg.api_key_env,
        transcript_path=transcript,
    )


def _fmt_row(values, widths) -> str:
    return "  ".join(str(v).ljust(w) for v, w in zip(values, widths))


@click.group()
def main() -> None:
    """Language-driven trajectory adaptation with constraint enforcement."""


# -------------------------------------------------------------------- adapt


@main.command()
@click.option("--sample", "sample_path", type=click.Path(exists=True, dir_okay=False),
              help="Sample file bundling trajectory, scene and instruction.")
@click.option("--corpus-sample", "corpus_name",
              help="Name of a bundled corpus sample (see `ovita dataset validate --corpus`).")
@click.option("--trajectory", "trajectory_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--scene", "scene_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--profile", "profile_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--instruction", help="Natural-language adaptation request.")
@click.option("--backend", type=click.Choice(["replay", "http"]))
@click.option("--replay", "replay_path", type=click.Path(exists=True, dir_okay=False),
              help="Replay transcript (JSONL) for the replay backend.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              help="Write the adapted trajectory JSON here.")
@click.option("--plot-data", "plot_path", type=click.Path(dir_okay=False),
              help="Write flattened plotting arrays here.")
@click.option("--json", "as_json", is_flag=True, help="Emit the final turn bundle as JSON.")
@domain_errors
def adapt(sample_path, corpus_name, trajectory_path, scene_path, profile_path,
          instruction, backend, replay_path, out_path, plot_path, as_json):
    """Adapt one trajectory from an instruction (plus scripted follow-ups)."""
    if sample_path and corpus_name:
        raise click.UsageError("--sample and --corpus-sample are mutually exclusive")
    if sample_path:
        sample = load_sample(sample_path)
    elif corpus_name:
        sample = load_corpus_sample(corpus_name)
    else:
        if not (trajectory_path and scene_path and instruction):
            raise click.UsageError(
                "provide --sample, --corpus-sample, or all of "
                "--trajectory/--scene/--instruction"
            )
        sample = DatasetSample(
            trajectory=check_trajectory(_read_json(trajectory_path)),
            scene=check_scene(_read_json(scene_path)),
            instruction=instruction,
            profile=check_profile(_read_json(profile_path)) if profile_path else None,
        )

    config = _make_backend(backend, replay_path)
    profile = sample.profile if sample.profile is not None else DEFAULT_PROFILE
    session = sess.start(sample.trajectory, sample.scene, profile)
    sess.adapt(session, sample.instruction, "original", config)
    for text, ctx in sample.followups:
        sess.adapt(session, text, ctx, config)

    last = session.turns[-1]
    bundle = sess.visualize_payload(session, last.index)
    if out_path:
        _write_json(out_path, bundle["adapted"])
    if plot_path:
        _write_json(plot_path, emit_plot_data(bundle))
    if as_json:
        _emit(bundle)
    else:
        for turn in session.turns:
            state = "ok" if turn.ok else f"FAILED ({turn.error.code})"
            click.echo(f"turn {turn.index} [{turn.context}] {state}: {turn.instruction}")
        click.echo(f"plan: {last.plan}")
        if last.params:
            for name, value in sorted(last.params.items()):
                click.echo(f"  {name} = {value}")
        n_in = len(bundle["initial"]["waypoints"])
        n_out = len(bundle["adapted"]["waypoints"])
        click.echo(f"waypoints: {n_in} -> {n_out}")
        if last.csm is not None:
            click.echo(f"constraint status: {last.csm['status']} "
                       f"(max violation {last.csm['true_violation_max']:.2e})")
        acct = sess.executability_report([session])
        click.echo(f"code generation: parsed {acct['parsed']}/{acct['responses']}, "
                   f"executed {acct['executed']}/{acct['responses']}")
    if any(not t.ok for t in session.turns):
        failed = next(t for t in session.turns if not t.ok)
        click.echo(f"error: turn {failed.index}: {failed.error.message}", err=True)
        sys.exit(1)


# ------------------------------------------------------------------ enforce


@main.command()
@click.option("--trajectory", "trajectory_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--scene", "scene_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--profile", "profile_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--lambda-dev", type=float, default=1.0, show_default=True)
@click.option("--lambda-smooth", type=float, default=0.1, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
@domain_errors
def enforce(trajectory_path, scene_path, profile_path, lambda_dev, lambda_smooth,
            out_path, as_json):
    """Project a trajectory onto the feasible set (workspace, obstacles, speed)."""
    ref = check_trajectory(_read_json(trajectory_path))
    scene = check_scene(_read_json(scene_path))
    profile = check_profile(_read_json(profile_path))
    report = csm_mod.enforce(
        ref, scene, profile,
        csm_mod.CsmConfig(lambda_dev=lambda_dev, lambda_smooth=lambda_smooth),
    )
    if out_path:
        _write_json(out_path, report.solution.to_dict())
    if as_json:
        _emit(report.to_dict())
    else:
        click.echo(f"status: {report.status.value}")
        click.echo(f"max linear violation: {report.linear_violation_max:.3e}")
        click.echo(f"max true violation:   {report.true_violation_max:.3e}")
        click.echo(f"deviation cost: {report.deviation_cost:.6f}")
        click.echo(f"smoothness cost: {report.smoothness_cost:.6f}")
        click.echo(f"iterations: {report.solver_iterations}")
    if report.status != qp.QpStatus.OPTIMAL:
        click.echo(f"error: solve did not certify optimality "
                   f"({report.status.value})", err=True)
        sys.exit(1)


# --------------------------------------------------------------------- tune


@main.command(name="tune")
@click.option("--trajectory", "trajectory_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--scene", "scene_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--profile", "profile_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--trials", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@domain_errors
def tune_cmd(trajectory_path, scene_path, profile_path, trials, seed, as_json):
    """Search smoothing weights that minimize enforcement cost."""
    ref = check_trajectory(_read_json(trajectory_path))
    scene = check_scene(_read_json(scene_path))
    profile = check_profile(_read_json(profile_path))
    best, history = tune(ref, scene, profile, trials=trials, seed=seed)
    best_cost = min(t.cost for t in history)
    if as_json:
        _emit({
            "best": {"lambda_dev": best.lambda_dev, "lambda_smooth": best.lambda_smooth},
            "best_cost": best_cost,
            "trials": [t.to_dict() for t in history],
        })
    else:
        click.echo(f"best lambda_dev:    {best.lambda_dev:.6g}")
        click.echo(f"best lambda_smooth: {best.lambda_smooth:.6g}")
        click.echo(f"best cost: {best_cost:.6g} over {len(history)} trials")


# -------------------------------------------------------------------- serve


@main.command()
@click.option("--bind", default="127.0.0.1:8080", show_default=True,
              help="HOST:PORT to listen on.")
@click.option("--sessions", "sessions_dir", default="./sessions", show_default=True,
              type=click.Path(file_okay=False))
@click.option("--backend", type=click.Choice(["replay", "http"]))
@click.option("--replay", "replay_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--cors", "cors_origins", multiple=True,
              help="Allowed CORS origin (repeatable; default: any).")
@click.option("--timeout", type=float, default=120.0, show_default=True,
              help="Turn-creation timeout in seconds.")
@click.option("--ui", "ui_dir", type=click.Path(exists=True, file_okay=False),
              help="Directory of built web-client assets to serve at /ui.")
@domain_errors
def serve(bind, sessions_dir, backend, replay_path, cors_origins, timeout, ui_dir):
    """Run the HTTP session API."""
    from .service import ServiceConfig
    from .service import serve as run_server

    host, _, port_text = bind.rpartition(":")
    if not host or not port_text.isdigit():
        raise click.UsageError(f"--bind must be HOST:PORT, got {bind!r}")
    config = ServiceConfig(
        sessions_dir=sessions_dir,
        backend=_make_backend(backend, replay_path),
        cors_origins=tuple(cors_origins) or ("*",),
        turn_timeout_seconds=timeout,
        ui_dir=ui_dir,
    )
    run_server(config, host=host, port=int(port_text))


# ------------------------------------------------------------------ session


@main.group()
def session() -> None:
    """Operations on persisted session files."""


@session.command(name="replay")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--backend", type=click.Choice(["replay", "http"]))
@click.option("--replay", "replay_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
@domain_errors
def session_replay(file, backend, replay_path, as_json):
    """Recompute a stored session and diff it against the recorded outputs."""
    stored = sess.session_from_dict(_read_json(file))
    config = _make_backend(backend, replay_path)
    _, diffs = sess.replay_transcript(stored, config)
    if as_json:
        _emit({"session": stored.id, "turns": diffs,
               "match": all(d["match"] for d in diffs)})
    else:
        widths = (5, 8, 14, 16, 16)
        click.echo(_fmt_row(("turn", "match", "max_abs_diff",
                             "recorded_error", "replayed_error"), widths))
        for d in diffs:
            click.echo(_fmt_row(
                (d["turn"], "yes" if d["match"] else "NO", f"{d['max_abs_diff']:.3e}",
                 d["recorded_error"] or "-", d["replayed_error"] or "-"), widths))
    if not all(d["match"] for d in diffs):
        click.echo("error: replay diverged from the stored transcript", err=True)
        sys.exit(1)


# ------------------------------------------------------------------- policy


@main.group()
def policy() -> None:
    """Run or inspect trajectory policies directly."""


@policy.command(name="run")
@click.option("--code", "code_path", required=True,
              help="Policy source file, or - for stdin.")
@click.option("--trajectory", "trajectory_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--scene", "scene_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--budget", type=int, default=None, help="Interpreter step budget.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
@domain_errors
def policy_run(code_path, trajectory_path, scene_path, budget, out_path, as_json):
    """Execute a policy file against a trajectory without any model calls."""
    if code_path == "-":
        source = sys.stdin.read()
    else:
        with open(code_path, "r", encoding="utf-8") as fh:
            source = fh.read()
    trajectory = check_trajectory(_read_json(trajectory_path))
    scene = check_scene(_read_json(scene_path)) if scene_path else Scene()

    program = parse(source)
    kwargs = {"budget": budget} if budget is not None else {}
    result = execute(program, trajectory, scene, **kwargs)

    if out_path:
        _write_json(out_path, result.trajectory.to_dict())
    if as_json:
        _emit({
            "params": program.params,
            "trajectory": result.trajectory.to_dict(),
            "trace": [[step, text] for step, text in result.trace],
            "steps_used": result.steps_used,
        })
    else:
        for step, text in result.trace:
            click.echo(f"[{step}] {text}")
        click.echo(f"waypoints: {len(trajectory)} -> {len(result.trajectory)} "
                   f"({result.steps_used} steps)")


# ------------------------------------------------------------------ dataset


@main.group()
def dataset() -> None:
    """Dataset sample utilities."""


@dataset.command(name="validate")
@click.argument("paths", nargs=-1, type=click.Path(exists=True))
@click.option("--corpus", "use_corpus", is_flag=True,
              help="Validate the bundled example corpus.")
@click.option("--json", "as_json", is_flag=True)
def dataset_validate(paths, use_corpus, as_json):
    """Validate sample files (or directories of them) against the schema."""
    if not paths and not use_corpus:
        raise click.UsageError("give sample paths or --corpus")

    jobs: list[tuple[str, Any]] = []
    for path in paths:
        if os.path.isdir(path):
            names = sorted(n for n in os.listdir(path) if n.endswith(".json"))
            jobs.extend((os.path.join(path, n), None) for n in names)
        else:
            jobs.append((path, None))
    if use_corpus:
        jobs.extend((f"corpus/{name}", name) for name in corpus_sample_names())

    results = []
    for label, corpus_name in jobs:
        try:
            sample = (load_corpus_sample(corpus_name) if corpus_name
                      else load_sample(label))
            results.append({
                "path": label,
                "ok": True,
                "instruction": sample.instruction,
                "waypoints": len(sample.trajectory),
                "objects": len(sample.scene.objects),
                "followups": len(sample.followups),
            })
        except (SchemaViolation, ModelError) as exc:
            results.append({"path": label, "ok": False, "error": str(exc)})

    ok = all(r["ok"] for r in results)
    if as_json:
        _emit({"ok": ok, "samples": results})
    else:
        for r in results:
            if r["ok"]:
                click.echo(f"ok    {r['path']} ({r['waypoints']} waypoints, "
                           f"{r['objects']} objects)")
            else:
                click.echo(f"FAIL  {r['path']}: {r['error']}")
        click.echo(f"{sum(r['ok'] for r in results)}/{len(results)} valid")
    if not ok:
        sys.exit(1)


if __name__ == "__main__":
    main()
