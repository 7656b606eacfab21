#!/usr/bin/env python3
"""Regenerate the bundled replay transcript and the golden session outputs.

The corpus sample files are the inputs. This script holds the canned model
responses (one per turn), walks every sample through the full pipeline with
the replay backend, and writes:

- src/ovita/corpus/replay.jsonl   prompt-hash -> response entries, including
                                  an explanation entry per successful turn
- tests/golden/<sample>.json      per-turn outputs, frozen bit-exactly

Run from the repository root:  python3 scripts/regen_fixtures.py
Rerunning is idempotent: the pipeline is deterministic end to end.
"""

from __future__ import annotations

import copy
import json
import os
import sys

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(ROOT, "src"))

from ovita.cli import DEFAULT_PROFILE  # noqa: E402
from ovita.dataset import corpus_sample_names, load_corpus_sample  # noqa: E402
from ovita.gateway import BackendConfig, build_explain_prompt, prompt_hash  # noqa: E402
from ovita.session import adapt, explain_turn, start  # noqa: E402

TRANSCRIPT = os.path.join(ROOT, "src", "ovita", "corpus", "replay.jsonl")
GOLDEN_DIR = os.path.join(ROOT, "tests", "golden")


def response(plan: str, code: str) -> str:
    return json.dumps({"plan": plan, "code": code})


# Canned model outputs, one list per sample, one entry per turn.
RESPONSES: dict[str, list[str]] = {
    "01_shift_left.json": [response(
        "Translate every waypoint 0.2 m along +y, which is the robot's left.",
        'let dy = 0.2;\ntranslate(axis="y", by=dy);',
    )],
    "02_go_left_numeric.json": [response(
        "No unit was given, so 20 is read as centimeters: shift 0.2 m along +y.",
        'let dy = 0.2;\ntranslate(axis="y", by=dy);',
    )],
    "03_lift_goal.json": [response(
        "Raise the final waypoint by 0.3 m and blend the lift over the "
        "second half of the path.",
        "let dz = 0.3;\n"
        "let blend = 0.5;\n"
        "let k = num_waypoints() - 1;\n"
        "let g = waypoint_position(k);\n"
        "set_goal([g[0], g[1], g[2] + dz], blend=blend);",
    )],
    "04_slow_half.json": [response(
        "Scale every waypoint speed by 0.5.",
        "let factor = 0.5;\nscale_speed(factor=factor);",
    )],
    "05_constant_speed.json": [response(
        "Replace all speeds with their mean so the motion is uniform.",
        'scale_speed(profile="constant");',
    )],
    "06_front_ramp.json": [response(
        "Shift 0.8 m forward along +x and ramp the speed linearly down to "
        "zero over the path.",
        'let dx = 0.8;\ntranslate(axis="x", by=dx);\nscale_speed(profile="linear_ramp");',
    )],
    "07_closer_cup.json": [response(
        "Pull waypoints toward the cup with a gaussian falloff, stopping "
        "0.15 m from its center.",
        'let offset = 0.15;\nlet sigma = 0.4;\napproach("cup", offset=offset, sigma=sigma);',
    )],
    "08_distance_lamp.json": [response(
        "Push nearby waypoints 0.3 m further from the lamp with a gaussian "
        "falloff.",
        'let offset = 0.3;\nlet sigma = 0.5;\nretreat("lamp", offset=offset, sigma=sigma);',
    )],
    "09_pause_bottle.json": [response(
        "Hold position for 10 timesteps at the waypoint nearest the bottle.",
        'let steps = 10;\nlet k = nearest_waypoint("bottle");\ninsert_pause(k, steps);',
    )],
    "10_zigzag.json": [response(
        "Offset alternate stretches sideways with a 0.1 m sine weave.",
        "let amplitude = 0.1;\nlet period = 4;\n"
        "zigzag(amplitude=amplitude, period=period);",
    )],
    "11_spiral_pot.json": [response(
        "Append a two-turn flat spiral of radius 0.12 m around the final "
        "waypoint, above the pot.",
        "let radius = 0.12;\nlet turns = 2;\nlet k = num_waypoints() - 1;\n"
        "insert_spiral(k, radius, turns=turns, points=24);",
    )],
    "12_cassette_multiturn.json": [
        response(
            "Pull the path toward the cassette with a gaussian falloff and "
            "set every speed to the mean.",
            'let offset = 0.15;\nlet sigma = 0.4;\n'
            'approach("cassette", offset=offset, sigma=sigma);\n'
            'scale_speed(profile="constant");',
        ),
        response(
            "Scale all speeds down by 20 percent.",
            "let factor = 0.8;\nscale_speed(factor=factor);",
        ),
        response(
            "Approach the cassette, keep the uniform speed, and add 0.1 m of "
            "height over the whole path.",
            'let offset = 0.15;\nlet sigma = 0.4;\nlet dz = 0.1;\n'
            'approach("cassette", offset=offset, sigma=sigma);\n'
            'translate(axis="z", by=dz);\n'
            'scale_speed(profile="constant");',
        ),
    ],
}


def explanation_text(plan: str, params: dict) -> str:
    listed = ", ".join(f"{k} = {v}" for k, v in sorted(params.items())) or "none"
    return (
        f"1) Methodology: {plan} "
        f"2) Parameter values: {listed} (distances in meters, speeds in meters "
        "per second). "
        "3) Assumptions: the frame is right-handed with x forward, y left and "
        "z up; unitless distances are meters."
    )


def main() -> None:
    entries: dict[str, str] = {}

    def flush() -> None:
        with open(TRANSCRIPT, "w", encoding="utf-8") as fh:
            for digest, canned in entries.items():
                fh.write(json.dumps({"prompt_sha256": digest, "response": canned}))
                fh.write("\n")

    os.makedirs(GOLDEN_DIR, exist_ok=True)
    flush()
    config = BackendConfig(kind="replay", transcript_path=TRANSCRIPT)

    for name in corpus_sample_names():
        sample = load_corpus_sample(name)
        canned = RESPONSES[name]
        turns = [(sample.instruction, "original"), *sample.followups]
        if len(turns) != len(canned):
            raise SystemExit(f"{name}: {len(turns)} turns but {len(canned)} responses")

        profile = sample.profile if sample.profile is not None else DEFAULT_PROFILE
        session = start(sample.trajectory, sample.scene, profile,
                        session_id=name.removesuffix(".json"))
        golden_turns = []
        for (text, ctx), resp in zip(turns, canned):
            # probe a throwaway copy to learn the prompt hash, then commit
            probe = adapt(copy.deepcopy(session), text, ctx, config)
            entries[probe.prompt_sha256] = resp
            flush()
            turn = adapt(session, text, ctx, config)
            if not turn.ok:
                raise SystemExit(f"{name} turn {turn.index}: {turn.error}")
            entries[prompt_hash(build_explain_prompt(turn.program, turn.plan))] = (
                explanation_text(turn.plan, turn.params)
            )
            flush()
            explain_turn(session, turn.index, config)
            golden_turns.append({
                "instruction": text,
                "context": ctx,
                "prompt_sha256": turn.prompt_sha256,
                "effective_instruction": turn.effective_instruction,
                "params": turn.params,
                "error": None,
                "csm_status": turn.csm["status"] if turn.csm else None,
                "output": turn.output_trajectory.to_dict(),
            })

        golden_path = os.path.join(GOLDEN_DIR, name)
        with open(golden_path, "w", encoding="utf-8") as fh:
            json.dump({"sample": name, "turns": golden_turns}, fh, indent=2)
            fh.write("\n")
        print(f"{name}: {len(golden_turns)} turn(s) frozen")

    print(f"replay transcript: {len(entries)} entries")


if __name__ == "__main__":
    main()
