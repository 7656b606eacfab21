"""Gateway: prompt grounding purity, response parsing, backends, retries."""

import json

import pytest

from ovita.gateway import (
    AuthMissing,
    BackendConfig,
    EmptyInstruction,
    NetworkFailure,
    ReplayMiss,
    backend_from_env,
    build_explain_prompt,
    complete,
    explain,
    ground,
    parse_response,
    prompt_hash,
)
from ovita.model import Scene, SceneObject, Trajectory
from ovita.policy import parse

TRAJ = Trajectory.from_rows([[0, 0, 0, 1], [1, 0, 0, 1], [2, 0, 0, 1]])
SCENE = Scene(
    objects=(SceneObject("cup", (1.0, 2.0, 0.0), (0.1, 0.1, 0.2)),),
    description="a cup sits on the right side of the table",
)


# ---------------------------------------------------------------- grounding


def test_prompt_contains_labels_and_coordinates_verbatim():
    p = ground("move closer to the cup", SCENE, TRAJ)
    assert "cup" in p.user
    for token in ("1", "2", "0"):
        assert token in p.user
    assert "move closer to the cup" in p.user
    assert p.scene_description == "a cup sits on the right side of the table"


def test_ground_is_pure():
    a = ground("lift the path", SCENE, TRAJ)
    b = ground("lift the path", SCENE, TRAJ)
    assert a == b
    assert a.system == b.system and a.user == b.user
    assert prompt_hash(a) == prompt_hash(b)


def test_examples_block_is_identical_across_tasks():
    other_scene = Scene(objects=(SceneObject("box", (9, 9, 9), (1, 1, 1)),))
    a = ground("speed up", SCENE, TRAJ)
    b = ground("slow down near the box", other_scene, TRAJ)
    assert a.examples == b.examples
    assert a.examples.startswith("## Examples")


def test_include_examples_toggle_differs_exactly_by_example_block():
    with_ex = ground("lift", SCENE, TRAJ, include_examples=True)
    without = ground("lift", SCENE, TRAJ, include_examples=False)
    assert without.examples == ""
    assert with_ex.user == without.user
    assert with_ex.system != without.system
    # the with-examples system is the without-examples one plus the block
    assert with_ex.system == f"{without.system.rstrip()}\n\n{with_ex.examples}\n"
    assert prompt_hash(with_ex) != prompt_hash(without)


def test_empty_scene_states_no_objects():
    p = ground("lift", Scene(), TRAJ)
    assert "no objects detected" in p.user
    assert "no description provided" in p.user


def test_empty_instruction_rejected():
    with pytest.raises(EmptyInstruction):
        ground("   ", SCENE, TRAJ)
    with pytest.raises(EmptyInstruction):
        ground("", SCENE, TRAJ)


def test_prompt_records_constituent_parts():
    p = ground("lift", SCENE, TRAJ)
    assert "right-handed" in p.coordinate_preamble
    assert "non-negative" in p.trajectory_rules
    assert "translate" in p.function_definitions
    assert "insert_pause" in p.function_definitions
    assert p.function_definitions in p.system
    assert "3 waypoints as [x, y, z, v]" in p.user


def test_long_trajectory_is_summarized():
    rows = [[float(i), 0.0, 0.0, 1.0] for i in range(100)]
    p = ground("lift", Scene(), Trajectory.from_rows(rows))
    assert "100 waypoints" in p.user
    assert "waypoints omitted" in p.user
    assert "99: [99, 0, 0, 1]" in p.user


def test_object_properties_listed_sorted():
    scene = Scene(objects=(
        SceneObject("mug", (0, 0, 0), (0.1, 0.1, 0.1), properties={"color": "red", "age": "new"}),
    ))
    p = ground("x", scene, TRAJ)
    assert "age=new, color=red" in p.object_table


# ------------------------------------------------------------ parse_response


def test_parse_well_formed():
    r = parse_response('{"plan": "shift x", "code": "translate(axis=\\"x\\", by=0.1);"}')
    assert r.parse_ok
    assert r.plan == "shift x"
    assert "translate" in r.code


def test_parse_fenced_json():
    raw = 'Sure! Here you go:\n```json\n{"plan": "p", "code": "c"}\n```\nHope that helps.'
    r = parse_response(raw)
    assert r.parse_ok
    assert (r.plan, r.code) == ("p", "c")
    assert r.raw == raw


def test_parse_bare_fence():
    r = parse_response('```\n{"plan": "p", "code": "c"}\n```')
    assert r.parse_ok


def test_parse_json_with_leading_prose():
    r = parse_response('The adaptation: {"plan": "p", "code": "c"} as requested.')
    assert r.parse_ok


def test_parse_missing_code_key():
    r = parse_response('{"plan": "only a plan"}')
    assert not r.parse_ok
    assert r.raw == '{"plan": "only a plan"}'


MALFORMED = [
    "",
    "here is code: translate();",
    "{'plan': 'single quotes', 'code': 'x'}",
    '{"plan": "p"}',
    '{"code": "c"}',
    '{"plan": "", "code": "c"}',
    '{"plan": "p", "code": ""}',
    '{"plan": 3, "code": "c"}',
    '{"plan": "p", "code": ["list"]}',
    "[1, 2, 3]",
    '"just a string"',
    "42",
    "null",
    "{\"plan\": \"unterminated",
    "``` incomplete fence",
    "```json\nnot json\n```",
    "plan: p\ncode: c",
    "<response><plan>p</plan></response>",
    "{}",
    "\x00\x01 binary junk \xff",
]


@pytest.mark.parametrize("raw", MALFORMED)
def test_malformed_outputs_never_crash(raw):
    r = parse_response(raw)
    assert not r.parse_ok
    assert r.plan == "" and r.code == ""
    assert r.raw == raw


def test_parse_non_string_input():
    assert not parse_response(None).parse_ok
    assert not parse_response(42).parse_ok


# ------------------------------------------------------------------- replay


def make_transcript(tmp_path, entries):
    path = tmp_path / "replay.jsonl"
    lines = [json.dumps({"prompt_sha256": h, "response": r}) for h, r in entries]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


def test_replay_hit(tmp_path):
    prompt = ground("lift the path by 10 cm", SCENE, TRAJ)
    canned = '{"plan": "lift", "code": "translate(axis=\\"z\\", by=0.1);"}'
    cfg = BackendConfig(kind="replay",
                        transcript_path=make_transcript(tmp_path, [(prompt_hash(prompt), canned)]))
    r = complete(prompt, cfg)
    assert r.parse_ok
    assert r.plan == "lift"


def test_replay_miss_carries_hash(tmp_path):
    prompt = ground("lift", SCENE, TRAJ)
    cfg = BackendConfig(kind="replay", transcript_path=make_transcript(tmp_path, []))
    with pytest.raises(ReplayMiss) as err:
        complete(prompt, cfg)
    assert err.value.digest == prompt_hash(prompt)


def test_replay_last_entry_wins(tmp_path):
    prompt = ground("lift", SCENE, TRAJ)
    h = prompt_hash(prompt)
    cfg = BackendConfig(kind="replay", transcript_path=make_transcript(
        tmp_path, [(h, '{"plan": "old", "code": "x;"}'), (h, '{"plan": "new", "code": "x;"}')]
    ))
    assert complete(prompt, cfg).plan == "new"


def test_replay_rejects_bad_transcript(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"prompt_sha256": "abc"}\n', encoding="utf-8")
    cfg = BackendConfig(kind="replay", transcript_path=str(path))
    with pytest.raises(ValueError, match="response"):
        complete(ground("x", SCENE, TRAJ), cfg)


def test_replay_requires_path():
    with pytest.raises(ValueError, match="transcript_path"):
        complete(ground("x", SCENE, TRAJ), BackendConfig(kind="replay"))


# --------------------------------------------------------------------- http


class FakeTransport:
    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = []

    def __call__(self, url, payload, headers, timeout):
        self.calls.append({"url": url, "payload": payload, "headers": headers})
        return self.responses.pop(0)


def chat_body(content: str) -> str:
    return json.dumps({"choices": [{"message": {"content": content}}]})


GOOD = '{"plan": "p", "code": "translate(axis=\\"x\\", by=1);"}'


def http_cfg(**kw):
    defaults = dict(kind="http", endpoint="https://example.test/v1/chat", max_retries=3)
    defaults.update(kw)
    return BackendConfig(**defaults)


def test_http_success_round_trip(monkeypatch):
    monkeypatch.setenv("OVITA_API_KEY", "sk-test")
    transport = FakeTransport([(200, chat_body(GOOD))])
    r = complete(ground("x", SCENE, TRAJ), http_cfg(), transport=transport, sleep=lambda s: None)
    assert r.parse_ok
    call = transport.calls[0]
    assert call["payload"]["model"] == "gpt-4o"
    assert call["payload"]["temperature"] == 0.2
    assert [m["role"] for m in call["payload"]["messages"]] == ["system", "user"]
    assert call["headers"]["Authorization"] == "Bearer sk-test"


def test_http_retries_429_then_succeeds(monkeypatch):
    monkeypatch.setenv("OVITA_API_KEY", "sk-test")
    sleeps = []
    transport = FakeTransport([(429, "rate limited"), (200, chat_body(GOOD))])
    r = complete(ground("x", SCENE, TRAJ), http_cfg(), transport=transport,
                 sleep=sleeps.append)
    assert r.parse_ok
    assert len(transport.calls) == 2
    assert sleeps == [0.5]  # one backoff before the second attempt


def test_http_backoff_is_exponential(monkeypatch):
    monkeypatch.setenv("OVITA_API_KEY", "sk-test")
    sleeps = []
    transport = FakeTransport([(500, "a"), (503, "b"), (429, "c"), (200, chat_body(GOOD))])
    r = complete(ground("x", SCENE, TRAJ), http_cfg(), transport=transport, sleep=sleeps.append)
    assert r.parse_ok
    assert sleeps == [0.5, 1.0, 2.0]


def test_http_retries_exhausted(monkeypatch):
    monkeypatch.setenv("OVITA_API_KEY", "sk-test")
    transport = FakeTransport([(500, "x")] * 3)
    with pytest.raises(NetworkFailure, match="retries exhausted"):
        complete(ground("x", SCENE, TRAJ), http_cfg(max_retries=2),
                 transport=transport, sleep=lambda s: None)


def test_http_client_error_is_not_retried(monkeypatch):
    monkeypatch.setenv("OVITA_API_KEY", "sk-test")
    transport = FakeTransport([(400, "bad request")])
    with pytest.raises(NetworkFailure) as err:
        complete(ground("x", SCENE, TRAJ), http_cfg(), transport=transport, sleep=lambda s: None)
    assert err.value.status == 400
    assert len(transport.calls) == 1


def test_http_transport_error_is_retryable(monkeypatch):
    monkeypatch.setenv("OVITA_API_KEY", "sk-test")
    transport = FakeTransport([(None, "connection reset"), (200, chat_body(GOOD))])
    r = complete(ground("x", SCENE, TRAJ), http_cfg(), transport=transport, sleep=lambda s: None)
    assert r.parse_ok


def test_http_auth_missing(monkeypatch):
    monkeypatch.delenv("OVITA_API_KEY", raising=False)
    with pytest.raises(AuthMissing, match="OVITA_API_KEY"):
        complete(ground("x", SCENE, TRAJ), http_cfg(),
                 transport=FakeTransport([]), sleep=lambda s: None)


def test_http_malformed_envelope(monkeypatch):
    monkeypatch.setenv("OVITA_API_KEY", "sk-test")
    transport = FakeTransport([(200, '{"weird": true}')])
    with pytest.raises(NetworkFailure, match="malformed"):
        complete(ground("x", SCENE, TRAJ), http_cfg(), transport=transport, sleep=lambda s: None)


# ------------------------------------------------------------------ explain


def test_explain_prompt_carries_params_and_replay_round_trip(tmp_path):
    program = parse('let dx = 0.2;\ntranslate(axis="x", by=dx);')
    prompt = build_explain_prompt(program, "shift right by dx")
    assert "dx = 0.2" in prompt.user
    assert "translate" in prompt.user
    canned = "1) Methodology: shifts every waypoint. 2) Parameter values: dx = 0.2 meters. 3) Assumptions: x is forward."
    cfg = BackendConfig(kind="replay",
                        transcript_path=make_transcript(tmp_path, [(prompt_hash(prompt), canned)]))
    text = explain(program, "shift right by dx", cfg)
    assert "0.2" in text


def test_explain_prompt_empty_params():
    program = parse("scale_speed(factor=2);")
    assert program.params == {}
    prompt = build_explain_prompt(program, "double the speed")
    assert "none extracted" in prompt.user


def test_explain_auth_missing(monkeypatch):
    monkeypatch.delenv("OVITA_API_KEY", raising=False)
    program = parse("scale_speed(factor=2);")
    with pytest.raises(AuthMissing):
        explain(program, "p", http_cfg(), transport=FakeTransport([]), sleep=lambda s: None)


# ------------------------------------------------------------- configuration


def test_temperature_bounds():
    with pytest.raises(ValueError, match="temperature"):
        BackendConfig(temperature=1.5)
    with pytest.raises(ValueError, match="temperature"):
        BackendConfig(temperature=-0.1)
    assert BackendConfig(temperature=0.0).temperature == 0.0


def test_backend_kind_validated():
    with pytest.raises(ValueError, match="kind"):
        BackendConfig(kind="carrier-pigeon")


def test_backend_from_env():
    cfg = backend_from_env({
        "OVITA_BACKEND": "http",
        "OVITA_ENDPOINT": "https://example.test/chat",
        "OVITA_MODEL": "test-model",
        "OVITA_TEMPERATURE": "0.7",
    })
    assert cfg.kind == "http"
    assert cfg.endpoint == "https://example.test/chat"
    assert cfg.model == "test-model"
    assert cfg.temperature == 0.7

    replay = backend_from_env({"OVITA_REPLAY_PATH": "/tmp/t.jsonl"})
    assert replay.kind == "replay"
    assert replay.transcript_path == "/tmp/t.jsonl"
