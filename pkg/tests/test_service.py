"""HTTP API contract: endpoints, stable error codes, persistence across restarts."""

import json
import re

import pytest
from fastapi.testclient import TestClient

from ovita.gateway import BackendConfig
from ovita.model import RobotProfile, Scene, SceneObject, Trajectory, UnboundedWorkspace
from ovita.service import ERROR_STATUS, ServiceConfig, create_app

BASE = Trajectory.from_rows([[0, 0, 0, 1], [1, 0, 0, 1], [2, 0, 0, 1], [3, 0, 0, 1]])
SCENE = Scene(objects=(SceneObject("cup", (1.0, 1.0, 0.0), (0.1, 0.1, 0.2)),))
FREE = RobotProfile(workspace=UnboundedWorkspace(), v_max=10.0, enforce_csm=False)

SESSION_BODY = {
    "trajectory": BASE.to_dict(),
    "scene": SCENE.to_dict(),
    "profile": FREE.to_dict(),
}


def payload(plan, code):
    return json.dumps({"plan": plan, "code": code})


def chat_body(content):
    return json.dumps({"choices": [{"message": {"content": content}}]})


class FakeTransport:
    """Serves scripted model payloads in order."""

    def __init__(self, *contents):
        self.queue = [(200, chat_body(c)) for c in contents]

    def __call__(self, url, body, headers, timeout):
        return self.queue.pop(0)


@pytest.fixture()
def make_client(tmp_path, monkeypatch):
    monkeypatch.setenv("OVITA_API_KEY", "sk-test")

    def factory(*contents, sessions_dir=None, **cfg_kw):
        config = ServiceConfig(
            sessions_dir=str(sessions_dir or tmp_path / "sessions"),
            backend=BackendConfig(kind="http", endpoint="https://example.test/chat"),
            **cfg_kw,
        )
        app = create_app(config, transport=FakeTransport(*contents), sleep=lambda s: None)
        return TestClient(app)

    return factory


def test_healthz(make_client):
    assert make_client().get("/healthz").json() == {"ok": True}


def test_create_session(make_client):
    res = make_client().post("/sessions", json=SESSION_BODY)
    assert res.status_code == 201
    assert isinstance(res.json()["id"], str)


def test_create_session_missing_key(make_client):
    res = make_client().post("/sessions", json={"trajectory": BASE.to_dict()})
    assert res.status_code == 400
    body = res.json()
    assert body["code"] == "invalid_body"
    assert "scene" in body["message"]


def test_create_session_schema_violation_path(make_client):
    bad = dict(SESSION_BODY, trajectory={"waypoints": [[0, 0, 0]]})
    res = make_client().post("/sessions", json=bad)
    assert res.status_code == 400
    assert res.json()["code"] == "invalid_body"
    assert "waypoints" in res.json()["message"]


def test_body_not_json(make_client):
    client = make_client()
    res = client.post("/sessions", content=b"not json at all",
                      headers={"content-type": "application/json"})
    assert res.status_code == 400
    assert res.json()["code"] == "invalid_body"


def test_turn_round_trip(make_client):
    client = make_client(payload("lift", 'let dz = 0.5;\ntranslate(axis="z", by=dz);'))
    sid = client.post("/sessions", json=SESSION_BODY).json()["id"]
    res = client.post(f"/sessions/{sid}/turns",
                      json={"instruction": "lift the path", "context": "original"})
    assert res.status_code == 200
    view = res.json()
    assert view["turn_index"] == 0
    assert view["plan"] == "lift"
    assert view["params"] == {"dz": 0.5}
    assert view["error"] is None
    assert view["initial"] == BASE.to_dict()
    zs = [w[2] for w in view["adapted"]["waypoints"]]
    assert zs == [0.5] * 4


def test_first_turn_current_is_422(make_client):
    client = make_client(payload("p", "scale_speed(factor=1);"))
    sid = client.post("/sessions", json=SESSION_BODY).json()["id"]
    res = client.post(f"/sessions/{sid}/turns",
                      json={"instruction": "slow", "context": "current"})
    assert res.status_code == 422
    assert res.json()["code"] == "first_turn_must_be_original"


def test_invalid_context_code(make_client):
    client = make_client()
    sid = client.post("/sessions", json=SESSION_BODY).json()["id"]
    res = client.post(f"/sessions/{sid}/turns",
                      json={"instruction": "x", "context": "both"})
    assert res.status_code == 422
    assert res.json()["code"] == "invalid_context"


def test_empty_instruction_code(make_client):
    client = make_client()
    sid = client.post("/sessions", json=SESSION_BODY).json()["id"]
    res = client.post(f"/sessions/{sid}/turns", json={"instruction": "   "})
    assert res.status_code == 422
    assert res.json()["code"] == "empty_instruction"


def test_unknown_session_404(make_client):
    client = make_client()
    assert client.get("/sessions/deadbeef").status_code == 404
    assert client.get("/sessions/deadbeef").json()["code"] == "unknown_session"
    res = client.post("/sessions/deadbeef/turns", json={"instruction": "x"})
    assert res.status_code == 404


def test_unknown_turn_404(make_client):
    client = make_client()
    sid = client.post("/sessions", json=SESSION_BODY).json()["id"]
    res = client.get(f"/sessions/{sid}/turns/0/view")
    assert res.status_code == 404
    assert res.json()["code"] == "unknown_turn"
    assert client.get(f"/sessions/{sid}/turns/abc/view").status_code == 404


def test_transcript_endpoint(make_client):
    client = make_client(payload("p", 'translate(axis="z", by=0.5);'))
    sid = client.post("/sessions", json=SESSION_BODY).json()["id"]
    client.post(f"/sessions/{sid}/turns", json={"instruction": "lift"})
    doc = client.get(f"/sessions/{sid}").json()
    assert doc["id"] == sid
    assert doc["status"] == "active"
    assert len(doc["turns"]) == 1
    assert doc["turns"][0]["instruction"] == "lift"


def test_view_endpoint_matches_turn_response(make_client):
    client = make_client(payload("p", 'translate(axis="z", by=0.5);'))
    sid = client.post("/sessions", json=SESSION_BODY).json()["id"]
    posted = client.post(f"/sessions/{sid}/turns", json={"instruction": "lift"}).json()
    fetched = client.get(f"/sessions/{sid}/turns/0/view").json()
    assert posted == fetched


def test_failed_turn_is_200_with_error_record(make_client):
    client = make_client(payload("p", "1 / 0;"))
    sid = client.post("/sessions", json=SESSION_BODY).json()["id"]
    res = client.post(f"/sessions/{sid}/turns", json={"instruction": "x"})
    assert res.status_code == 200
    view = res.json()
    assert view["error"]["stage"] == "policy_execute"
    assert view["adapted"] == view["initial"]


def test_restart_preserves_committed_turns(make_client, tmp_path):
    sessions_dir = tmp_path / "persist"
    client = make_client(payload("p", 'translate(axis="z", by=0.5);'),
                         sessions_dir=sessions_dir)
    sid = client.post("/sessions", json=SESSION_BODY).json()["id"]
    client.post(f"/sessions/{sid}/turns", json={"instruction": "lift"})

    # a brand-new app over the same directory serves the same transcript
    reborn = make_client(sessions_dir=sessions_dir)
    doc = reborn.get(f"/sessions/{sid}").json()
    assert len(doc["turns"]) == 1
    view = reborn.get(f"/sessions/{sid}/turns/0/view").json()
    assert [w[2] for w in view["adapted"]["waypoints"]] == [0.5] * 4


def test_turn_after_restart_continues_chain(make_client, tmp_path):
    sessions_dir = tmp_path / "persist2"
    client = make_client(payload("p", 'translate(axis="z", by=0.5);'),
                         sessions_dir=sessions_dir)
    sid = client.post("/sessions", json=SESSION_BODY).json()["id"]
    client.post(f"/sessions/{sid}/turns", json={"instruction": "lift"})

    reborn = make_client(payload("q", 'translate(axis="y", by=0.25);'),
                         sessions_dir=sessions_dir)
    res = reborn.post(f"/sessions/{sid}/turns",
                      json={"instruction": "now left", "context": "current"})
    view = res.json()
    assert view["turn_index"] == 1
    assert [w[2] for w in view["adapted"]["waypoints"]] == [0.5] * 4
    assert [w[1] for w in view["adapted"]["waypoints"]] == [0.25] * 4


def test_explain_endpoint(make_client, tmp_path):
    # first turn via http transport, then explain via replay transcript:
    # probe the miss to learn the digest, seed the file, ask again
    client = make_client(payload("lift by dz", 'let dz = 0.5;\ntranslate(axis="z", by=dz);'))
    sid = client.post("/sessions", json=SESSION_BODY).json()["id"]
    client.post(f"/sessions/{sid}/turns", json={"instruction": "lift"})

    store_dir = client.app.state.config.sessions_dir
    transcript = tmp_path / "explain.jsonl"
    transcript.write_text("", encoding="utf-8")
    replay_cfg = ServiceConfig(
        sessions_dir=store_dir,
        backend=BackendConfig(kind="replay", transcript_path=str(transcript)),
    )
    replay_client = TestClient(create_app(replay_cfg))

    miss = replay_client.post(f"/sessions/{sid}/turns/0/explain")
    assert miss.status_code == 502
    assert miss.json()["code"] == "backend_error"
    digest = re.search(r"[0-9a-f]{64}", miss.json()["message"]).group(0)

    canned = "1) Methodology: translate. 2) Parameter values: dz = 0.5 m. 3) Assumptions: none."
    transcript.write_text(
        json.dumps({"prompt_sha256": digest, "response": canned}) + "\n", encoding="utf-8"
    )
    res = replay_client.post(f"/sessions/{sid}/turns/0/explain")
    assert res.status_code == 200
    assert "0.5" in res.json()["explanation"]
    # cached on the turn now
    view = replay_client.get(f"/sessions/{sid}/turns/0/view").json()
    assert view["explanation"] == res.json()["explanation"]


def test_explain_failed_turn_code(make_client):
    # a parse-stage failure leaves no program behind; execution-stage
    # failures keep their parsed program and stay explainable
    client = make_client(payload("p", "let x = ;"))
    sid = client.post("/sessions", json=SESSION_BODY).json()["id"]
    client.post(f"/sessions/{sid}/turns", json={"instruction": "x"})
    res = client.post(f"/sessions/{sid}/turns/0/explain")
    assert res.status_code == 422
    assert res.json()["code"] == "no_program"


def test_turn_timeout_code(make_client, tmp_path, monkeypatch):
    monkeypatch.setenv("OVITA_API_KEY", "sk-test")

    import time

    def slow_transport(url, body, headers, timeout):
        time.sleep(0.3)
        return (200, chat_body(payload("p", "scale_speed(factor=1);")))

    config = ServiceConfig(
        sessions_dir=str(tmp_path / "slow"),
        backend=BackendConfig(kind="http", endpoint="https://example.test/chat"),
        turn_timeout_seconds=0.05,
    )
    client = TestClient(create_app(config, transport=slow_transport))
    sid = client.post("/sessions", json=SESSION_BODY).json()["id"]
    res = client.post(f"/sessions/{sid}/turns", json={"instruction": "x"})
    assert res.status_code == 504
    assert res.json()["code"] == "turn_timeout"
    # the worker still commits the turn; wait for it, then read it back
    deadline = time.time() + 5
    while time.time() < deadline:
        if client.get(f"/sessions/{sid}").json()["turns"]:
            break
        time.sleep(0.02)
    assert len(client.get(f"/sessions/{sid}").json()["turns"]) == 1


def test_error_code_table_is_closed():
    assert set(ERROR_STATUS) == {
        "invalid_body", "unknown_session", "unknown_turn", "session_closed",
        "first_turn_must_be_original", "invalid_context", "empty_instruction",
        "no_program", "backend_error", "turn_timeout", "internal",
    }
    assert all(100 <= s <= 599 for s in ERROR_STATUS.values())


def test_cors_headers(make_client, tmp_path, monkeypatch):
    monkeypatch.setenv("OVITA_API_KEY", "sk-test")
    config = ServiceConfig(
        sessions_dir=str(tmp_path / "cors"),
        cors_origins=("http://localhost:5173",),
    )
    client = TestClient(create_app(config))
    res = client.get("/healthz", headers={"Origin": "http://localhost:5173"})
    assert res.headers.get("access-control-allow-origin") == "http://localhost:5173"


def test_ui_assets_mounted_when_configured(make_client, tmp_path):
    ui = tmp_path / "ui"
    ui.mkdir()
    (ui / "index.html").write_text("<!doctype html><title>viewer</title>")
    client = make_client(ui_dir=str(ui))
    res = client.get("/ui/")
    assert res.status_code == 200
    assert "viewer" in res.text
    # no ui_dir, no mount
    assert make_client().get("/ui/").status_code == 404
