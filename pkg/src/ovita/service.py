"""HTTP API exposing feedback sessions to the companion UI and to scripts.

Endpoints (JSON in, JSON out):

- ``POST /sessions`` {trajectory, scene, profile} -> 201 {"id": ...}
- ``POST /sessions/{id}/turns`` {instruction, context} -> turn view bundle
- ``GET  /sessions/{id}`` -> full session transcript
- ``GET  /sessions/{id}/turns/{k}/view`` -> visualization bundle
- ``POST /sessions/{id}/turns/{k}/explain`` -> {"explanation": ...}
- ``GET  /healthz`` -> {"ok": true}

Every error body is ``{"code": <machine string>, "message": <human string>}``
with the code drawn from the closed set in ``ERROR_STATUS``. The API holds no
state beyond the sessions directory: committed turns survive a restart.

Turn creation is synchronous. A configurable timeout (default 120 s) bounds
the handler; the pipeline keeps running and commits its turn even when the
response times out, so a later GET sees the result. Writers are serialized
per session id; reads never block.
"""

from __future__ import annotations

import asyncio
import threading
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import session as sess
from .gateway import AuthMissing, BackendConfig, EmptyInstruction, NetworkFailure, ReplayMiss
from .model import ModelError
from .validation import SchemaViolation

__all__ = ["ApiError", "ERROR_STATUS", "ServiceConfig", "create_app", "serve"]

# closed error-code enum; the API reference documents exactly these
ERROR_STATUS: dict[str, int] = {
    "invalid_body": 400,
    "unknown_session": 404,
    "unknown_turn": 404,
    "session_closed": 409,
    "first_turn_must_be_original": 422,
    "invalid_context": 422,
    "empty_instruction": 422,
    "no_program": 422,
    "backend_error": 502,
    "turn_timeout": 504,
    "internal": 500,
}


class ApiError(Exception):
    """An error with a stable machine code and its HTTP status."""

    def __init__(self, code: str, message: str):
        assert code in ERROR_STATUS, f"unknown api error code {code!r}"
        self.code = code
        self.message = message
        self.status = ERROR_STATUS[code]
        super().__init__(f"{code}: {message}")

    def to_response(self) -> JSONResponse:
        return JSONResponse(
            status_code=self.status,
            content={"code": self.code, "message": self.message},
        )


def _map_exception(exc: Exception) -> ApiError:
    if isinstance(exc, ApiError):
        return exc
    if isinstance(exc, sess.UnknownSession):
        return ApiError("unknown_session", str(exc))
    if isinstance(exc, sess.UnknownTurn):
        return ApiError("unknown_turn", str(exc))
    if isinstance(exc, sess.SessionClosed):
        return ApiError("session_closed", str(exc))
    if isinstance(exc, sess.FirstTurnMustBeOriginal):
        return ApiError("first_turn_must_be_original", str(exc))
    if isinstance(exc, sess.InvalidContext):
        return ApiError("invalid_context", str(exc))
    if isinstance(exc, sess.NothingToExplain):
        return ApiError("no_program", str(exc))
    if isinstance(exc, EmptyInstruction):
        return ApiError("empty_instruction", str(exc))
    if isinstance(exc, (AuthMissing, NetworkFailure, ReplayMiss)):
        return ApiError("backend_error", str(exc))
    if isinstance(exc, (SchemaViolation, ModelError)):
        return ApiError("invalid_body", str(exc))
    # before 3.11 asyncio's timeout class is distinct from the builtin one
    if isinstance(exc, (FutureTimeout, TimeoutError, asyncio.TimeoutError)):
        return ApiError("turn_timeout", "the operation exceeded the configured timeout")
    return ApiError("internal", f"{type(exc).__name__}: {exc}")


@dataclass(frozen=True)
class ServiceConfig:
    sessions_dir: str
    backend: BackendConfig = field(default_factory=BackendConfig)
    cors_origins: tuple[str, ...] = ("*",)
    turn_timeout_seconds: float = 120.0
    ui_dir: Optional[str] = None  # built web client, mounted at /ui when set


def create_app(
    config: ServiceConfig,
    transport: Optional[Callable] = None,
    sleep: Optional[Callable[[float], None]] = None,
) -> FastAPI:
    """Build the application. transport/sleep are injectable for tests."""
    store = sess.SessionStore(config.sessions_dir)
    registry: dict[str, sess.Session] = {}
    registry_lock = threading.Lock()
    executor = ThreadPoolExecutor(max_workers=8, thread_name_prefix="ovita-turn")

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        executor.shutdown(wait=False)

    app = FastAPI(title="ovita", lifespan=lifespan, docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(config.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.store = store
    app.state.config = config

    def get_session(session_id: str) -> sess.Session:
        with registry_lock:
            cached = registry.get(session_id)
        if cached is not None:
            return cached
        try:
            loaded = store.load(session_id)
        except (sess.UnknownSession, sess.SessionError) as exc:
            raise _map_exception(exc)
        with registry_lock:
            return registry.setdefault(session_id, loaded)

    async def body_of(request: Request) -> dict[str, Any]:
        try:
            data = await request.json()
        except Exception:
            raise ApiError("invalid_body", "request body is not valid JSON")
        if not isinstance(data, dict):
            raise ApiError("invalid_body", "request body must be a JSON object")
        return data

    def parse_turn_index(raw: str, session: sess.Session) -> int:
        try:
            return int(raw)
        except ValueError:
            raise ApiError(
                "unknown_turn", f"turn {raw!r} does not exist"
            )

    async def in_worker(fn: Callable[[], Any]) -> Any:
        """Run fn on the worker pool without blocking the event loop.

        On timeout the worker thread keeps going (threads cannot be
        interrupted); its session lock still guards the next writer.
        """
        future = executor.submit(fn)
        try:
            return await asyncio.wait_for(
                asyncio.wrap_future(future), timeout=config.turn_timeout_seconds
            )
        except Exception as exc:
            raise _map_exception(exc)

    @app.exception_handler(ApiError)
    async def on_api_error(request: Request, exc: ApiError):
        return exc.to_response()

    @app.exception_handler(Exception)
    async def on_unexpected(request: Request, exc: Exception):
        return _map_exception(exc).to_response()

    @app.get("/healthz")
    async def healthz():
        return {"ok": True}

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        data = await body_of(request)
        for key in ("trajectory", "scene", "profile"):
            if key not in data:
                raise ApiError("invalid_body", f"missing key: {key}")
        try:
            session = sess.start(
                data["trajectory"], data["scene"], data["profile"], store=store
            )
        except (SchemaViolation, ModelError) as exc:
            raise _map_exception(exc)
        with registry_lock:
            registry[session.id] = session
        return {"id": session.id}

    @app.post("/sessions/{session_id}/turns")
    async def create_turn(session_id: str, request: Request):
        data = await body_of(request)
        if "instruction" not in data:
            raise ApiError("invalid_body", "missing key: instruction")
        instruction = data["instruction"]
        if not isinstance(instruction, str):
            raise ApiError("invalid_body", "instruction must be a string")
        context = data.get("context", sess.CONTEXT_ORIGINAL)
        session = get_session(session_id)

        def run() -> sess.Turn:
            with store.lock_for(session_id):
                return sess.adapt(
                    session,
                    instruction,
                    context,
                    config.backend,
                    store=store,
                    transport=transport,
                    sleep=sleep,
                )

        turn = await in_worker(run)
        return sess.visualize_payload(session, turn.index)

    @app.get("/sessions/{session_id}")
    async def get_transcript(session_id: str):
        return sess.session_to_dict(get_session(session_id))

    @app.get("/sessions/{session_id}/turns/{turn_index}/view")
    async def get_view(session_id: str, turn_index: str):
        session = get_session(session_id)
        try:
            return sess.visualize_payload(session, parse_turn_index(turn_index, session))
        except sess.UnknownTurn as exc:
            raise _map_exception(exc)

    @app.post("/sessions/{session_id}/turns/{turn_index}/explain")
    async def explain(session_id: str, turn_index: str):
        session = get_session(session_id)
        k = parse_turn_index(turn_index, session)

        def run() -> str:
            with store.lock_for(session_id):
                return sess.explain_turn(
                    session,
                    k,
                    config.backend,
                    store=store,
                    transport=transport,
                    sleep=sleep,
                )

        return {"explanation": await in_worker(run)}

    if config.ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=config.ui_dir, html=True), name="ui")

    return app


def serve(
    config: ServiceConfig,
    host: str = "127.0.0.1",
    port: int = 8080,
    transport: Optional[Callable] = None,
) -> None:
    """Run the API under uvicorn. Blocks until interrupted."""
    import uvicorn

    app = create_app(config, transport=transport)
    uvicorn.run(app, host=host, port=port, log_level="info")
