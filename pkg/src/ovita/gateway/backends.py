"""Completion backends: live HTTP and deterministic replay.

The HTTP side speaks the common chat-completions JSON shape so any
compatible gateway works. The replay side is a content-addressed lookup
from prompt hash to canned response; a miss is a hard error, which is what
keeps offline tests honest - they can never quietly fall through to the
network.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from .grounding import GroundedPrompt

__all__ = [
    "AuthMissing",
    "NetworkFailure",
    "ReplayMiss",
    "BackendConfig",
    "ModelResponse",
    "prompt_hash",
    "parse_response",
    "ReplayBackend",
    "HttpBackend",
    "build_backend",
    "complete",
    "backend_from_env",
]

DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"
DEFAULT_MODEL = "gpt-4o"
RETRY_BASE_SECONDS = 0.5


class AuthMissing(RuntimeError):
    def __init__(self, env_var: str):
        self.env_var = env_var
        super().__init__(f"API key environment variable {env_var} is not set")


class NetworkFailure(RuntimeError):
    def __init__(self, detail: str, status: Optional[int] = None):
        self.status = status
        super().__init__(detail)


class ReplayMiss(KeyError):
    def __init__(self, digest: str):
        self.digest = digest
        super().__init__(
            f"no transcript entry for prompt sha256 {digest}; "
            "regenerate the replay fixture for this prompt"
        )


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "replay"  # "http" | "replay"
    endpoint: str = DEFAULT_ENDPOINT
    model: str = DEFAULT_MODEL
    temperature: float = 0.2
    api_key_env: str = "OVITA_API_KEY"
    timeout_seconds: float = 60.0
    max_retries: int = 3
    transcript_path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in ("http", "replay"):
            raise ValueError(f"backend kind must be 'http' or 'replay', got {self.kind!r}")
        if not (0.0 <= self.temperature <= 1.0):
            raise ValueError(f"temperature must be in [0, 1], got {self.temperature}")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class ModelResponse:
    raw: str
    plan: str
    code: str
    parse_ok: bool

    def to_dict(self) -> dict:
        return {"raw": self.raw, "plan": self.plan, "code": self.code, "parse_ok": self.parse_ok}


def prompt_hash(prompt: GroundedPrompt) -> str:
    """Content address of a prompt: sha256 over its two chat messages."""
    payload = json.dumps({"system": prompt.system, "user": prompt.user}, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _json_candidates(raw: str):
    text = raw.strip()
    # a fenced block takes priority: models love ```json wrappers
    if "```" in text:
        parts = text.split("```")
        for i in range(1, len(parts), 2):
            block = parts[i]
            if block.startswith("json"):
                block = block[4:]
            yield block.strip()
    yield text
    start, end = text.find("{"), text.rfind("}")
    if start != -1 and end > start:
        yield text[start : end + 1]


def parse_response(raw: str) -> ModelResponse:
    """Extract {"plan", "code"} from model output. Total: never raises."""
    if not isinstance(raw, str):
        return ModelResponse(raw="", plan="", code="", parse_ok=False)
    for candidate in _json_candidates(raw):
        try:
            obj = json.loads(candidate)
        except (json.JSONDecodeError, ValueError):
            continue
        if not isinstance(obj, dict):
            continue
        plan, code = obj.get("plan"), obj.get("code")
        if isinstance(plan, str) and isinstance(code, str) and plan.strip() and code.strip():
            return ModelResponse(raw=raw, plan=plan, code=code, parse_ok=True)
    return ModelResponse(raw=raw, plan="", code="", parse_ok=False)


class ReplayBackend:
    """Transcript-backed completions: JSON-lines of prompt hash -> response.

    Later entries for the same hash win, so a transcript can be extended by
    appending. Lookups are by exact content hash; any template or input
    change misses loudly instead of reusing a stale response.
    """

    def __init__(self, transcript_path: str):
        self.transcript_path = str(transcript_path)
        self._table: dict = {}
        text = Path(transcript_path).read_text(encoding="utf-8")
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{transcript_path}:{line_no}: not valid JSON: {e}")
            if "prompt_sha256" not in entry or "response" not in entry:
                raise ValueError(
                    f"{transcript_path}:{line_no}: entry needs prompt_sha256 and response"
                )
            self._table[entry["prompt_sha256"]] = entry["response"]

    def complete(self, prompt: GroundedPrompt) -> ModelResponse:
        digest = prompt_hash(prompt)
        if digest not in self._table:
            raise ReplayMiss(digest)
        return parse_response(self._table[digest])


def _default_transport(url: str, payload: dict, headers: dict, timeout: float):
    import requests

    try:
        resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
    except requests.RequestException as e:
        return None, str(e)
    return resp.status_code, resp.text


class HttpBackend:
    """One chat-completion round trip with bounded retries.

    Retries on 429, any 5xx, and transport-level failures, sleeping
    RETRY_BASE_SECONDS * 2^attempt between tries. The transport and sleeper
    are injectable so the retry contract is testable without a network.
    """

    def __init__(
        self,
        config: BackendConfig,
        transport: Optional[Callable] = None,
        sleep: Callable = time.sleep,
    ):
        self.config = config
        self.transport = transport or _default_transport
        self.sleep = sleep

    def complete(self, prompt: GroundedPrompt) -> ModelResponse:
        cfg = self.config
        api_key = os.environ.get(cfg.api_key_env)
        if not api_key:
            raise AuthMissing(cfg.api_key_env)
        payload = {
            "model": cfg.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "temperature": cfg.temperature,
        }
        headers = {
            "Authorization": f"Bearer {api_key}",
            "Content-Type": "application/json",
        }
        last_detail = "no attempt made"
        for attempt in range(cfg.max_retries + 1):
            status, body = self.transport(cfg.endpoint, payload, headers, cfg.timeout_seconds)
            if status == 200:
                return parse_response(_extract_content(body))
            retryable = status is None or status == 429 or 500 <= status < 600
            last_detail = f"status {status}: {body[:200]}" if status else f"transport error: {body}"
            if not retryable:
                raise NetworkFailure(last_detail, status=status)
            if attempt < cfg.max_retries:
                self.sleep(RETRY_BASE_SECONDS * (2**attempt))
        raise NetworkFailure(f"retries exhausted; last failure: {last_detail}",
                             status=None)


def _extract_content(body: str) -> str:
    try:
        obj = json.loads(body)
        content = obj["choices"][0]["message"]["content"]
    except (json.JSONDecodeError, KeyError, IndexError, TypeError):
        raise NetworkFailure(f"malformed completion body: {body[:200]}")
    if not isinstance(content, str):
        raise NetworkFailure("completion content is not a string")
    return content


def build_backend(
    config: BackendConfig,
    transport: Optional[Callable] = None,
    sleep: Callable = time.sleep,
):
    if config.kind == "replay":
        if not config.transcript_path:
            raise ValueError("replay backend needs transcript_path")
        return ReplayBackend(config.transcript_path)
    return HttpBackend(config, transport=transport, sleep=sleep)


def complete(
    prompt: GroundedPrompt,
    config: BackendConfig,
    transport: Optional[Callable] = None,
    sleep: Callable = time.sleep,
) -> ModelResponse:
    """One completion round trip against whichever backend config names."""
    return build_backend(config, transport=transport, sleep=sleep).complete(prompt)


def backend_from_env(environ=None) -> BackendConfig:
    """Build a config from OVITA_* environment variables.

    OVITA_BACKEND=http|replay (default replay), OVITA_ENDPOINT, OVITA_MODEL,
    OVITA_TEMPERATURE, OVITA_REPLAY_PATH, and the key variable OVITA_API_KEY
    (read at request time, not here).
    """
    env = os.environ if environ is None else environ
    kind = env.get("OVITA_BACKEND", "replay")
    return BackendConfig(
        kind=kind,
        endpoint=env.get("OVITA_ENDPOINT", DEFAULT_ENDPOINT),
        model=env.get("OVITA_MODEL", DEFAULT_MODEL),
        temperature=float(env.get("OVITA_TEMPERATURE", "0.2")),
        transcript_path=env.get("OVITA_REPLAY_PATH"),
    )
