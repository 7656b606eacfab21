"""Model gateway: grounded prompts in, plan-and-code responses out.

ground() builds the prompt (pure), complete() runs one round trip against
an HTTP or replay backend, parse_response() extracts the plan/code pair,
and explain() asks the model to describe a policy in operator terms.
"""

from __future__ import annotations

import time
from typing import Callable, Optional

from ..policy import PolicyProgram
from .backends import (
    AuthMissing,
    BackendConfig,
    HttpBackend,
    ModelResponse,
    NetworkFailure,
    ReplayBackend,
    ReplayMiss,
    backend_from_env,
    build_backend,
    complete,
    parse_response,
    prompt_hash,
)
from .grounding import (
    EmptyInstruction,
    GroundedPrompt,
    build_explain_prompt,
    function_definitions_text,
    ground,
)

__all__ = [
    "AuthMissing",
    "BackendConfig",
    "EmptyInstruction",
    "GroundedPrompt",
    "HttpBackend",
    "ModelResponse",
    "NetworkFailure",
    "ReplayBackend",
    "ReplayMiss",
    "backend_from_env",
    "build_backend",
    "build_explain_prompt",
    "complete",
    "explain",
    "function_definitions_text",
    "ground",
    "parse_response",
    "prompt_hash",
]


def explain(
    program: PolicyProgram,
    plan: str,
    config: BackendConfig,
    transport: Optional[Callable] = None,
    sleep: Callable = time.sleep,
) -> str:
    """Ask the backend for a plain-language explanation of a policy."""
    prompt = build_explain_prompt(program, plan)
    response = complete(prompt, config, transport=transport, sleep=sleep)
    return response.raw
