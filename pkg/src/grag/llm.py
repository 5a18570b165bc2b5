"""LLM client abstraction with a deterministic mock for hermetic runs.

The remote client speaks the standard chat-completion wire shape and
retries transient failures with exponential backoff. The mock client is
a pure function of the request: it answers with the context line that
shares the most tokens with the question, which makes end-to-end
relevancy tests meaningful without any model.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from typing import Protocol

import requests

from .corpus import count_tokens, tokenize
from .errors import EndpointError, TransportError, ValidationError

ENDPOINT_ENV = "GRAG_LLM_ENDPOINT"
API_KEY_ENV = "GRAG_LLM_KEY"

# Status codes retried as transient before giving up.
_RETRYABLE_STATUS = {429, 500, 502, 503, 504}

NO_CONTEXT_ANSWER = "NO CONTEXT"


@dataclass(frozen=True)
class ChatRequest:
    user: str
    system: str = ""
    temperature: float = 0.0
    max_output_tokens: int = 512

    def __post_init__(self):
        if not self.user:
            raise ValidationError("user message must be non-empty")
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValidationError("max_output_tokens must be > 0")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    model_id: str
    usage: dict[str, int] = field(default_factory=dict)


class LLMClient(Protocol):
    def generate(self, req: ChatRequest) -> ChatResponse: ...


def _split_prompt(prompt: str) -> tuple[list[str], str]:
    """Parse the context lines and question out of a rendered prompt.

    Requires the default template markers: a line equal to "Context:"
    opens the context section, which runs until a line starting with
    "Question:"; the question is the remainder of that line. Custom
    templates must keep these markers for the mock to work.
    """
    lines = prompt.splitlines()
    context_lines: list[str] = []
    question = ""
    in_context = False
    for line in lines:
        stripped = line.strip()
        if stripped == "Context:":
            in_context = True
            continue
        if stripped.startswith("Question:"):
            in_context = False
            question = stripped[len("Question:"):].strip()
            continue
        if in_context and stripped:
            context_lines.append(stripped)
    if not question and not context_lines:
        question = prompt
    return context_lines, question


class MockLLMClient:
    """Deterministic stand-in: best-overlap context line, or NO CONTEXT."""

    model_id = "mock-overlap-v1"

    def generate(self, req: ChatRequest) -> ChatResponse:
        context_lines, question = _split_prompt(req.user)
        q_tokens = {t.lower() for t in tokenize(question)}
        best_line = None
        best_overlap = -1
        for line in context_lines:
            overlap = len(q_tokens & {t.lower() for t in tokenize(line)})
            if overlap > best_overlap:  # ties keep the first occurrence
                best_overlap = overlap
                best_line = line
        text = best_line if best_line is not None else NO_CONTEXT_ANSWER
        return ChatResponse(
            text=text,
            model_id=self.model_id,
            usage={
                "prompt_tokens": count_tokens(req.user),
                "output_tokens": count_tokens(text),
            },
        )


class RemoteLLMClient:
    """Chat-completion HTTP client with bounded exponential backoff.

    Wire schema: POST {"model", "messages": [{"role", "content"}],
    "temperature", "max_tokens"} -> {"choices": [{"message":
    {"content"}}]}. Endpoint and key come from the GRAG_LLM_ENDPOINT and
    GRAG_LLM_KEY environment variables unless given explicitly.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        model_id: str = "default",
        max_retries: int = 3,
        backoff_base: float = 0.5,
        timeout: float = 60.0,
        max_in_flight: int = 8,
    ):
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV, "")
        if not self.endpoint:
            raise ValidationError(f"no LLM endpoint configured (set {ENDPOINT_ENV})")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.model_id = model_id
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.timeout = timeout
        self._in_flight = threading.BoundedSemaphore(max_in_flight)

    def generate(self, req: ChatRequest) -> ChatResponse:
        messages = []
        if req.system:
            messages.append({"role": "system", "content": req.system})
        messages.append({"role": "user", "content": req.user})
        payload = {
            "model": self.model_id,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                with self._in_flight:
                    resp = requests.post(
                        self.endpoint, json=payload, headers=headers, timeout=self.timeout
                    )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code in _RETRYABLE_STATUS:
                last_error = EndpointError(
                    f"endpoint returned {resp.status_code}", status=resp.status_code
                )
                continue
            if resp.status_code != 200:
                raise EndpointError(
                    f"endpoint returned {resp.status_code}", status=resp.status_code
                )
            # Success is returned immediately; a request is never retried
            # after it has succeeded.
            body = resp.json()
            try:
                text = body["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as exc:
                raise EndpointError(f"malformed chat response: {exc}") from exc
            usage = body.get("usage", {})
            return ChatResponse(
                text=text,
                model_id=body.get("model", self.model_id),
                usage={
                    "prompt_tokens": usage.get("prompt_tokens", 0),
                    "output_tokens": usage.get("completion_tokens", 0),
                },
            )
        raise TransportError(
            f"chat endpoint failed after {self.max_retries + 1} attempts: {last_error}"
        )
