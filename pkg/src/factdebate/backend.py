"""Uniform gateway to text-completion models.

Two implementations share one interface: a remote chat-completion HTTP client
with bounded retries, and a scripted backend whose replies are a pure function
of the request (used for all offline tests and replay).
"""
from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import httpx

ENV_API_KEY = "FACTDEBATE_API_KEY"
ENV_BASE_URL = "FACTDEBATE_BASE_URL"
ENV_MODEL_ID = "FACTDEBATE_MODEL_ID"

DEFAULT_TIMEOUT_S = 120.0
DEFAULT_ATTEMPTS = 3
DEFAULT_BACKOFF_S = 1.0
DEFAULT_MAX_IN_FLIGHT = 4


class BackendError(RuntimeError):
    pass


class Timeout(BackendError):
    pass


class RateLimited(BackendError):
    def __init__(self, retry_after: float | None = None):
        self.retry_after = retry_after
        super().__init__(f"rate limited (retry_after={retry_after})")


class MalformedResponse(BackendError):
    pass


class Unauthorized(BackendError):
    pass


@dataclass(frozen=True)
class CompletionRequest:
    role_id: str
    system_prompt: str
    user_prompt: str
    temperature: float = 0.0
    max_tokens: int = 2048
    model_id: str = ""

    def __post_init__(self):
        if not self.system_prompt or not self.user_prompt:
            raise ValueError("prompts must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature out of range: {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: int = 0


class Backend(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionResult: ...
    def describe(self) -> dict: ...


@dataclass(frozen=True)
class ScriptRule:
    role_id: str
    match_substring: str
    response: str

    def matches(self, request: CompletionRequest) -> bool:
        if self.role_id and self.role_id != request.role_id:
            return False
        return self.match_substring in request.user_prompt


@dataclass
class ScriptedBackend:
    """Deterministic backend: first matching rule wins, zero latency."""

    rules: list[ScriptRule] = field(default_factory=list)
    default_response: str = ""

    @classmethod
    def from_json(cls, path: str | Path) -> "ScriptedBackend":
        doc = json.loads(Path(path).read_text())
        rules = [
            ScriptRule(
                role_id=r.get("role_id", ""),
                match_substring=r.get("match_substring", ""),
                response=r["response"],
            )
            for r in doc.get("rules", [])
        ]
        return cls(rules=rules, default_response=doc.get("default_response", ""))

    def complete(self, request: CompletionRequest) -> CompletionResult:
        for rule in self.rules:
            if rule.matches(request):
                return CompletionResult(text=rule.response)
        return CompletionResult(text=self.default_response)

    def describe(self) -> dict:
        return {"kind": "scripted", "n_rules": len(self.rules)}


class RemoteBackend:
    """Chat-completion HTTP client with bounded retries and a concurrency cap."""

    RETRYABLE_STATUS = {429, 500, 502, 503, 504}

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        model_id: str | None = None,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        attempts: int = DEFAULT_ATTEMPTS,
        backoff_s: float = DEFAULT_BACKOFF_S,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = (base_url or os.environ.get(ENV_BASE_URL, "")).rstrip("/")
        self.api_key = api_key or os.environ.get(ENV_API_KEY, "")
        self.model_id = model_id or os.environ.get(ENV_MODEL_ID, "")
        if not self.base_url:
            raise BackendError(f"no base URL configured (set {ENV_BASE_URL})")
        self.timeout_s = timeout_s
        self.attempts = attempts
        self.backoff_s = backoff_s
        self._sleep = sleep
        self._gate = threading.Semaphore(max_in_flight)
        self._client = httpx.Client(timeout=timeout_s)

    def complete(self, request: CompletionRequest) -> CompletionResult:
        payload = {
            "model": request.model_id or self.model_id,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_error: BackendError | None = None
        for attempt in range(self.attempts):
            if attempt:
                self._sleep(self.backoff_s * (2 ** (attempt - 1)))
            started = time.monotonic()
            try:
                with self._gate:
                    resp = self._client.post(
                        f"{self.base_url}/chat/completions", json=payload, headers=headers
                    )
            except httpx.TimeoutException as exc:
                last_error = Timeout(str(exc))
                continue
            except httpx.HTTPError as exc:
                last_error = BackendError(str(exc))
                continue

            if resp.status_code in (401, 403):
                raise Unauthorized(f"HTTP {resp.status_code}")
            if resp.status_code in self.RETRYABLE_STATUS:
                if resp.status_code == 429:
                    retry_after = resp.headers.get("Retry-After")
                    last_error = RateLimited(float(retry_after) if retry_after else None)
                else:
                    last_error = BackendError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")

            latency_ms = int((time.monotonic() - started) * 1000)
            try:
                body = resp.json()
                text = body["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise MalformedResponse(f"unexpected response body: {exc}") from exc
            usage = body.get("usage", {}) or {}
            return CompletionResult(
                text=text,
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
                latency_ms=latency_ms,
            )
        raise last_error or BackendError("request failed")

    def describe(self) -> dict:
        return {"kind": "remote", "base_url": self.base_url, "model_id": self.model_id}


def complete(backend: Backend, request: CompletionRequest) -> CompletionResult:
    return backend.complete(request)
