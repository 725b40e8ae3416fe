"""Chat-completion interface with per-role model bindings.

Backends: a live HTTP backend (the only place in the engine that may touch
the network), a scripted backend replaying canned transcripts for
deterministic tests, and a recording wrapper that captures live exchanges
into a transcript for later replay.
"""
from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError, ProviderError, ReplayDivergence
from .roles import AgentRole

Message = tuple[str, str]  # (speaker, text)


@dataclass
class RoleBinding:
    role: AgentRole
    model_id: str
    endpoint: str = ""
    params: dict[str, Any] = field(default_factory=dict)


@dataclass
class ChatExchange:
    role: AgentRole
    request_messages: list[Message]
    response_text: str
    latency_ms: float
    tokens_in: int
    tokens_out: int


def render_request(role: AgentRole, messages: list[Message]) -> str:
    lines = [f"role: {role.value}"]
    lines.extend(f"{speaker}: {text}" for speaker, text in messages)
    return "\n".join(lines)


def normalize(text: str) -> str:
    """Collapse whitespace so volatile formatting never breaks matching."""
    return " ".join(text.split())


@dataclass
class TranscriptEntry:
    matcher: str  # substring over the whitespace-normalized request
    response: str


@dataclass
class ScriptedTranscript:
    entries: list[TranscriptEntry] = field(default_factory=list)
    mode: str = "strict_sequence"  # strict_sequence | pattern_match

    def add(self, matcher: str, response: str) -> "ScriptedTranscript":
        self.entries.append(TranscriptEntry(matcher, response))
        return self


def save_transcript(path: str | Path, transcript: ScriptedTranscript) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"transcript_mode": transcript.mode}) + "\n")
        for entry in transcript.entries:
            fh.write(json.dumps({"matcher": entry.matcher, "response": entry.response},
                                ensure_ascii=False) + "\n")


def load_transcript(path: str | Path) -> ScriptedTranscript:
    transcript = ScriptedTranscript()
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            if "transcript_mode" in record:
                transcript.mode = record["transcript_mode"]
            else:
                transcript.add(record["matcher"], record["response"])
    return transcript


class ScriptedBackend:
    """Serves responses from a transcript; performs zero network operations."""

    def __init__(self, transcript: ScriptedTranscript):
        self.transcript = transcript
        self._cursor = 0
        self._lock = threading.Lock()

    def send(self, binding: RoleBinding, request_text: str) -> str:
        request_norm = normalize(request_text)
        with self._lock:
            if self.transcript.mode == "strict_sequence":
                if self._cursor >= len(self.transcript.entries):
                    raise ReplayDivergence(
                        f"transcript exhausted; unmatched request: {request_norm[:200]!r}"
                    )
                entry = self.transcript.entries[self._cursor]
                if normalize(entry.matcher) not in request_norm:
                    raise ReplayDivergence(
                        f"sequence violation at entry {self._cursor}: "
                        f"expected request containing {entry.matcher!r}, "
                        f"got {request_norm[:200]!r}"
                    )
                self._cursor += 1
                return entry.response
            for entry in self.transcript.entries:
                if normalize(entry.matcher) in request_norm:
                    return entry.response
            raise ReplayDivergence(f"no transcript entry matches: {request_norm[:200]!r}")

    def remaining(self) -> int:
        """Unconsumed entries; nonzero at session end is a test failure in strict mode."""
        if self.transcript.mode != "strict_sequence":
            return 0
        return len(self.transcript.entries) - self._cursor

    def assert_exhausted(self) -> None:
        left = self.remaining()
        if left:
            raise AssertionError(f"{left} scripted entries left unconsumed")


class HttpBackend:
    """Live chat-completion backend; retries transient transport failures."""

    def __init__(
        self,
        transport: Callable[[str, dict[str, str], dict[str, Any]], str] | None = None,
        max_retries: int = 3,
        backoff_s: float = 0.2,
    ):
        self.transport = transport or _httpx_transport
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.calls = 0

    def send(self, binding: RoleBinding, request_text: str) -> str:
        headers = _auth_headers(binding)
        payload = {
            "model": binding.model_id,
            "input": request_text,
            "params": {k: v for k, v in binding.params.items() if k != "auth_env"},
        }
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            self.calls += 1
            try:
                return self.transport(binding.endpoint, headers, payload)
            except TransientTransportError as exc:
                last_error = exc
                if attempt < self.max_retries:
                    time.sleep(self.backoff_s * (2**attempt))
        raise ProviderError(
            f"transport failed after {self.max_retries + 1} attempts: {last_error}",
            retryable=False,
        )


class TransientTransportError(Exception):
    """Raised by transports for failures worth retrying."""


def _auth_headers(binding: RoleBinding) -> dict[str, str]:
    # Secrets come from the environment only; transcripts never see them.
    import os

    headers = {"content-type": "application/json"}
    env_name = binding.params.get("auth_env")
    if env_name:
        secret = os.environ.get(env_name, "")
        if secret:
            headers["authorization"] = f"Bearer {secret}"
    return headers


def _httpx_transport(url: str, headers: dict[str, str], payload: dict[str, Any]) -> str:
    import httpx

    try:
        response = httpx.post(url, headers=headers, json=payload, timeout=60.0)
    except httpx.TransportError as exc:
        raise TransientTransportError(str(exc)) from exc
    if response.status_code >= 500:
        raise TransientTransportError(f"server error {response.status_code}")
    if response.status_code != 200:
        raise ProviderError(f"endpoint returned {response.status_code}", retryable=False)
    body = response.json()
    return body.get("output", body.get("response", ""))


class RecordingBackend:
    """Wraps a live backend and captures every exchange into a transcript."""

    def __init__(self, inner):
        self.inner = inner
        self.transcript = ScriptedTranscript(mode="strict_sequence")

    def send(self, binding: RoleBinding, request_text: str) -> str:
        response = self.inner.send(binding, request_text)
        self.transcript.add(normalize(request_text), response)
        return response


class Provider:
    """Uniform completion surface over a backend, with usage accounting."""

    def __init__(
        self,
        bindings: dict[AgentRole, RoleBinding],
        backend,
        event_sink: Callable[[str, dict[str, Any]], None] | None = None,
    ):
        self.bindings = dict(bindings)
        self.backend = backend
        self.event_sink = event_sink
        self._lock = threading.Lock()
        self.totals = {"provider_calls": 0, "tokens_in": 0, "tokens_out": 0, "latency_ms": 0.0}

    def complete(self, role: AgentRole, messages: list[Message]) -> ChatExchange:
        binding = self.bindings.get(role)
        if binding is None:
            raise ConfigError(f"no model binding for role {role.value!r}")
        request_text = render_request(role, messages)
        live = isinstance(self.backend, (HttpBackend, RecordingBackend))
        start = time.monotonic()
        response = self.backend.send(binding, request_text)
        latency_ms = (time.monotonic() - start) * 1000.0 if live else 0.0
        exchange = ChatExchange(
            role=role,
            request_messages=list(messages),
            response_text=response,
            latency_ms=latency_ms,
            tokens_in=len(request_text.split()),
            tokens_out=len(response.split()),
        )
        with self._lock:
            self.totals["provider_calls"] += 1
            self.totals["tokens_in"] += exchange.tokens_in
            self.totals["tokens_out"] += exchange.tokens_out
            self.totals["latency_ms"] += latency_ms
        if self.event_sink is not None:
            self.event_sink(
                "exchange",
                {
                    "role": role.value,
                    "model_id": binding.model_id,
                    "request_text": request_text,
                    "response_text": response,
                    "tokens_in": exchange.tokens_in,
                    "tokens_out": exchange.tokens_out,
                    "latency_ms": latency_ms,
                },
            )
        return exchange

    def usage_snapshot(self) -> dict[str, Any]:
        with self._lock:
            return dict(self.totals)
