"""Uniform chat-completion access with token accounting, retries, and record/replay.

All network transport lives in this module. Everything above it talks to an
LlmGateway, which in replay mode serves recorded exchanges and performs no
transport at all, making pipelines deterministic for testing.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import requests

logger = logging.getLogger(__name__)

PROVIDERS = ("openai-compatible", "gemini-compatible", "replay")

RETRY_ATTEMPTS = 3
RETRY_BACKOFF_S = (1.0, 2.0, 4.0)
DEFAULT_IN_FLIGHT_LIMIT = 4

# Characters-per-token heuristic for providers that omit usage fields.
_CHARS_PER_TOKEN = 4


class GatewayError(Exception):
    pass


class TransientTransportError(GatewayError):
    """A failure worth retrying: connection errors, HTTP 429 and 5xx."""


class ReplayExhaustedError(GatewayError):
    pass


class ReplayMismatchError(GatewayError):
    pass


@dataclass(frozen=True)
class ModelEndpoint:
    provider: str
    model_name: str
    base_url: str = ""
    reasoning_effort: Optional[str] = None
    temperature: Optional[float] = None
    max_output_tokens: Optional[int] = None
    credential_env_var: str = ""
    transcript_path: Optional[str] = None  # replay provider only

    def __post_init__(self):
        if self.provider not in PROVIDERS:
            raise ValueError(f"unknown provider {self.provider!r}")
        if self.temperature is not None and not (0.0 <= self.temperature <= 2.0):
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_output_tokens is not None and self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")
        if self.provider == "replay":
            if not self.transcript_path:
                raise ValueError("replay provider requires a transcript_path")
            if self.credential_env_var:
                raise ValueError("replay provider takes no credential")


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int = 0
    output_tokens: int = 0
    total_tokens: int = 0
    estimated: bool = False

    def __post_init__(self):
        if min(self.input_tokens, self.output_tokens, self.total_tokens) < 0:
            raise ValueError("token counts must be nonnegative")
        if self.total_tokens != self.input_tokens + self.output_tokens:
            raise ValueError("total_tokens must equal input_tokens + output_tokens")

    @classmethod
    def of(cls, input_tokens: int, output_tokens: int, estimated: bool = False) -> "TokenUsage":
        return cls(input_tokens, output_tokens, input_tokens + output_tokens, estimated)

    def to_dict(self) -> dict:
        return {
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "total_tokens": self.total_tokens,
            "estimated": self.estimated,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TokenUsage":
        return cls(
            int(obj.get("input_tokens", 0)),
            int(obj.get("output_tokens", 0)),
            int(obj.get("total_tokens", 0)),
            bool(obj.get("estimated", False)),
        )


@dataclass(frozen=True)
class ChatExchange:
    system_text: str
    user_text: str
    response_text: str
    usage: TokenUsage
    latency_ms: int = 0
    attempt_count: int = 1

    def to_dict(self) -> dict:
        return {
            "request": {"system_text": self.system_text, "user_text": self.user_text},
            "response_text": self.response_text,
            "usage": self.usage.to_dict(),
            "latency_ms": self.latency_ms,
            "attempt_count": self.attempt_count,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ChatExchange":
        req = obj.get("request", {})
        return cls(
            system_text=req.get("system_text", ""),
            user_text=req.get("user_text", ""),
            response_text=obj.get("response_text", ""),
            usage=TokenUsage.from_dict(obj.get("usage", {})),
            latency_ms=int(obj.get("latency_ms", 0)),
            attempt_count=int(obj.get("attempt_count", 1)),
        )


def accumulate_usage(exchanges: list[ChatExchange] | tuple[ChatExchange, ...]) -> TokenUsage:
    """Componentwise sum of usage over exchanges (order-invariant)."""
    input_tokens = sum(e.usage.input_tokens for e in exchanges)
    output_tokens = sum(e.usage.output_tokens for e in exchanges)
    estimated = any(e.usage.estimated for e in exchanges)
    return TokenUsage.of(input_tokens, output_tokens, estimated)


@dataclass
class Transcript:
    run_id: str
    exchanges: list[ChatExchange] = field(default_factory=list)

    def append(self, exchange: ChatExchange) -> None:
        self.exchanges.append(exchange)

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for e in self.exchanges:
            digest.update(e.system_text.encode("utf-8"))
            digest.update(b"\x00")
            digest.update(e.user_text.encode("utf-8"))
            digest.update(b"\x01")
        return digest.hexdigest()

    def save(self, path: str | Path) -> None:
        lines = [json.dumps(e.to_dict(), sort_keys=True, ensure_ascii=False) for e in self.exchanges]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Transcript":
        path = Path(path)
        exchanges = []
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                exchanges.append(ChatExchange.from_dict(json.loads(line)))
        return cls(run_id=path.stem, exchanges=exchanges)


# ---------------------------------------------------------------------------
# Live transports
# ---------------------------------------------------------------------------

# Per-endpoint in-flight limiters, shared across gateway instances.
_limiters: dict[tuple, threading.Semaphore] = {}
_limiters_lock = threading.Lock()


def _limiter_for(endpoint: ModelEndpoint, limit: int) -> threading.Semaphore:
    key = (endpoint.provider, endpoint.base_url, endpoint.model_name)
    with _limiters_lock:
        if key not in _limiters:
            _limiters[key] = threading.Semaphore(limit)
        return _limiters[key]


def _credential(endpoint: ModelEndpoint) -> str:
    value = os.environ.get(endpoint.credential_env_var, "")
    if not value:
        raise GatewayError(f"credential env var {endpoint.credential_env_var!r} not set")
    return value


def _post_json(url: str, headers: dict, payload: dict) -> dict:
    try:
        resp = requests.post(url, headers=headers, json=payload, timeout=300)
    except (requests.ConnectionError, requests.Timeout) as exc:
        raise TransientTransportError(str(exc)) from exc
    if resp.status_code == 429 or resp.status_code >= 500:
        raise TransientTransportError(f"HTTP {resp.status_code}: {resp.text[:500]}")
    if resp.status_code >= 400:
        raise GatewayError(f"HTTP {resp.status_code}: {resp.text[:500]}")
    try:
        return resp.json()
    except ValueError as exc:
        raise GatewayError(f"non-JSON provider response: {resp.text[:500]}") from exc


def _estimate_usage(system_text: str, user_text: str, response_text: str) -> TokenUsage:
    prompt_chars = len(system_text) + len(user_text)
    return TokenUsage.of(prompt_chars // _CHARS_PER_TOKEN, len(response_text) // _CHARS_PER_TOKEN, estimated=True)


def _openai_send(endpoint: ModelEndpoint, system_text: str, user_text: str):
    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    headers = {"Authorization": f"Bearer {_credential(endpoint)}"}
    payload: dict = {
        "model": endpoint.model_name,
        "messages": [
            {"role": "system", "content": system_text},
            {"role": "user", "content": user_text},
        ],
    }
    if endpoint.temperature is not None:
        payload["temperature"] = endpoint.temperature
    if endpoint.max_output_tokens is not None:
        payload["max_completion_tokens"] = endpoint.max_output_tokens
    if endpoint.reasoning_effort is not None:
        payload["reasoning_effort"] = endpoint.reasoning_effort

    body = _post_json(url, headers, payload)
    try:
        text = body["choices"][0]["message"]["content"] or ""
    except (KeyError, IndexError, TypeError) as exc:
        raise GatewayError(f"malformed completion response: {json.dumps(body)[:500]}") from exc
    usage = body.get("usage") or {}
    if "prompt_tokens" in usage and "completion_tokens" in usage:
        parsed = TokenUsage.of(int(usage["prompt_tokens"]), int(usage["completion_tokens"]))
    else:
        parsed = _estimate_usage(system_text, user_text, text)
    return text, parsed


def _gemini_send(endpoint: ModelEndpoint, system_text: str, user_text: str):
    url = f"{endpoint.base_url.rstrip('/')}/models/{endpoint.model_name}:generateContent"
    headers = {"x-goog-api-key": _credential(endpoint)}
    payload: dict = {
        "system_instruction": {"parts": [{"text": system_text}]},
        "contents": [{"role": "user", "parts": [{"text": user_text}]}],
    }
    generation_config: dict = {}
    if endpoint.temperature is not None:
        generation_config["temperature"] = endpoint.temperature
    if endpoint.max_output_tokens is not None:
        generation_config["maxOutputTokens"] = endpoint.max_output_tokens
    if generation_config:
        payload["generationConfig"] = generation_config

    body = _post_json(url, headers, payload)
    try:
        parts = body["candidates"][0]["content"]["parts"]
        text = "".join(p.get("text", "") for p in parts)
    except (KeyError, IndexError, TypeError) as exc:
        raise GatewayError(f"malformed completion response: {json.dumps(body)[:500]}") from exc
    meta = body.get("usageMetadata") or {}
    if "promptTokenCount" in meta:
        parsed = TokenUsage.of(int(meta.get("promptTokenCount", 0)), int(meta.get("candidatesTokenCount", 0)))
    else:
        parsed = _estimate_usage(system_text, user_text, text)
    return text, parsed


_TRANSPORTS = {
    "openai-compatible": _openai_send,
    "gemini-compatible": _gemini_send,
}


# ---------------------------------------------------------------------------
# Gateway
# ---------------------------------------------------------------------------


def _first_diff_line(recorded: str, got: str) -> tuple[int, str, str]:
    rec_lines = recorded.split("\n")
    got_lines = got.split("\n")
    for i in range(max(len(rec_lines), len(got_lines))):
        a = rec_lines[i] if i < len(rec_lines) else "<missing>"
        b = got_lines[i] if i < len(got_lines) else "<missing>"
        if a != b:
            return i + 1, a, b
    return 0, "", ""


class LlmGateway:
    """One chat-completion channel: live, record, or replay.

    A gateway instance is scoped to one run: `history` holds every exchange
    it served, in order, so per-run usage is accumulate_usage(history).
    """

    def __init__(
        self,
        endpoint: ModelEndpoint,
        mode: str = "live",
        transcript: Optional[Transcript] = None,
        transcript_file: Optional[str | Path] = None,
        transport: Optional[Callable] = None,
        strict_replay: bool = True,
        in_flight_limit: int = DEFAULT_IN_FLIGHT_LIMIT,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        if mode not in ("live", "record", "replay"):
            raise ValueError(f"unknown gateway mode {mode!r}")
        if endpoint.provider == "replay" and mode != "replay":
            mode = "replay"
        self.endpoint = endpoint
        self.mode = mode
        self.strict_replay = strict_replay
        self.history: list[ChatExchange] = []
        self._sleeper = sleeper
        self._cursor = 0
        self._lock = threading.Lock()
        self._transcript_file = Path(transcript_file) if transcript_file else None

        if mode == "replay":
            if transcript is None:
                path = endpoint.transcript_path
                if path is None:
                    raise GatewayError("replay mode requires a transcript")
                transcript = Transcript.load(path)
            self.transcript = transcript
            self._transport = None
            self._limiter = None
        else:
            self.transcript = transcript if transcript is not None else Transcript(run_id="")
            if transport is not None:
                self._transport = transport
            else:
                send = _TRANSPORTS.get(endpoint.provider)
                if send is None:
                    raise GatewayError(f"provider {endpoint.provider!r} has no live transport")
                self._transport = lambda s, u: send(endpoint, s, u)
            self._limiter = _limiter_for(endpoint, in_flight_limit)

    @property
    def is_replay(self) -> bool:
        return self.mode == "replay"

    def complete(self, system_text: str, user_text: str) -> ChatExchange:
        if self.mode == "replay":
            exchange = self._replay_next(system_text, user_text)
        else:
            exchange = self._send_with_retry(system_text, user_text)
            if self.mode == "record":
                with self._lock:
                    self.transcript.append(exchange)
                    if self._transcript_file is not None:
                        with open(self._transcript_file, "a", encoding="utf-8") as fh:
                            fh.write(json.dumps(exchange.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")
        self.history.append(exchange)
        return exchange

    def _replay_next(self, system_text: str, user_text: str) -> ChatExchange:
        with self._lock:
            if self._cursor >= len(self.transcript.exchanges):
                raise ReplayExhaustedError(f"replay exhausted at exchange {self._cursor}")
            recorded = self.transcript.exchanges[self._cursor]
            index = self._cursor
            self._cursor += 1
        if self.strict_replay:
            want = recorded.system_text + "\n\x00\n" + recorded.user_text
            got = system_text + "\n\x00\n" + user_text
            if want != got:
                line_no, a, b = _first_diff_line(want, got)
                raise ReplayMismatchError(
                    f"replay mismatch at exchange {index}, first differing line {line_no}: "
                    f"recorded {a!r} vs got {b!r}"
                )
        return recorded

    def _send_with_retry(self, system_text: str, user_text: str) -> ChatExchange:
        last_error: Optional[Exception] = None
        for attempt in range(1, RETRY_ATTEMPTS + 1):
            start = time.monotonic()
            try:
                if self._limiter is not None:
                    self._limiter.acquire()
                try:
                    response_text, usage = self._transport(system_text, user_text)
                finally:
                    if self._limiter is not None:
                        self._limiter.release()
            except TransientTransportError as exc:
                last_error = exc
                logger.warning("transient transport failure (attempt %d/%d): %s", attempt, RETRY_ATTEMPTS, exc)
                if attempt < RETRY_ATTEMPTS:
                    self._sleeper(RETRY_BACKOFF_S[attempt - 1])
                continue
            latency_ms = int(round((time.monotonic() - start) * 1000))
            if usage is None:
                usage = _estimate_usage(system_text, user_text, response_text)
            return ChatExchange(
                system_text=system_text,
                user_text=user_text,
                response_text=response_text,
                usage=usage,
                latency_ms=latency_ms,
                attempt_count=attempt,
            )
        raise GatewayError(f"retry budget exhausted after {RETRY_ATTEMPTS} attempts: {last_error}")


def replay_gateway(transcript: Transcript, model_name: str = "replay", strict: bool = True) -> LlmGateway:
    """A gateway serving an in-memory transcript; no transport is constructed."""
    endpoint = ModelEndpoint(provider="replay", model_name=model_name, transcript_path="<memory>")
    return LlmGateway(endpoint, mode="replay", transcript=transcript, strict_replay=strict)
