"""Chat-completion access with retries and deterministic record-replay.

Everything above this module sees only ``PromptSpec`` in and ``Completion``
out; provider wire formats stay inside their adapters, so switching models
is a configuration change. Transcripts are keyed by a hash of the rendered
prompt plus the model identifier, which makes replayed pipeline runs
bit-deterministic and hermetic: a replay-mode cache miss is an error, never
a live call.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

from .prompting import PromptSpec

__all__ = [
    "ModelConfig",
    "Completion",
    "GatewayError",
    "GatewayTimeoutError",
    "RateLimitError",
    "AuthError",
    "MalformedResponseError",
    "ReplayMissError",
    "TransientProviderError",
    "ChatProvider",
    "ScriptedProvider",
    "HttpChatProvider",
    "TranscriptStore",
    "LlmGateway",
    "transcript_key",
    "extract_sql",
    "SqlExtractionError",
]


@dataclass(frozen=True)
class ModelConfig:
    """Which model to call and how patiently."""

    provider: str = "scripted"
    model: str = "test-model"
    temperature: float = 0.0
    max_output_tokens: int = 2048
    request_timeout: float = 60.0
    max_retries: int = 3

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class Completion:
    text: str
    latency: float
    transcript_key: str
    usage: dict[str, int] = field(default_factory=dict)


class GatewayError(Exception):
    """Base for every error this module raises."""


class GatewayTimeoutError(GatewayError):
    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class RateLimitError(GatewayError):
    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class AuthError(GatewayError):
    pass


class MalformedResponseError(GatewayError):
    pass


class ReplayMissError(GatewayError):
    pass


class TransientProviderError(GatewayError):
    """Raised by providers for failures worth retrying.

    ``kind`` is "timeout", "rate-limit", or "server"; on retry exhaustion
    the gateway converts it to the matching terminal error type.
    """

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        if kind not in ("timeout", "rate-limit", "server"):
            raise ValueError(f"unknown transient kind: {kind!r}")
        self.kind = kind


class ChatProvider(Protocol):
    name: str

    def send(self, prompt: PromptSpec, config: ModelConfig) -> str:
        """Return the model's raw text for one chat completion."""
        ...


class ScriptedProvider:
    """Test double that replays a fixed script of responses.

    Each entry is either a string (returned) or an exception instance
    (raised). Prompts are logged on ``calls`` for assertions.
    """

    name = "scripted"

    def __init__(self, script: Sequence[str | Exception]):
        self._script = list(script)
        self.calls: list[PromptSpec] = []

    def send(self, prompt: PromptSpec, config: ModelConfig) -> str:
        self.calls.append(prompt)
        if not self._script:
            raise MalformedResponseError("scripted provider ran out of responses")
        item = self._script.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


class HttpChatProvider:
    """Adapter for OpenAI-style ``/chat/completions`` endpoints."""

    def __init__(
        self,
        url: str,
        api_key_env: str = "EPIQUERY_LLM_API_KEY",
        name: str = "http",
    ):
        self.url = url
        self.api_key_env = api_key_env
        self.name = name

    def send(self, prompt: PromptSpec, config: ModelConfig) -> str:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": config.model,
            "temperature": config.temperature,
            "max_tokens": config.max_output_tokens,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
        }
        try:
            response = httpx.post(
                self.url, json=payload, headers=headers, timeout=config.request_timeout
            )
        except httpx.TimeoutException as err:
            raise TransientProviderError("timeout", str(err)) from err
        except httpx.HTTPError as err:
            raise TransientProviderError("server", str(err)) from err
        if response.status_code in (401, 403):
            raise AuthError(f"provider rejected credentials: HTTP {response.status_code}")
        if response.status_code == 429:
            raise TransientProviderError("rate-limit", "HTTP 429")
        if response.status_code >= 500:
            raise TransientProviderError("server", f"HTTP {response.status_code}")
        if response.status_code != 200:
            raise MalformedResponseError(
                f"unexpected HTTP {response.status_code}: {response.text[:200]}"
            )
        try:
            body = response.json()
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as err:
            raise MalformedResponseError(f"cannot parse provider response: {err}") from err


def transcript_key(rendered_prompt: str, model: str) -> str:
    """Stable store key: hash of the exact prompt text and model identifier."""
    digest = hashlib.sha256()
    digest.update(model.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(rendered_prompt.encode("utf-8"))
    return digest.hexdigest()


class TranscriptStore:
    """Directory of one JSON file per (prompt, model) transcript."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, key: str, model: str, rendered_prompt: str, response: str) -> None:
        record = {
            "key": key,
            "model": model,
            "prompt": rendered_prompt,
            "response": response,
        }
        self._path(key).write_text(
            json.dumps(record, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )

    def keys(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.json"))


_BACKOFF_BASE = 0.5


class LlmGateway:
    """Front door for completions: retry policy, rate cap, record-replay.

    ``mode`` is "live" (call the provider), "record" (call and persist the
    response), or "replay" (serve only from the store; misses raise). One
    gateway may serve concurrent pipeline runs; ``max_concurrency`` caps
    in-flight provider calls and ``min_interval`` spaces them out.
    """

    def __init__(
        self,
        provider: ChatProvider,
        mode: str = "live",
        store: TranscriptStore | None = None,
        max_concurrency: int = 4,
        min_interval: float = 0.0,
        sleeper: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
    ):
        if mode not in ("live", "record", "replay"):
            raise ValueError(f"unknown gateway mode: {mode!r}")
        if mode in ("record", "replay") and store is None:
            raise ValueError(f"{mode} mode requires a transcript store")
        self.provider = provider
        self.mode = mode
        self.store = store
        self.min_interval = min_interval
        self._sleep = sleeper
        self._clock = clock
        self._slots = threading.BoundedSemaphore(max_concurrency)
        self._pace_lock = threading.Lock()
        self._next_allowed = 0.0

    def _pace(self) -> None:
        if self.min_interval <= 0:
            return
        with self._pace_lock:
            now = self._clock()
            wait = self._next_allowed - now
            if wait > 0:
                self._sleep(wait)
                now = now + wait
            self._next_allowed = now + self.min_interval

    def _call_with_retries(self, prompt: PromptSpec, config: ModelConfig) -> str:
        attempts = 0
        while True:
            attempts += 1
            try:
                with self._slots:
                    self._pace()
                    return self.provider.send(prompt, config)
            except TransientProviderError as err:
                if attempts > config.max_retries:
                    if err.kind == "timeout":
                        raise GatewayTimeoutError(
                            f"timed out after {attempts} attempts: {err}", attempts
                        ) from err
                    raise RateLimitError(
                        f"gave up after {attempts} attempts ({err.kind}): {err}",
                        attempts,
                    ) from err
                self._sleep(_BACKOFF_BASE * (2 ** (attempts - 1)))

    def complete(self, prompt: PromptSpec, config: ModelConfig) -> Completion:
        """Run one completion; in replay mode, serve it from the store."""
        rendered = prompt.rendered()
        key = transcript_key(rendered, config.model)
        if self.mode == "replay":
            assert self.store is not None
            record = self.store.get(key)
            if record is None:
                raise ReplayMissError(
                    f"no transcript for key {key[:12]}… (model {config.model})"
                )
            return Completion(text=record["response"], latency=0.0, transcript_key=key)
        start = self._clock()
        text = self._call_with_retries(prompt, config)
        latency = self._clock() - start
        if self.mode == "record":
            assert self.store is not None
            self.store.put(key, config.model, rendered, text)
        return Completion(text=text, latency=latency, transcript_key=key)


class SqlExtractionError(GatewayError):
    pass


def extract_sql(completion_text: str) -> tuple[str, str]:
    """Pull the SQL out of a completion.

    Returns ``(sql, method)`` where method is "fenced" when a fenced code
    block was found, else "heuristic" for the first-SELECT-to-end fallback
    (WITH counts as a start keyword). Both paths land in the run trace so
    sloppy model output is visible.
    """
    text = completion_text.strip()
    fence = _first_fenced_block(text)
    if fence is not None:
        return fence.strip(), "fenced"
    lowered = text.lower()
    starts = [i for i in (lowered.find("select"), lowered.find("with")) if i != -1]
    if starts:
        return text[min(starts):].rstrip().rstrip(";").rstrip(), "heuristic"
    raise SqlExtractionError("completion contains no code block and no SELECT")


def _first_fenced_block(text: str) -> str | None:
    start = text.find("```")
    if start == -1:
        return None
    line_end = text.find("\n", start)
    if line_end == -1:
        return None
    close = text.find("```", line_end + 1)
    if close == -1:
        return None
    return text[line_end + 1 : close]
