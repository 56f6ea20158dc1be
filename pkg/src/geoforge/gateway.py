"""Uniform access to chat-completion backends: live HTTP, mock, and record/replay.

All pipeline stages go through `Gateway.complete`; exchanges are recorded into
a transcript keyed by a content hash of (model, system, user, temperature),
which makes any run replayable byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

import requests

from .answers import AnswerDocument, parse_citations
from .corpus import Document
from .errors import (
    ContractError,
    EmptyResponseError,
    HTTPStatusError,
    RetryExhaustedError,
    TranscriptMissError,
    ValidationError,
)
from .prompts import render_engine_prompt

logger = logging.getLogger(__name__)

STAGES = ("explainer", "extractor", "merger", "filter", "rewriter", "verifier", "engine", "judge")

# Deterministic stages run at temperature 0; the rest use the backend default.
DEFAULT_TEMPERATURES: dict[str, float | None] = {"verifier": 0.0, "filter": 0.0, "judge": 0.0}

DEFAULT_MAX_OUTPUT = 4096
DEFAULT_CONCURRENCY = 8

RETRYABLE_STATUSES = frozenset({408, 425, 429, 500, 502, 503, 504})


@dataclass(frozen=True)
class ChatRequest:
    model: str
    user: str
    system: str | None = None
    temperature: float | None = None  # None: let the backend decide
    max_output: int = DEFAULT_MAX_OUTPUT
    tag: str = "engine"

    def __post_init__(self):
        if not self.user:
            raise ValidationError("chat request user text is empty")
        if self.tag not in STAGES:
            raise ValidationError(f"unknown stage tag {self.tag!r}")
        if self.temperature is not None and self.temperature < 0:
            raise ValidationError("temperature must be >= 0")


def request_hash(request: ChatRequest) -> str:
    """Stable content hash over (model, system, user, temperature).

    Deliberately ignores tag, max_output, and timestamps so semantically
    identical requests map to one transcript entry.
    """
    payload = json.dumps(
        {
            "model": request.model,
            "system": request.system,
            "user": request.user,
            "temperature": request.temperature,
        },
        ensure_ascii=False,
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TranscriptEntry:
    hash: str
    request: ChatRequest
    response: str
    timestamp: float


class Transcript:
    """Ordered record of request/response exchanges, deduplicated by hash."""

    def __init__(self, entries: Sequence[TranscriptEntry] = ()):
        self._entries: list[TranscriptEntry] = []
        self._by_hash: dict[str, str] = {}
        for entry in entries:
            self._add(entry)

    def _add(self, entry: TranscriptEntry) -> None:
        if entry.hash in self._by_hash:
            return
        self._entries.append(entry)
        self._by_hash[entry.hash] = entry.response

    @property
    def entries(self) -> tuple[TranscriptEntry, ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def record(self, request: ChatRequest, response: str) -> str:
        """At-most-once recording per logical request; returns the hash."""
        digest = request_hash(request)
        self._add(TranscriptEntry(hash=digest, request=request, response=response, timestamp=time.time()))
        return digest

    def lookup(self, digest: str) -> str:
        try:
            return self._by_hash[digest]
        except KeyError:
            raise TranscriptMissError(digest) from None

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            for entry in self._entries:
                obj = {
                    "hash": entry.hash,
                    "request": {
                        "model": entry.request.model,
                        "system": entry.request.system,
                        "user": entry.request.user,
                        "temperature": entry.request.temperature,
                        "max_output": entry.request.max_output,
                        "tag": entry.request.tag,
                    },
                    "response": entry.response,
                    "timestamp": entry.timestamp,
                }
                handle.write(json.dumps(obj, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Transcript":
        entries = []
        with open(path, encoding="utf-8") as handle:
            for number, line in enumerate(handle, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    req = obj["request"]
                    entry = TranscriptEntry(
                        hash=obj["hash"],
                        request=ChatRequest(
                            model=req["model"],
                            user=req["user"],
                            system=req.get("system"),
                            temperature=req.get("temperature"),
                            max_output=req.get("max_output", DEFAULT_MAX_OUTPUT),
                            tag=req.get("tag", "engine"),
                        ),
                        response=obj["response"],
                        timestamp=obj.get("timestamp", 0.0),
                    )
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ValidationError(f"{path} line {number}: malformed transcript entry") from exc
                entries.append(entry)
        return cls(entries)


class Backend(Protocol):
    def send(self, request: ChatRequest) -> str: ...


class MockBackend:
    """Deterministic backend driven by a user-supplied function."""

    def __init__(self, responder: Callable[[ChatRequest], str]):
        self.responder = responder
        self.calls = 0

    def send(self, request: ChatRequest) -> str:
        self.calls += 1
        return self.responder(request)


class ReplayBackend:
    def __init__(self, transcript: Transcript):
        self.transcript = transcript

    def send(self, request: ChatRequest) -> str:
        return self.transcript.lookup(request_hash(request))


@dataclass
class RetryPolicy:
    max_attempts: int = 4
    base_delay: float = 0.5
    max_delay: float = 8.0

    def delay(self, attempt: int) -> float:
        return min(self.base_delay * (2 ** attempt), self.max_delay)


class HTTPBackend:
    """OpenAI-compatible chat-completion endpoint with retrying POSTs.

    `post` and `sleep` are injectable for tests; the default uses a shared
    requests session against `{endpoint}/chat/completions`.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        retry: RetryPolicy | None = None,
        timeout: float = 60.0,
        post: Callable | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.api_key = api_key
        self.retry = retry or RetryPolicy()
        self.timeout = timeout
        self._session = requests.Session() if post is None else None
        self._post = post if post is not None else self._session.post
        self._sleep = sleep

    def _body(self, request: ChatRequest) -> dict:
        messages = []
        if request.system:
            messages.append({"role": "system", "content": request.system})
        messages.append({"role": "user", "content": request.user})
        body = {"model": request.model, "messages": messages, "max_tokens": request.max_output}
        if request.temperature is not None:
            body["temperature"] = request.temperature
        return body

    def send(self, request: ChatRequest) -> str:
        url = f"{self.endpoint}/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.retry.max_attempts):
            try:
                response = self._post(url, json=self._body(request), headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
                logger.warning("attempt %d/%d failed: %s", attempt + 1, self.retry.max_attempts, exc)
                self._sleep(self.retry.delay(attempt))
                continue
            if response.status_code == 200:
                payload = response.json()
                try:
                    return payload["choices"][0]["message"]["content"] or ""
                except (KeyError, IndexError, TypeError) as exc:
                    raise HTTPStatusError(200, f"unexpected response shape: {payload!r}") from exc
            if response.status_code in RETRYABLE_STATUSES:
                last_error = HTTPStatusError(response.status_code, response.text)
                logger.warning("retryable HTTP %d on attempt %d", response.status_code, attempt + 1)
                self._sleep(self.retry.delay(attempt))
                continue
            raise HTTPStatusError(response.status_code, response.text)
        raise RetryExhaustedError(
            f"gave up after {self.retry.max_attempts} attempts: {last_error}"
        )


class Gateway:
    """Front door for all stage calls: concurrency cap plus transcript recording.

    Recording is skipped for replay backends (the transcript is the source).
    Per-stage model and temperature overrides apply when requests are built
    through `run_stage`; `complete` sends requests exactly as given.
    """

    def __init__(
        self,
        backend: Backend,
        transcript: Transcript | None = None,
        models: dict[str, str] | None = None,
        temperatures: dict[str, float | None] | None = None,
        max_output: int = DEFAULT_MAX_OUTPUT,
        concurrency: int = DEFAULT_CONCURRENCY,
    ):
        self.backend = backend
        self.transcript = transcript
        self.models = {"default": "default", **(models or {})}
        self.temperatures = {**DEFAULT_TEMPERATURES, **(temperatures or {})}
        self.max_output = max_output
        self.concurrency = concurrency
        self._semaphore = threading.BoundedSemaphore(concurrency)
        self._record_lock = threading.Lock()

    def complete(self, request: ChatRequest) -> str:
        with self._semaphore:
            response = self.backend.send(request)
        if self.transcript is not None and not isinstance(self.backend, ReplayBackend):
            with self._record_lock:
                self.transcript.record(request, response)
        return response

    def model_for(self, tag: str) -> str:
        return self.models.get(tag, self.models["default"])

    def build_request(self, tag: str, user: str, system: str | None = None) -> ChatRequest:
        return ChatRequest(
            model=self.model_for(tag),
            user=user,
            system=system,
            temperature=self.temperatures.get(tag),
            max_output=self.max_output,
            tag=tag,
        )

    def run_stage(self, tag: str, user: str, system: str | None = None) -> str:
        return self.complete(self.build_request(tag, user, system))


def estimate_tokens(text: str) -> int:
    """ceil(character count / 4); monotone, backend-agnostic."""
    return math.ceil(len(text) / 4)


def generate_answer(gateway: Gateway, query: str, candidates: Sequence[Document]) -> AnswerDocument:
    """Ask the generative engine for a cited answer and parse its citations."""
    if not 1 <= len(candidates) <= 9:
        raise ContractError("generate_answer supports 1-9 candidates (single-digit indices)")
    prompt = render_engine_prompt(query, [doc.text for doc in candidates])
    response = gateway.run_stage("engine", prompt)
    if not response.strip():
        raise EmptyResponseError("empty answer from engine")
    return parse_citations(response, len(candidates))
