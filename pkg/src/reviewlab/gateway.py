"""Provider-agnostic LLM gateway.

One entry point (:meth:`Gateway.complete`) wraps any chat-completion backend
with the behaviors the rest of the package relies on:

* JSON-schema validation of structured outputs with a bounded repair loop,
* bounded transport retries,
* deterministic content-addressed caching (a cache hit replays the recorded
  response byte for byte and reports ``attempts == 0``),
* middle-out truncation of oversized user content (never the system prompt),
* a per-endpoint in-flight cap.

Backends are tiny: anything with ``send(request, request_hash) -> str``.
``ScriptedBackend`` replays a recorded transcript for fully offline runs.
"""

from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Protocol

import jsonschema

from .model import canonical_json, content_hash

logger = logging.getLogger(__name__)

# Canonical role names used across the pipeline.
ROLE_DRAFTER = "drafter"
ROLE_KEYWORDS = "keyword_extractor"
ROLE_DEBRIEF = "related_work_reader"
ROLE_MINER = "insight_miner"
ROLE_ANALYZER = "result_analyzer"
ROLE_AGGREGATOR = "aggregator"
ROLE_REFERENCE = "reference_consolidator"
ROLE_RUBRIC = "rubric_writer"
ROLE_JUDGE = "dimension_judge"

GENERATION_ROLES = (
    ROLE_DRAFTER,
    ROLE_KEYWORDS,
    ROLE_DEBRIEF,
    ROLE_MINER,
    ROLE_ANALYZER,
    ROLE_AGGREGATOR,
)
BENCHMARK_ROLES = (ROLE_REFERENCE, ROLE_RUBRIC)
JUDGE_ROLES = (ROLE_JUDGE,)
ALL_ROLES = GENERATION_ROLES + BENCHMARK_ROLES + JUDGE_ROLES

TRUNCATION_MARKER = "\n[... middle of input truncated ...]\n"
REPAIR_INSTRUCTION = (
    "\n\nReturn JSON only, matching the required schema exactly. "
    "No prose, no code fences."
)


class GatewayError(Exception):
    pass


class ConfigurationError(GatewayError):
    pass


class TransportError(GatewayError):
    """A backend/network failure that may be retried."""


class MalformedOutputError(GatewayError):
    """The model kept returning output that failed schema validation."""

    def __init__(self, message: str, raw_text: str, errors: list[str]):
        super().__init__(message)
        self.raw_text = raw_text
        self.errors = errors


# ---------------------------------------------------------------------------
# Roles and requests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelRole:
    """Configuration for one named role: which model serves it and under what
    decoding and budget limits.  ``api_key_env`` names an environment
    variable; the key itself never lives in config or logs."""

    role: str
    model: str
    endpoint: str = ""
    temperature: float = 0.0
    max_input_tokens: int = 100_000
    max_output_tokens: int = 16_384
    api_key_env: str = ""

    def validate(self) -> list[str]:
        problems = []
        if not self.role:
            problems.append("role name is empty")
        if not self.model:
            problems.append(f"role {self.role!r}: model is empty")
        if not 0.0 <= self.temperature <= 2.0:
            problems.append(f"role {self.role!r}: temperature {self.temperature} outside [0, 2]")
        if self.max_input_tokens <= 0 or self.max_output_tokens <= 0:
            problems.append(f"role {self.role!r}: token budgets must be positive")
        return problems

    def to_dict(self) -> dict:
        return {
            "role": self.role,
            "model": self.model,
            "endpoint": self.endpoint,
            "temperature": self.temperature,
            "max_input_tokens": self.max_input_tokens,
            "max_output_tokens": self.max_output_tokens,
            "api_key_env": self.api_key_env,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ModelRole":
        return cls(
            role=str(d["role"]),
            model=str(d["model"]),
            endpoint=str(d.get("endpoint", "")),
            temperature=float(d.get("temperature", 0.0)),
            max_input_tokens=int(d.get("max_input_tokens", 100_000)),
            max_output_tokens=int(d.get("max_output_tokens", 16_384)),
            api_key_env=str(d.get("api_key_env", "")),
        )


@dataclass(frozen=True)
class ChatRequest:
    role: ModelRole
    system: str
    user: str
    schema_id: str | None = None


@dataclass(frozen=True)
class ChatResponse:
    text: str
    parsed: Any | None
    attempts: int  # backend calls actually made; 0 means served from cache
    request_hash: str
    cached: bool = False


def estimate_tokens(text: str) -> int:
    # chars/4 ceiling; coarse but monotone, which is all truncation needs
    return math.ceil(len(text) / 4)


def truncate_middle(text: str, max_tokens: int) -> str:
    """Cut the middle out of ``text`` so it fits ``max_tokens``, keeping the
    head and tail halves around a visible marker."""
    if estimate_tokens(text) <= max_tokens:
        return text
    keep_chars = max_tokens * 4 - len(TRUNCATION_MARKER)
    if keep_chars <= 0:
        raise ConfigurationError(f"input budget of {max_tokens} tokens is too small")
    head = keep_chars // 2
    tail = keep_chars - head
    return text[:head] + TRUNCATION_MARKER + text[-tail:]


def prepare_request(request: ChatRequest) -> ChatRequest:
    """Apply the input-budget policy: the system prompt is sacrosanct, the
    user content is truncated middle-out to fit what remains."""
    budget = request.role.max_input_tokens - estimate_tokens(request.system)
    if budget <= 0:
        raise ConfigurationError(
            f"system prompt alone exceeds the input budget for role {request.role.role!r}"
        )
    user = truncate_middle(request.user, budget)
    if user is request.user:
        return request
    return replace(request, user=user)


def request_hash(request: ChatRequest) -> str:
    """Content hash of the prepared request; the cache key and the transcript
    key.  Endpoint and API-key wiring are deliberately excluded so replicas
    share cache entries."""
    return content_hash(
        {
            "model": request.role.model,
            "temperature": request.role.temperature,
            "max_output_tokens": request.role.max_output_tokens,
            "system": request.system,
            "user": request.user,
            "schema_id": request.schema_id,
        }
    )


# ---------------------------------------------------------------------------
# Schema registry
# ---------------------------------------------------------------------------


class SchemaRegistry:
    """Named JSON schemas for structured outputs."""

    def __init__(self) -> None:
        self._schemas: dict[str, Any] = {}
        self._lock = threading.Lock()

    def register(self, schema_id: str, schema: Mapping[str, Any]) -> None:
        jsonschema.Draft202012Validator.check_schema(schema)
        with self._lock:
            existing = self._schemas.get(schema_id)
            if existing is not None and canonical_json(existing) != canonical_json(schema):
                raise ConfigurationError(f"schema id {schema_id!r} already registered with different content")
            self._schemas[schema_id] = dict(schema)

    def get(self, schema_id: str) -> Mapping[str, Any]:
        try:
            return self._schemas[schema_id]
        except KeyError:
            raise ConfigurationError(f"unknown schema id: {schema_id!r}") from None

    def validation_errors(self, schema_id: str, payload: Any) -> list[str]:
        validator = jsonschema.Draft202012Validator(self.get(schema_id))
        return [
            f"{'/'.join(str(p) for p in err.absolute_path) or '<root>'}: {err.message}"
            for err in validator.iter_errors(payload)
        ]


def extract_json(text: str) -> Any:
    """Parse a JSON payload out of a model reply, tolerating code fences and
    surrounding prose.  Raises ValueError if nothing parseable is found."""
    stripped = text.strip()
    if stripped.startswith("```"):
        first_newline = stripped.find("\n")
        closing = stripped.rfind("```")
        if first_newline != -1 and closing > first_newline:
            stripped = stripped[first_newline + 1 : closing].strip()
    try:
        return json.loads(stripped)
    except json.JSONDecodeError:
        pass
    for opener, closer in (("{", "}"), ("[", "]")):
        start = stripped.find(opener)
        end = stripped.rfind(closer)
        if start != -1 and end > start:
            try:
                return json.loads(stripped[start : end + 1])
            except json.JSONDecodeError:
                continue
    raise ValueError("no JSON payload found in model reply")


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


class Backend(Protocol):
    def send(self, request: ChatRequest, request_hash: str) -> str: ...


class HttpBackend:
    """Chat-completions HTTP backend (OpenAI-compatible wire shape)."""

    def __init__(self, session=None, timeout: float = 120.0):
        import requests

        self._session = session or requests.Session()
        self._timeout = timeout

    def send(self, request: ChatRequest, request_hash: str) -> str:
        role = request.role
        if not role.endpoint:
            raise ConfigurationError(f"role {role.role!r} has no endpoint configured")
        headers = {"Content-Type": "application/json"}
        if role.api_key_env:
            key = os.environ.get(role.api_key_env, "")
            if not key:
                raise ConfigurationError(
                    f"environment variable {role.api_key_env!r} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": role.model,
            "temperature": role.temperature,
            "max_tokens": role.max_output_tokens,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        }
        url = role.endpoint.rstrip("/") + "/chat/completions"
        try:
            response = self._session.post(url, json=payload, headers=headers, timeout=self._timeout)
        except Exception as exc:
            raise TransportError(f"request to {url} failed: {exc}") from exc
        if response.status_code != 200:
            raise TransportError(f"{url} returned HTTP {response.status_code}")
        try:
            body = response.json()
            return body["choices"][0]["message"]["content"]
        except Exception as exc:
            raise TransportError(f"unexpected response shape from {url}: {exc}") from exc


class ScriptedBackend:
    """Offline transcript replay.

    Entries carrying a request hash serve exactly that request; entries with
    a null hash form an ordered queue consumed by any request that has no
    by-hash match.  A request with no matching entry raises TransportError,
    so an exhausted or mismatched transcript fails loudly instead of
    improvising.
    """

    def __init__(self, entries: Iterable[tuple[str | None, str]]):
        self._by_hash: dict[str, deque[str]] = {}
        self._ordered: deque[str] = deque()
        self._lock = threading.Lock()
        for entry_hash, text in entries:
            if entry_hash:
                self._by_hash.setdefault(entry_hash, deque()).append(text)
            else:
                self._ordered.append(text)

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "ScriptedBackend":
        entries = []
        with open(path, "r", encoding="utf-8") as handle:
            for line_number, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                if "response_text" not in record:
                    raise ConfigurationError(
                        f"{path}:{line_number}: transcript entry missing response_text"
                    )
                entries.append((record.get("request_hash"), str(record["response_text"])))
        return cls(entries)

    def send(self, request: ChatRequest, request_hash: str) -> str:
        with self._lock:
            queue = self._by_hash.get(request_hash)
            if queue:
                return queue.popleft()
            if self._ordered:
                return self._ordered.popleft()
        raise TransportError(
            f"scripted transcript has no response for request {request_hash[:12]} "
            f"(role {request.role.role!r})"
        )


class FunctionBackend:
    """Adapter turning a plain callable into a backend; handy in tests."""

    def __init__(self, fn: Callable[[ChatRequest], str]):
        self._fn = fn

    def send(self, request: ChatRequest, request_hash: str) -> str:
        return self._fn(request)


# ---------------------------------------------------------------------------
# Gateway
# ---------------------------------------------------------------------------


class Gateway:
    """Front door for every model call in the package."""

    def __init__(
        self,
        backends: Backend | Mapping[str, Backend],
        registry: SchemaRegistry | None = None,
        cache_dir: str | Path | None = None,
        transport_retries: int = 3,
        repair_retries: int = 3,
        max_inflight: int = 4,
        retry_sleep: float = 0.0,
    ):
        if transport_retries < 1 or repair_retries < 1:
            raise ConfigurationError("retry budgets must be at least 1")
        self._backends = backends if isinstance(backends, Mapping) else {"default": backends}
        self.registry = registry or SchemaRegistry()
        self._cache_dir = Path(cache_dir) if cache_dir else None
        if self._cache_dir:
            self._cache_dir.mkdir(parents=True, exist_ok=True)
        self._transport_retries = transport_retries
        self._repair_retries = repair_retries
        self._max_inflight = max_inflight
        self._retry_sleep = retry_sleep
        self._semaphores: dict[str, threading.BoundedSemaphore] = {}
        self._lock = threading.Lock()
        self.stats = {"sends": 0, "cache_hits": 0, "repairs": 0, "transport_retries": 0}

    # -- plumbing -----------------------------------------------------------

    def _backend_for(self, role: ModelRole) -> Backend:
        backend = self._backends.get(role.role) or self._backends.get("default")
        if backend is None:
            raise ConfigurationError(f"no backend configured for role {role.role!r}")
        return backend

    def _semaphore_for(self, role: ModelRole) -> threading.BoundedSemaphore:
        key = role.endpoint or "local"
        with self._lock:
            sem = self._semaphores.get(key)
            if sem is None:
                sem = threading.BoundedSemaphore(self._max_inflight)
                self._semaphores[key] = sem
            return sem

    def _cache_path(self, request_hash: str) -> Path | None:
        if not self._cache_dir:
            return None
        return self._cache_dir / f"{request_hash}.json"

    def _cache_read(self, request_hash: str) -> dict | None:
        path = self._cache_path(request_hash)
        if path is None or not path.exists():
            return None
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)

    def _cache_write(self, request_hash: str, text: str, parsed: Any) -> None:
        path = self._cache_path(request_hash)
        if path is None:
            return
        record = {"request_hash": request_hash, "text": text, "parsed": parsed}
        tmp = path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as handle:
            json.dump(record, handle, ensure_ascii=False)
        os.replace(tmp, path)

    def _send_with_retries(self, request: ChatRequest, prepared_hash: str) -> tuple[str, int]:
        backend = self._backend_for(request.role)
        sem = self._semaphore_for(request.role)
        last_error: TransportError | None = None
        for attempt in range(1, self._transport_retries + 1):
            try:
                with sem:
                    text = backend.send(request, prepared_hash)
                with self._lock:
                    self.stats["sends"] += 1
                return text, attempt
            except TransportError as exc:
                last_error = exc
                with self._lock:
                    self.stats["transport_retries"] += 1
                logger.warning(
                    "transport attempt %d/%d for role %s failed: %s",
                    attempt,
                    self._transport_retries,
                    request.role.role,
                    exc,
                )
                if attempt < self._transport_retries and self._retry_sleep:
                    time.sleep(self._retry_sleep * (2 ** (attempt - 1)))
        assert last_error is not None
        raise last_error

    # -- public API ---------------------------------------------------------

    def complete(self, request: ChatRequest) -> ChatResponse:
        """Send one chat request through truncation, cache, transport retry,
        and (for structured requests) the schema-repair loop."""
        problems = request.role.validate()
        if problems:
            raise ConfigurationError("; ".join(problems))
        prepared = prepare_request(request)
        original_hash = request_hash(prepared)

        cached = self._cache_read(original_hash)
        if cached is not None:
            with self._lock:
                self.stats["cache_hits"] += 1
            return ChatResponse(
                text=cached["text"],
                parsed=cached.get("parsed"),
                attempts=0,
                request_hash=original_hash,
                cached=True,
            )

        attempts = 0
        current = prepared
        last_text = ""
        last_errors: list[str] = []
        for repair_round in range(self._repair_retries):
            current_hash = request_hash(current)
            text, sends = self._send_with_retries(current, current_hash)
            attempts += sends
            last_text = text
            if request.schema_id is None:
                self._cache_write(original_hash, text, None)
                return ChatResponse(text, None, attempts, original_hash)
            try:
                payload = extract_json(text)
                errors = self.registry.validation_errors(request.schema_id, payload)
            except ValueError as exc:
                errors = [str(exc)]
                payload = None
            if not errors:
                self._cache_write(original_hash, text, payload)
                return ChatResponse(text, payload, attempts, original_hash)
            last_errors = errors
            with self._lock:
                self.stats["repairs"] += 1
            logger.warning(
                "schema validation failed for role %s (round %d/%d): %s",
                request.role.role,
                repair_round + 1,
                self._repair_retries,
                "; ".join(errors[:3]),
            )
            if repair_round < self._repair_retries - 1:
                current = replace(current, user=current.user + REPAIR_INSTRUCTION)
        raise MalformedOutputError(
            f"role {request.role.role!r} produced schema-invalid output after "
            f"{self._repair_retries} rounds",
            raw_text=last_text,
            errors=last_errors,
        )
