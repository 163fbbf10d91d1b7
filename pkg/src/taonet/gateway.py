"""Backend-agnostic generative labeling.

A remote backend speaks the de-facto chat-completions JSON shape with
exponential-backoff retries; two deterministic mocks keep tests and
offline runs off the network entirely. The gateway wraps any backend with
a fair FIFO in-flight cap and an optional JSONL audit trail (credentials
are never written).
"""

from __future__ import annotations

import json
import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field

import httpx

from .errors import (
    AuthMissing,
    BackendUnreachable,
    MalformedResponse,
    RateLimited,
)
from .records import ROUTE_OOD, PredictionRecord
from .sps import build_digest, canonicalize_label, render_prompt

ENV_BASE_URL = "TAONET_LLM_BASE_URL"
ENV_MODEL = "TAONET_LLM_MODEL"
ENV_API_KEY = "TAONET_LLM_API_KEY"

_RETRYABLE_STATUSES = {429, 500, 502, 503, 504}


@dataclass
class GenerationRequest:
    prompt: str
    temperature: float = 0.7
    top_p: float = 0.95
    max_tokens: int = 16
    request_id: str = ""

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must lie in (0, 1]")


class MockKeywordBackend:
    """Returns the first label whose keywords all appear in the prompt."""

    kind = "mock-keyword"

    def __init__(self, table: dict[str, list[str]], default: str = ""):
        self.table = dict(table)
        self.default = default

    def complete(self, request: GenerationRequest) -> str:
        for label, keywords in self.table.items():
            if all(keyword in request.prompt for keyword in keywords):
                return label
        return self.default


class MockOracleBackend:
    """Test-only: answers with the gold label looked up by request id."""

    kind = "mock-oracle"

    def __init__(self, gold_labels: dict[str, str]):
        self.gold_labels = dict(gold_labels)
        self.calls = 0

    def complete(self, request: GenerationRequest) -> str:
        self.calls += 1
        return self.gold_labels.get(request.request_id, "")


class RemoteBackend:
    """Chat-completions client with bounded exponential-backoff retries."""

    kind = "remote"

    def __init__(self, base_url: str | None = None, model: str | None = None,
                 api_key: str | None = None, timeout: float = 30.0,
                 max_attempts: int = 5, backoff_base: float = 1.0,
                 backoff_factor: float = 2.0,
                 transport: httpx.BaseTransport | None = None,
                 sleep=time.sleep):
        self.base_url = base_url if base_url is not None else os.environ.get(ENV_BASE_URL)
        self.model = model if model is not None else os.environ.get(ENV_MODEL, "")
        self._api_key = api_key
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_factor = backoff_factor
        self._sleep = sleep
        self._client = httpx.Client(transport=transport, timeout=timeout)

    def _resolve_key(self) -> str:
        key = self._api_key or os.environ.get(ENV_API_KEY)
        if not key:
            raise AuthMissing(f"no credential: set {ENV_API_KEY} or pass api_key")
        return key

    def complete(self, request: GenerationRequest) -> str:
        key = self._resolve_key()  # checked before any network traffic
        if not self.base_url:
            raise BackendUnreachable(f"no base URL: set {ENV_BASE_URL}")
        url = self.base_url.rstrip("/") + "/chat/completions"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
        }
        headers = {"Authorization": f"Bearer {key}"}

        delay = self.backoff_base
        rate_limited = False
        last_error = "unreachable"
        for attempt in range(self.max_attempts):
            if attempt:
                self._sleep(delay)
                delay *= self.backoff_factor
            try:
                response = self._client.post(url, json=body, headers=headers)
            except httpx.HTTPError as exc:
                last_error = str(exc)
                continue
            status = response.status_code
            if status == 200:
                return _extract_text(response)
            if status in (401, 403):
                raise AuthMissing(f"backend rejected credential (HTTP {status})")
            if status in _RETRYABLE_STATUSES:
                rate_limited = status == 429
                last_error = f"HTTP {status}"
                continue
            raise MalformedResponse(f"unexpected status {status}: {response.text[:200]}")
        if rate_limited:
            raise RateLimited(f"still rate-limited after {self.max_attempts} attempts")
        raise BackendUnreachable(
            f"gave up after {self.max_attempts} attempts ({last_error})")


def _extract_text(response: httpx.Response) -> str:
    try:
        data = response.json()
        return data["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"cannot read completion: {exc}") from exc


def complete(backend, request: GenerationRequest) -> str:
    """First completion's text from any backend."""
    return backend.complete(request)


def classify_ood(backend, sample, record, mode, label_space,
                 strict_source: str = "ood", route_hint: str | None = None,
                 temperature: float = 0.7, top_p: float = 0.95,
                 max_tokens: int = 16, breakdown=None,
                 template_dir: str | None = None):
    """Digest -> prompt -> completion -> canonical label, as one record.

    Returns (PredictionRecord, PromptBundle). Unmappable generations keep
    the raw text for audit under the UNMAPPED label.
    """
    digest = build_digest(record, sample)
    extra = {"detector_route": route_hint} if route_hint else None
    bundle = render_prompt(mode, label_space, digest, strict_source=strict_source,
                           extra_context=extra, template_dir=template_dir)
    request = GenerationRequest(prompt=bundle.rendered_text,
                                temperature=temperature, top_p=top_p,
                                max_tokens=max_tokens, request_id=sample.id)
    text = complete(backend, request)
    label = canonicalize_label(text, bundle.candidates)
    prediction = PredictionRecord(sample_id=sample.id, route=ROUTE_OOD,
                                  label=label, breakdown=breakdown,
                                  raw_text=text)
    return prediction, bundle


class _FifoGate:
    """Counting gate admitting waiters strictly in arrival order."""

    def __init__(self, capacity: int):
        self._capacity = capacity
        self._lock = threading.Lock()
        self._waiters: deque[threading.Event] = deque()
        self._active = 0

    def acquire(self) -> None:
        with self._lock:
            if self._active < self._capacity and not self._waiters:
                self._active += 1
                return
            event = threading.Event()
            self._waiters.append(event)
        event.wait()

    def release(self) -> None:
        with self._lock:
            if self._waiters:
                self._waiters.popleft().set()  # hand the slot over
            else:
                self._active -= 1

    def __enter__(self):
        self.acquire()
        return self

    def __exit__(self, *exc):
        self.release()
        return False


@dataclass
class LlmGateway:
    """A backend plus in-flight admission control and audit logging."""

    backend: object
    in_flight_cap: int = 4
    audit_path: str | None = None
    _gate: _FifoGate = field(init=False, repr=False)
    _audit_lock: threading.Lock = field(init=False, repr=False)

    def __post_init__(self):
        self._gate = _FifoGate(self.in_flight_cap)
        self._audit_lock = threading.Lock()

    def complete(self, request: GenerationRequest) -> str:
        with self._gate:
            text = self.backend.complete(request)
        self._audit({"request_id": request.request_id,
                     "backend": getattr(self.backend, "kind", "unknown"),
                     "prompt": request.prompt, "response": text})
        return text

    def classify_ood(self, sample, record, mode, label_space, **kwargs):
        with self._gate:
            prediction, bundle = classify_ood(self.backend, sample, record,
                                              mode, label_space, **kwargs)
        self._audit({"request_id": sample.id,
                     "backend": getattr(self.backend, "kind", "unknown"),
                     "mode": bundle.mode.value,
                     "template_hash": bundle.template_hash,
                     "prompt": bundle.rendered_text,
                     "response": prediction.raw_text,
                     "label": prediction.label})
        return prediction

    def _audit(self, entry: dict) -> None:
        if self.audit_path is None:
            return
        with self._audit_lock:
            with open(self.audit_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry) + "\n")
