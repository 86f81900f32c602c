"""Uniform access to language-vision backends.

Four backend families sit behind one ``complete(request)`` interface:

    MockOracleBackend   deterministic simulated reviewer driven by per-study
                        ground truth and configurable keep/discard/refusal
                        rates (the desk-scale stand-in for commercial LVMs)
    ReplayBackend       bit-exact playback from a cassette file
    RecordingBackend    wraps any backend and persists its exchanges
    Live HTTP backends  chat-completions and messages wire dialects with
                        base64 PNG image parts

``send`` adds bounded retry with exponential backoff for transport errors
(refusals are never retried) and fills in latency. ``parse_verdict`` turns
any response into a keep/discard/reject decision and is total: unparseable
text maps to reject, never to a silent discard.
"""

from __future__ import annotations

import base64
import hashlib
import json
import random
import struct
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Protocol

import httpx

from .model import Decision, ValidationError, Verdict, VerdictSource
from .prompts import PromptBundle

DEFAULT_BACKOFF_S = (1.0, 2.0, 4.0)
LIVE_CONCURRENCY_LIMIT = 4


class BackendConfigError(RuntimeError):
    """Authentication/configuration problems, surfaced without retry."""


class ReplayMissError(RuntimeError):
    def __init__(self, exchange_hash: str):
        super().__init__(f"cassette has no entry for request {exchange_hash}")
        self.exchange_hash = exchange_hash


class TransportFailure(RuntimeError):
    """Retryable transport-level failure (timeout, connection, 5xx)."""

    def __init__(self, kind: str):
        super().__init__(kind)
        self.kind = kind


class OutcomeKind(str, Enum):
    TEXT = "text"
    REFUSAL = "refusal"
    TRANSPORT_ERROR = "transport_error"


@dataclass(frozen=True)
class LvmRequest:
    bundle: PromptBundle
    backend_id: str = "mock"
    temperature: float = 0.0
    max_retries: int = 3
    timeout_s: float = 60.0
    candidate_id: str = ""

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")


@dataclass(frozen=True)
class LvmResponse:
    kind: OutcomeKind
    content: str
    backend_id: str
    exchange_hash: str
    latency_ms: float = 0.0


@dataclass(frozen=True)
class MockOracleParams:
    """Simulated reviewer rates, all in [0, 1].

    ``keep_rate_true`` is the chance a genuine nodule is kept (sensitivity),
    ``discard_rate_false`` the chance a false candidate is discarded
    (specificity). ``refusal_rate`` is multiplied by
    ``conceal_off_refusal_multiplier`` when the prompt does not conceal its
    intent, modeling the refusal spike seen without that strategy.
    """

    keep_rate_true: float = 1.0
    discard_rate_false: float = 1.0
    refusal_rate: float = 0.0
    conceal_off_refusal_multiplier: float = 1.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for name in ("keep_rate_true", "discard_rate_false", "refusal_rate"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValidationError(f"{name} must be in [0, 1], got {value}")
        if self.conceal_off_refusal_multiplier < 0:
            raise ValidationError("refusal multiplier must be >= 0")


def request_hash(request: LvmRequest) -> str:
    """Canonical digest of everything the backend sees.

    The backend id stays out of the digest: a cassette recorded against one
    backend must replay against another, so the key can only depend on the
    prompt payload itself.
    """
    h = hashlib.sha256()
    h.update(struct.pack("<d", request.temperature))
    h.update(request.candidate_id.encode())
    h.update(request.bundle.text.encode())
    for image in request.bundle.images:
        h.update(struct.pack("<I", len(image)))
        h.update(image)
    return h.hexdigest()


class Backend(Protocol):
    id: str

    def complete(self, request: LvmRequest) -> LvmResponse: ...


# --- mock oracle ------------------------------------------------------------

_RATIONALE_OPENERS = (
    "The outlined region sits inside one of the colored zones.",
    "The outline encloses a small, well defined area of the image.",
    "The marked area is clearly visible against the surrounding texture.",
)
_KEEP_SENTENCES = (
    "Its appearance is compact and roughly round, which fits the finding in the note.",
    "The location agrees with the note, and the shape is consistent with a genuine finding.",
    "Nothing about the region suggests an elongated or border structure.",
)
_DISCARD_SENTENCES = (
    "Its elongated, branching appearance suggests an ordinary vessel-like structure.",
    "The location does not agree with the note, and the texture looks like background.",
    "It hugs the zone border, which is typical of a spurious detection.",
)
_REFUSAL_TEXTS = (
    "I cannot assist with interpreting this image.",
    "I am not able to provide an assessment of this request.",
)


def _mock_rng(seed: int, candidate_id: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}|{candidate_id}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "little"))


def mock_respond(
    bundle: PromptBundle,
    is_true_nodule: bool,
    params: MockOracleParams,
    candidate_id: str = "",
) -> LvmResponse:
    """Deterministic simulated review of one candidate.

    The draw is keyed by (params.rng_seed, candidate_id) so repeated calls
    and concurrent runs agree. The emitted text always ends with the FINAL
    ANSWER line unless the request is refused.
    """
    rng = _mock_rng(params.rng_seed, candidate_id)
    refusal_p = params.refusal_rate
    if not bundle.config.conceal_medical_intent:
        refusal_p = min(1.0, refusal_p * params.conceal_off_refusal_multiplier)
    if rng.random() < refusal_p:
        return LvmResponse(
            kind=OutcomeKind.REFUSAL,
            content=_REFUSAL_TEXTS[rng.randrange(len(_REFUSAL_TEXTS))],
            backend_id="mock",
            exchange_hash="",
        )
    if is_true_nodule:
        decision = "KEEP" if rng.random() < params.keep_rate_true else "DISCARD"
    else:
        decision = "DISCARD" if rng.random() < params.discard_rate_false else "KEEP"
    body = [
        _RATIONALE_OPENERS[rng.randrange(len(_RATIONALE_OPENERS))],
        (_KEEP_SENTENCES if decision == "KEEP" else _DISCARD_SENTENCES)[
            rng.randrange(3)
        ],
        f"FINAL ANSWER: {decision}",
    ]
    return LvmResponse(
        kind=OutcomeKind.TEXT,
        content="\n".join(body),
        backend_id="mock",
        exchange_hash="",
    )


class MockOracleBackend:
    """Backend facade over ``mock_respond`` with a per-study truth table."""

    def __init__(self, params: MockOracleParams, truth_flags: dict[str, bool]):
        self.id = "mock"
        self.params = params
        self.truth_flags = truth_flags

    def complete(self, request: LvmRequest) -> LvmResponse:
        if request.candidate_id not in self.truth_flags:
            raise BackendConfigError(
                f"mock oracle has no ground-truth flag for candidate {request.candidate_id!r}"
            )
        response = mock_respond(
            request.bundle,
            self.truth_flags[request.candidate_id],
            self.params,
            candidate_id=request.candidate_id,
        )
        return _with_hash(response, request)


def _with_hash(response: LvmResponse, request: LvmRequest) -> LvmResponse:
    return LvmResponse(
        kind=response.kind,
        content=response.content,
        backend_id=response.backend_id,
        exchange_hash=request_hash(request),
        latency_ms=response.latency_ms,
    )


# --- send with retry --------------------------------------------------------

def send(
    request: LvmRequest,
    backend: Backend,
    sleep: Callable[[float], None] = time.sleep,
) -> LvmResponse:
    """Dispatch to a backend with bounded transport retries.

    Transport errors are retried up to ``request.max_retries`` times with
    1s/2s/4s backoff; refusals and parseable text are returned as-is.
    Configuration errors propagate immediately.
    """
    attempt = 0
    while True:
        start = time.perf_counter()
        try:
            response = backend.complete(request)
        except TransportFailure as failure:
            response = LvmResponse(
                kind=OutcomeKind.TRANSPORT_ERROR,
                content=failure.kind,
                backend_id=getattr(backend, "id", request.backend_id),
                exchange_hash=request_hash(request),
            )
        latency = (time.perf_counter() - start) * 1000.0
        response = LvmResponse(
            kind=response.kind,
            content=response.content,
            backend_id=response.backend_id,
            exchange_hash=response.exchange_hash or request_hash(request),
            latency_ms=latency,
        )
        if response.kind is OutcomeKind.TRANSPORT_ERROR and attempt < request.max_retries:
            sleep(DEFAULT_BACKOFF_S[min(attempt, len(DEFAULT_BACKOFF_S) - 1)])
            attempt += 1
            continue
        return response


# --- verdict parsing --------------------------------------------------------

_FINAL_ANSWER_KEEP = ("keep",)
_FINAL_ANSWER_DISCARD = ("discard",)
_AFFIRM_TERMS = (
    "true positive",
    "is a nodule",
    "is a genuine",
    "genuine finding",
    "consistent with a nodule",
    "should be kept",
    "keep it",
)
_NEGATE_TERMS = (
    "false positive",
    "not a nodule",
    "no nodule",
    "is an artifact",
    "vessel",
    "should be discarded",
    "discard it",
)


def parse_verdict(response: LvmResponse, candidate_id: str) -> Verdict:
    """Map any backend response to a keep/discard/reject verdict.

    Refusals and transport failures reject. Text is scanned for the last
    FINAL ANSWER line; failing that, a keyword scan over the final paragraph
    decides; still-ambiguous text rejects with rationale "unparseable".
    """
    if response.kind is OutcomeKind.REFUSAL:
        return Verdict(candidate_id, Decision.REJECT, response.content, VerdictSource.LVM)
    if response.kind is OutcomeKind.TRANSPORT_ERROR:
        return Verdict(
            candidate_id,
            Decision.REJECT,
            f"backend transport failure: {response.content}",
            VerdictSource.LVM,
        )

    text = response.content
    final_line = None
    for line in text.splitlines():
        if "final answer:" in line.lower():
            final_line = line.lower().split("final answer:", 1)[1].strip()
    if final_line is not None:
        token = final_line.split()[0].strip(".,!") if final_line.split() else ""
        if token in _FINAL_ANSWER_KEEP:
            return Verdict(candidate_id, Decision.KEEP, text, VerdictSource.LVM)
        if token in _FINAL_ANSWER_DISCARD:
            return Verdict(candidate_id, Decision.DISCARD, text, VerdictSource.LVM)

    paragraphs = [p.strip() for p in text.split("\n\n") if p.strip()]
    tail = paragraphs[-1].lower() if paragraphs else ""
    affirm = sum(term in tail for term in _AFFIRM_TERMS)
    negate = sum(term in tail for term in _NEGATE_TERMS)
    if affirm and not negate:
        return Verdict(candidate_id, Decision.KEEP, text, VerdictSource.LVM)
    if negate and not affirm:
        return Verdict(candidate_id, Decision.DISCARD, text, VerdictSource.LVM)
    return Verdict(candidate_id, Decision.REJECT, "unparseable", VerdictSource.LVM)


# --- cassette record/replay -------------------------------------------------

def _response_to_canonical_json(response: LvmResponse) -> bytes:
    # latency is wall-clock jitter; zero it so cassette bytes are stable
    payload = {
        "backend_id": response.backend_id,
        "content": response.content,
        "kind": response.kind.value,
        "latency_ms": 0.0,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _response_from_json(data: bytes, exchange_hash: str) -> LvmResponse:
    payload = json.loads(data.decode("utf-8"))
    return LvmResponse(
        kind=OutcomeKind(payload["kind"]),
        content=payload["content"],
        backend_id=payload["backend_id"],
        exchange_hash=exchange_hash,
        latency_ms=0.0,
    )


def _write_record(fh, exchange_hash: str, summary: str, response_bytes: bytes) -> None:
    for blob in (exchange_hash.encode(), summary.encode(), response_bytes):
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)


def read_cassette(path: Path | str) -> dict[str, LvmResponse]:
    """Load every record of a cassette file keyed by exchange hash."""
    path = Path(path)
    entries: dict[str, LvmResponse] = {}
    data = path.read_bytes()
    offset = 0

    def take() -> bytes:
        nonlocal offset
        if offset + 4 > len(data):
            raise ValueError("truncated cassette record")
        (length,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if offset + length > len(data):
            raise ValueError("truncated cassette record")
        blob = data[offset : offset + length]
        offset += length
        return blob

    while offset < len(data):
        exchange_hash = take().decode("utf-8")
        take()  # summary: informational only
        entries[exchange_hash] = _response_from_json(take(), exchange_hash)
    return entries


class RecordingBackend:
    """Wraps an inner backend and appends each exchange to a cassette."""

    def __init__(self, inner: Backend, cassette_path: Path | str):
        self.id = f"record({inner.id})"
        self.inner = inner
        self.cassette_path = Path(cassette_path)
        self._lock = threading.Lock()

    def complete(self, request: LvmRequest) -> LvmResponse:
        response = self.inner.complete(request)
        response = _with_hash(response, request)
        summary = f"candidate={request.candidate_id} backend={self.inner.id}"
        with self._lock:
            with open(self.cassette_path, "ab") as fh:
                _write_record(
                    fh,
                    response.exchange_hash,
                    summary,
                    _response_to_canonical_json(response),
                )
        return response


class ReplayBackend:
    """Serves recorded responses bit-exactly; cache misses are errors."""

    def __init__(self, cassette_path: Path | str):
        self.id = "replay"
        self.entries = read_cassette(cassette_path)

    def complete(self, request: LvmRequest) -> LvmResponse:
        key = request_hash(request)
        if key not in self.entries:
            raise ReplayMissError(key)
        return self.entries[key]


def record_and_replay(
    mode: str, cassette_path: Path | str, inner: Optional[Backend] = None
) -> Backend:
    """Build a record- or replay-mode backend wrapper."""
    if mode == "record":
        if inner is None:
            raise BackendConfigError("record mode requires a live inner backend")
        return RecordingBackend(inner, cassette_path)
    if mode == "replay":
        if not Path(cassette_path).exists():
            raise BackendConfigError(f"cassette {cassette_path} does not exist")
        return ReplayBackend(cassette_path)
    raise BackendConfigError(f"unknown record/replay mode {mode!r}")


# --- live HTTP backends -----------------------------------------------------

_REFUSAL_MARKERS = (
    "i cannot assist",
    "i can't assist",
    "i am not able to",
    "i'm not able to",
    "cannot help with",
    "i'm sorry, but i can't",
)


def classify_text_outcome(text: str) -> OutcomeKind:
    lowered = text.lower()
    if any(marker in lowered for marker in _REFUSAL_MARKERS):
        return OutcomeKind.REFUSAL
    return OutcomeKind.TEXT


@dataclass(frozen=True)
class LiveBackendConfig:
    """Connection settings for a live HTTP language-vision service.

    ``dialect`` selects the wire format: "chat" for chat-completions style
    payloads, "messages" for messages style. Credentials come from
    configuration or environment, never from code.
    """

    endpoint_url: str
    api_key: str
    model: str
    dialect: str = "chat"
    max_output_tokens: int = 1024

    def __post_init__(self) -> None:
        if self.dialect not in ("chat", "messages"):
            raise BackendConfigError(f"unknown dialect {self.dialect!r}")
        if not self.endpoint_url:
            raise BackendConfigError("endpoint_url is required")


def build_chat_payload(config: LiveBackendConfig, request: LvmRequest) -> dict:
    content: list[dict] = [{"type": "text", "text": request.bundle.text}]
    for image in request.bundle.images:
        encoded = base64.b64encode(image).decode("ascii")
        content.append(
            {
                "type": "image_url",
                "image_url": {"url": f"data:image/png;base64,{encoded}"},
            }
        )
    return {
        "model": config.model,
        "temperature": request.temperature,
        "max_tokens": config.max_output_tokens,
        "messages": [{"role": "user", "content": content}],
    }


def build_messages_payload(config: LiveBackendConfig, request: LvmRequest) -> dict:
    content: list[dict] = []
    for image in request.bundle.images:
        encoded = base64.b64encode(image).decode("ascii")
        content.append(
            {
                "type": "image",
                "source": {
                    "type": "base64",
                    "media_type": "image/png",
                    "data": encoded,
                },
            }
        )
    content.append({"type": "text", "text": request.bundle.text})
    return {
        "model": config.model,
        "temperature": request.temperature,
        "max_tokens": config.max_output_tokens,
        "messages": [{"role": "user", "content": content}],
    }


def extract_chat_text(payload: dict) -> str:
    return payload["choices"][0]["message"]["content"] or ""


def extract_messages_text(payload: dict) -> str:
    return "".join(
        part.get("text", "") for part in payload.get("content", []) if isinstance(part, dict)
    )


class LiveHttpBackend:
    """HTTP client for chat/messages dialect endpoints with base64 images."""

    _limiter = threading.Semaphore(LIVE_CONCURRENCY_LIMIT)

    def __init__(self, config: LiveBackendConfig, client: Optional[httpx.Client] = None):
        if not config.api_key:
            raise BackendConfigError("api key is not configured")
        self.id = f"{config.dialect}:{config.model}"
        self.config = config
        self._client = client or httpx.Client()

    def _headers(self) -> dict[str, str]:
        if self.config.dialect == "chat":
            return {"Authorization": f"Bearer {self.config.api_key}"}
        return {"x-api-key": self.config.api_key, "anthropic-version": "2023-06-01"}

    def complete(self, request: LvmRequest) -> LvmResponse:
        if self.config.dialect == "chat":
            payload = build_chat_payload(self.config, request)
            extract = extract_chat_text
        else:
            payload = build_messages_payload(self.config, request)
            extract = extract_messages_text
        with self._limiter:
            try:
                http_response = self._client.post(
                    self.config.endpoint_url,
                    json=payload,
                    headers=self._headers(),
                    timeout=request.timeout_s,
                )
            except httpx.TimeoutException as exc:
                raise TransportFailure("timeout") from exc
            except httpx.HTTPError as exc:
                raise TransportFailure(f"connection: {exc.__class__.__name__}") from exc
        if http_response.status_code in (401, 403):
            raise BackendConfigError(
                f"authentication failed ({http_response.status_code}) at {self.config.endpoint_url}"
            )
        if http_response.status_code >= 500 or http_response.status_code == 429:
            raise TransportFailure(f"http {http_response.status_code}")
        if http_response.status_code != 200:
            # policy-style 4xx: treat as refusal with the server's message
            return LvmResponse(
                kind=OutcomeKind.REFUSAL,
                content=http_response.text[:2000],
                backend_id=self.id,
                exchange_hash=request_hash(request),
            )
        text = extract(http_response.json())
        return LvmResponse(
            kind=classify_text_outcome(text),
            content=text,
            backend_id=self.id,
            exchange_hash=request_hash(request),
        )
