"""Text-model backends: continuation scoring and sampling.

Two implementations share one interface. ``HttpBackend`` speaks an
OpenAI-style completions protocol with echoed per-token log-probabilities;
``MockBackend`` is a deterministic in-memory table for tests. All
probabilities are carried in natural-log space.
"""

from __future__ import annotations

import json
import logging
import math
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol, Sequence

from .errors import ProtocolError, TransportError, UnknownPair

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoreRequest:
    """A prompt/continuation pair whose continuation is to be scored."""

    prompt_text: str
    continuation_text: str


@dataclass(frozen=True)
class ScoreResult:
    """Total log-probability of a continuation plus the number of
    continuation tokens that contributed to the sum."""

    total_logprob: float
    token_count: int

    def __post_init__(self):
        if not math.isfinite(self.total_logprob):
            raise ValueError("total_logprob must be finite")
        if self.token_count < 1:
            raise ValueError("token_count must be >= 1")


@dataclass(frozen=True)
class GenRequest:
    """A sampling request. Temperature and token budget are always set
    explicitly by the call site; the backend adds no hidden defaults."""

    prompt_text: str
    sampling_temperature: float
    max_tokens: int
    stop_markers: tuple[str, ...] = ()

    def __post_init__(self):
        if self.sampling_temperature <= 0:
            raise ValueError("sampling_temperature must be > 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")


@dataclass(frozen=True)
class BackendConfig:
    base_url: str
    model_name: str
    auth_token: str | None = None
    request_timeout: float = 120.0
    max_retries: int = 3
    max_concurrent_requests: int = 4

    def __post_init__(self):
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_concurrent_requests < 1:
            raise ValueError("max_concurrent_requests must be >= 1")


class Backend(Protocol):
    """Uniform scoring/sampling interface implemented by all backends."""

    @property
    def model_name(self) -> str: ...

    def score_continuation(self, req: ScoreRequest) -> ScoreResult: ...

    def generate(self, req: GenRequest, num_samples: int) -> list[str]: ...


def truncate_at_markers(text: str, markers: Sequence[str]) -> str:
    """Cut ``text`` at the earliest occurrence of any marker."""
    cut = len(text)
    for marker in markers:
        if not marker:
            continue
        idx = text.find(marker)
        if idx != -1 and idx < cut:
            cut = idx
    return text[:cut]


class MockBackend:
    """Deterministic in-memory backend for tests.

    ``score_table`` maps ``(prompt, continuation)`` to the per-token
    log-probabilities of the continuation. ``gen_table`` maps a prompt to
    the completions it yields, in order. Both tables are frozen at
    construction; only call counters mutate afterwards, so the mock is safe
    to share across threads.
    """

    def __init__(
        self,
        score_table: Mapping[tuple[str, str], Sequence[float]] | None = None,
        gen_table: Mapping[str, Sequence[str]] | None = None,
        model_name: str = "mock",
    ):
        self._score_table = {
            key: tuple(float(v) for v in values)
            for key, values in (score_table or {}).items()
        }
        self._gen_table = {
            key: tuple(values) for key, values in (gen_table or {}).items()
        }
        self._model_name = model_name
        self._lock = threading.Lock()
        self._score_calls = 0
        self._generate_calls = 0

    @property
    def model_name(self) -> str:
        return self._model_name

    @property
    def score_calls(self) -> int:
        with self._lock:
            return self._score_calls

    @property
    def generate_calls(self) -> int:
        with self._lock:
            return self._generate_calls

    def score_continuation(self, req: ScoreRequest) -> ScoreResult:
        if not req.continuation_text:
            raise ValueError("continuation_text must be non-empty")
        with self._lock:
            self._score_calls += 1
        key = (req.prompt_text, req.continuation_text)
        if key not in self._score_table:
            raise UnknownPair(
                f"no scripted score for prompt {req.prompt_text[:60]!r} / "
                f"continuation {req.continuation_text[:60]!r}"
            )
        token_logprobs = self._score_table[key]
        return ScoreResult(
            total_logprob=float(sum(token_logprobs)),
            token_count=len(token_logprobs),
        )

    def generate(self, req: GenRequest, num_samples: int) -> list[str]:
        if num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        with self._lock:
            self._generate_calls += 1
        if req.prompt_text not in self._gen_table:
            raise UnknownPair(
                f"no scripted completions for prompt {req.prompt_text[:80]!r}"
            )
        completions: list[str] = []
        for raw in self._gen_table[req.prompt_text]:
            text = truncate_at_markers(raw, req.stop_markers)
            if not text.strip():
                logger.debug("mock completion empty after truncation; dropped")
                continue
            completions.append(text)
            if len(completions) == num_samples:
                break
        return completions


def mock_backend_from_file(path: str) -> "MockBackend":
    """Build a MockBackend from a JSON script file.

    Expected shape::

        {
          "model_name": "mock",
          "scores": [{"prompt": "...", "continuation": "...",
                      "token_logprobs": [-1.0, -0.5]}],
          "generations": [{"prompt": "...", "completions": ["..."]}]
        }
    """
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    score_table = {
        (entry["prompt"], entry["continuation"]): entry["token_logprobs"]
        for entry in payload.get("scores", [])
    }
    gen_table = {
        entry["prompt"]: entry["completions"]
        for entry in payload.get("generations", [])
    }
    return MockBackend(
        score_table=score_table,
        gen_table=gen_table,
        model_name=payload.get("model_name", "mock"),
    )


# (status_code, body_bytes) returned by a transport callable.
TransportResponse = tuple[int, bytes]


@dataclass
class HttpBackend:
    """Client for a completions endpoint with echoed log-probabilities.

    Continuations are scored by submitting ``prompt + continuation`` with
    ``echo`` enabled and zero new tokens, then keeping only the tokens whose
    character offset falls inside the continuation. A token that starts
    before the prompt/continuation boundary belongs to the prompt, even if
    it straddles the boundary; this offset convention is the one the rest
    of the pipeline relies on for reproducible scores.

    Retried requests are byte-identical: the payload is serialized once and
    resent as-is. At most ``max_concurrent_requests`` requests are in
    flight at any time, enforced with a semaphore around the transport
    call. A custom ``transport`` (``payload_bytes -> (status, body)``) can
    be injected for tests.
    """

    config: BackendConfig
    transport: Callable[[bytes], TransportResponse] | None = None
    sleeper: Callable[[float], None] = time.sleep
    _semaphore: threading.BoundedSemaphore = field(init=False, repr=False)
    _session: object = field(init=False, repr=False, default=None)

    def __post_init__(self):
        self._semaphore = threading.BoundedSemaphore(
            self.config.max_concurrent_requests
        )
        if self.transport is None:
            import requests

            self._session = requests.Session()
            self.transport = self._requests_transport

    @property
    def model_name(self) -> str:
        return self.config.model_name

    @property
    def _endpoint(self) -> str:
        return self.config.base_url.rstrip("/") + "/completions"

    def _requests_transport(self, payload: bytes) -> TransportResponse:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.config.auth_token:
            headers["Authorization"] = f"Bearer {self.config.auth_token}"
        try:
            resp = self._session.post(
                self._endpoint,
                data=payload,
                headers=headers,
                timeout=self.config.request_timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        return resp.status_code, resp.content

    def _post_with_retries(self, payload: bytes) -> dict:
        last_error: str = ""
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self.sleeper(0.5 * 2 ** (attempt - 1))
            try:
                with self._semaphore:
                    status, body = self.transport(payload)
            except TransportError as exc:
                last_error = str(exc)
                logger.warning("transport failure (attempt %d): %s", attempt, exc)
                continue
            if status == 429 or status >= 500:
                last_error = f"HTTP {status}"
                logger.warning("retryable HTTP status %d (attempt %d)", status, attempt)
                continue
            if status != 200:
                raise ProtocolError(f"HTTP {status}: {body[:200]!r}")
            try:
                return json.loads(body)
            except ValueError as exc:
                raise ProtocolError(f"response is not valid JSON: {exc}") from exc
        raise TransportError(
            f"request failed after {self.config.max_retries + 1} attempts: {last_error}"
        )

    def score_continuation(self, req: ScoreRequest) -> ScoreResult:
        if not req.continuation_text:
            raise ValueError("continuation_text must be non-empty")
        payload = json.dumps(
            {
                "model": self.config.model_name,
                "prompt": req.prompt_text + req.continuation_text,
                "max_tokens": 0,
                "echo": True,
                "logprobs": 0,
                "temperature": 1.0,
            },
            sort_keys=True,
        ).encode("utf-8")
        body = self._post_with_retries(payload)
        try:
            logprobs = body["choices"][0]["logprobs"]
            offsets = logprobs["text_offset"]
            token_logprobs = logprobs["token_logprobs"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(
                "response lacks per-token log-probabilities"
            ) from exc
        boundary = len(req.prompt_text)
        total = 0.0
        count = 0
        for offset, logprob in zip(offsets, token_logprobs):
            if offset < boundary:
                continue
            if logprob is None:
                raise ProtocolError(
                    "continuation token has no log-probability"
                )
            total += float(logprob)
            count += 1
        if count == 0:
            raise ProtocolError("no tokens aligned to the continuation span")
        return ScoreResult(total_logprob=total, token_count=count)

    def generate(self, req: GenRequest, num_samples: int) -> list[str]:
        if num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        completions: list[str] = []
        missing = num_samples
        for round_idx in range(self.config.max_retries + 1):
            payload = json.dumps(
                {
                    "model": self.config.model_name,
                    "prompt": req.prompt_text,
                    "max_tokens": req.max_tokens,
                    "temperature": req.sampling_temperature,
                    "n": missing,
                    "stop": list(req.stop_markers) or None,
                },
                sort_keys=True,
            ).encode("utf-8")
            body = self._post_with_retries(payload)
            try:
                texts = [choice["text"] for choice in body["choices"]]
            except (KeyError, TypeError) as exc:
                raise ProtocolError("response lacks completion text") from exc
            for text in texts:
                text = truncate_at_markers(text, req.stop_markers)
                if not text.strip():
                    logger.warning(
                        "empty completion after truncation (round %d); dropped",
                        round_idx,
                    )
                    continue
                completions.append(text)
            missing = num_samples - len(completions)
            if missing <= 0:
                return completions[:num_samples]
        logger.warning(
            "generation returned %d/%d non-empty completions",
            len(completions),
            num_samples,
        )
        return completions
