"""Content-addressed on-disk records for deterministic replay.

One file per key; values are small JSON records. Writes go through a
temporary file and an atomic rename, so concurrent readers never observe a
partial record and concurrent writers of the same key simply race to store
identical content.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
import time
from pathlib import Path

from .backends import Backend, GenRequest, ScoreRequest, ScoreResult


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def score_cache_key(model_name: str, prompt_text: str, continuation_text: str) -> str:
    """Key a score by model name, prompt hash, and continuation hash."""
    material = "|".join(["score", model_name, _sha256(prompt_text), _sha256(continuation_text)])
    return _sha256(material)


def judgment_cache_key(model_name: str, text_a: str, text_b: str) -> str:
    """Key a pairwise equivalence judgment by model and both text hashes."""
    material = "|".join(["judgment", model_name, _sha256(text_a), _sha256(text_b)])
    return _sha256(material)


class JsonRecordStore:
    """Directory of ``<key>.json`` records with atomic writes."""

    def __init__(self, directory: str | Path):
        self._dir = Path(directory)
        self._dir.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _path(self, key: str) -> Path:
        return self._dir / f"{key}.json"

    def _key_lock(self, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        try:
            with path.open("r", encoding="utf-8") as fh:
                return json.load(fh)
        except FileNotFoundError:
            return None
        except ValueError:
            # A corrupt record behaves like a miss and gets rewritten.
            return None

    def put(self, key: str, record: dict) -> None:
        path = self._path(key)
        with self._key_lock(key):
            fd, tmp_name = tempfile.mkstemp(dir=self._dir, suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as fh:
                    json.dump(record, fh, sort_keys=True)
                os.replace(tmp_name, path)
            except BaseException:
                try:
                    os.unlink(tmp_name)
                except OSError:
                    pass
                raise


class CachedScoringBackend:
    """Wrap a backend with an on-disk cache of ScoreResults.

    Only scoring is cached; sampling stays live. Identical requests
    therefore return identical results for the lifetime of the cache
    directory, across processes and across sweep reruns.
    """

    def __init__(self, inner: Backend, cache_dir: str | Path):
        self._inner = inner
        self._store = JsonRecordStore(Path(cache_dir) / "scores")

    @property
    def model_name(self) -> str:
        return self._inner.model_name

    def score_continuation(self, req: ScoreRequest) -> ScoreResult:
        key = score_cache_key(self.model_name, req.prompt_text, req.continuation_text)
        record = self._store.get(key)
        if record is not None:
            return ScoreResult(
                total_logprob=float(record["total_logprob"]),
                token_count=int(record["token_count"]),
            )
        result = self._inner.score_continuation(req)
        self._store.put(
            key,
            {
                "total_logprob": result.total_logprob,
                "token_count": result.token_count,
                "timestamp": time.time(),
            },
        )
        return result

    def generate(self, req: GenRequest, num_samples: int) -> list[str]:
        return self._inner.generate(req, num_samples)


class JudgmentStore:
    """On-disk cache of pairwise equivalence verdicts, sharing the score
    cache's directory scheme."""

    def __init__(self, cache_dir: str | Path):
        self._store = JsonRecordStore(Path(cache_dir) / "judgments")

    def get(self, model_name: str, text_a: str, text_b: str) -> dict | None:
        return self._store.get(judgment_cache_key(model_name, text_a, text_b))

    def put(self, model_name: str, text_a: str, text_b: str, equivalent: bool, raw_response: str) -> None:
        self._store.put(
            judgment_cache_key(model_name, text_a, text_b),
            {
                "equivalent": bool(equivalent),
                "raw_response": raw_response,
                "timestamp": time.time(),
            },
        )
