import threading

import pytest

from coderank.backends import MockBackend, ScoreRequest
from coderank.cache import (
    CachedScoringBackend,
    JsonRecordStore,
    JudgmentStore,
    judgment_cache_key,
    score_cache_key,
)


def test_record_store_roundtrip(tmp_path):
    store = JsonRecordStore(tmp_path)
    assert store.get("k") is None
    store.put("k", {"a": 1})
    assert store.get("k") == {"a": 1}


def test_record_store_one_file_per_key(tmp_path):
    store = JsonRecordStore(tmp_path)
    store.put("k1", {"a": 1})
    store.put("k2", {"a": 2})
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == ["k1.json", "k2.json"]


def test_corrupt_record_behaves_like_miss(tmp_path):
    store = JsonRecordStore(tmp_path)
    (tmp_path / "bad.json").write_text("{not json", encoding="utf-8")
    assert store.get("bad") is None


def test_keys_distinguish_all_parts():
    base = score_cache_key("m", "p", "c")
    assert score_cache_key("m2", "p", "c") != base
    assert score_cache_key("m", "p2", "c") != base
    assert score_cache_key("m", "p", "c2") != base
    assert judgment_cache_key("m", "p", "c") != base


def test_cached_backend_hits_skip_inner(tmp_path):
    inner = MockBackend(score_table={("p", "c"): [-1.0, -2.0]})
    cached = CachedScoringBackend(inner, tmp_path)
    first = cached.score_continuation(ScoreRequest("p", "c"))
    second = cached.score_continuation(ScoreRequest("p", "c"))
    assert first == second
    assert inner.score_calls == 1
    # record carries the stated fields
    record = JsonRecordStore(tmp_path / "scores").get(
        score_cache_key("mock", "p", "c")
    )
    assert record is not None
    assert record["total_logprob"] == pytest.approx(-3.0)
    assert record["token_count"] == 2
    assert "timestamp" in record


def test_cache_persists_across_instances(tmp_path):
    inner = MockBackend(score_table={("p", "c"): [-0.5]})
    CachedScoringBackend(inner, tmp_path).score_continuation(ScoreRequest("p", "c"))
    # fresh wrapper over an empty backend still answers from disk
    empty = MockBackend()
    result = CachedScoringBackend(empty, tmp_path).score_continuation(
        ScoreRequest("p", "c")
    )
    assert result.total_logprob == pytest.approx(-0.5)
    assert empty.score_calls == 0


def test_concurrent_writers_single_key(tmp_path):
    store = JsonRecordStore(tmp_path)
    errors = []

    def write(i):
        try:
            store.put("key", {"value": 42})
        except Exception as exc:  # pragma: no cover
            errors.append(exc)

    threads = [threading.Thread(target=write, args=(i,)) for i in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert store.get("key") == {"value": 42}


def test_judgment_store_roundtrip(tmp_path):
    store = JudgmentStore(tmp_path)
    assert store.get("m", "a", "b") is None
    store.put("m", "a", "b", True, "yes")
    record = store.get("m", "a", "b")
    assert record["equivalent"] is True
    assert record["raw_response"] == "yes"
