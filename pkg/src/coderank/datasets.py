"""Benchmark dataset loading.

Two record schemas are understood: "humaneval" (unfinished function with an
embedded docstring) and "mbpp" (plain text instruction plus a list of
assert statements). Files may be JSON lines or a single JSON array.
"""

from __future__ import annotations

import json
import logging
import re
import textwrap
from pathlib import Path

from .candidates import Task
from .errors import SchemaError

logger = logging.getLogger(__name__)

FORMATS = ("humaneval", "mbpp")

_DOCSTRING = re.compile(r'("""|\'\'\')(.*?)\1', re.DOTALL)
_ASSERT_CALL = re.compile(r"assert\s+\(?\s*([A-Za-z_][A-Za-z0-9_]*)\s*\(")


def _read_records(path: str | Path) -> list[dict]:
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.strip()
    if not stripped:
        return []
    if stripped.startswith("["):
        try:
            records = json.loads(stripped)
        except ValueError as exc:
            raise SchemaError(f"file is not valid JSON: {exc}") from exc
        if not isinstance(records, list):
            raise SchemaError("top-level JSON value must be an array")
        return records
    records = []
    for index, line in enumerate(stripped.splitlines()):
        line = line.strip()
        if not line:
            continue
        try:
            records.append(json.loads(line))
        except ValueError as exc:
            raise SchemaError(f"record {index} is not valid JSON: {exc}", index) from exc
    return records


def extract_docstring(prompt: str) -> str:
    """The first triple-quoted block in an unfinished function, dedented."""
    match = _DOCSTRING.search(prompt)
    if match is None:
        return ""
    return textwrap.dedent(match.group(2)).strip()


def _require(record: dict, key: str, index: int) -> object:
    if key not in record:
        raise SchemaError(f"record {index} lacks required key {key!r}", index)
    return record[key]


def _task_from_humaneval(record: dict, index: int) -> Task:
    prompt = str(_require(record, "prompt", index))
    instruction = extract_docstring(prompt) or prompt.strip()
    if not instruction:
        raise SchemaError(f"record {index} has an empty prompt", index)
    return Task(
        task_id=str(_require(record, "task_id", index)),
        instruction_i0=instruction,
        prompt_scaffold=prompt,
        entry_point=str(record.get("entry_point", "")),
        tests=str(record.get("test", "")),
    )


def _task_from_mbpp(record: dict, index: int) -> Task:
    instruction = str(_require(record, "text", index)).strip()
    if not instruction:
        raise SchemaError(f"record {index} has an empty instruction", index)
    test_list = _require(record, "test_list", index)
    if not isinstance(test_list, list):
        raise SchemaError(f"record {index}: test_list must be a list", index)
    parts = []
    setup = str(record.get("test_setup_code", "") or "")
    if setup.strip():
        parts.append(setup)
    parts.extend(str(t) for t in test_list)
    tests = "\n".join(parts)
    entry_match = _ASSERT_CALL.search(tests)
    return Task(
        task_id=str(_require(record, "task_id", index)),
        instruction_i0=instruction,
        prompt_scaffold="",
        entry_point=entry_match.group(1) if entry_match else "",
        tests=tests,
    )


def load_dataset(path: str | Path, fmt: str) -> list[Task]:
    """Parse a dataset file into tasks. An empty file is an empty list."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown dataset format {fmt!r}; expected one of {FORMATS}")
    records = _read_records(path)
    builder = _task_from_humaneval if fmt == "humaneval" else _task_from_mbpp
    tasks = []
    seen_ids: set[str] = set()
    for index, record in enumerate(records):
        if not isinstance(record, dict):
            raise SchemaError(f"record {index} is not an object", index)
        task = builder(record, index)
        if task.task_id in seen_ids:
            raise SchemaError(f"record {index}: duplicate task_id {task.task_id!r}", index)
        seen_ids.add(task.task_id)
        tasks.append(task)
    logger.info("loaded %d tasks from %s (%s)", len(tasks), path, fmt)
    return tasks
