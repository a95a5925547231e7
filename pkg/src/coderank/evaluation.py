"""Candidate pass/fail evaluation seam.

The pipeline only needs something that maps (task, candidate) to an
outcome. Real execution goes through the subprocess runner client; tests
and execution-disabled runs use a fixture table.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Protocol

from .candidates import Candidate, Task

ERROR_KINDS = ("none", "assertion", "exception", "timeout", "crash")


@dataclass(frozen=True)
class ExecOutcome:
    passed: bool
    error_kind: str = "none"
    detail: str = ""
    duration_ms: int = 0

    def __post_init__(self):
        if self.error_kind not in ERROR_KINDS:
            raise ValueError(f"unknown error_kind {self.error_kind!r}")
        if self.passed and self.error_kind != "none":
            raise ValueError("a passing outcome cannot carry an error kind")


class CandidateEvaluator(Protocol):
    def evaluate(self, task: Task, candidate: Candidate) -> ExecOutcome: ...


class FixtureEvaluator:
    """Outcome table keyed by (task_id, code_text); used whenever real
    execution is disabled."""

    def __init__(self, table: Mapping[tuple[str, str], bool]):
        self._table = dict(table)

    def evaluate(self, task: Task, candidate: Candidate) -> ExecOutcome:
        key = (task.task_id, candidate.code_text)
        if key not in self._table:
            raise KeyError(
                f"no fixture outcome for task {task.task_id!r}, "
                f"candidate {candidate.candidate_id}"
            )
        passed = self._table[key]
        return ExecOutcome(
            passed=passed, error_kind="none" if passed else "assertion"
        )
