"""Run reports: per-task fragments, aggregate accuracy, serialization.

Reports serialize to JSON with sorted keys and full-precision floats, so a
deterministic pipeline produces byte-identical report files.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import json

from .errors import EmptyEvaluation
from .rsa import METHODS


@dataclass
class TaskReport:
    """Everything the aggregate report needs to know about one task."""

    task_id: str
    skipped: bool = False
    error: str = ""
    num_candidates: int = 0
    duplicates_collapsed: int = 0
    num_instructions: int = 0
    instructions_per_candidate: dict[int, int] = field(default_factory=dict)
    num_clusters: int = 0
    main_cluster_size: int = 0
    selections: dict[str, int] = field(default_factory=dict)
    selection_scores: dict[str, float] = field(default_factory=dict)
    candidate_passed: dict[int, bool] | None = None
    elapsed_s: float = 0.0

    def to_payload(self) -> dict:
        return {
            "task_id": self.task_id,
            "skipped": self.skipped,
            "error": self.error,
            "num_candidates": self.num_candidates,
            "duplicates_collapsed": self.duplicates_collapsed,
            "num_instructions": self.num_instructions,
            "instructions_per_candidate": {
                str(k): v for k, v in sorted(self.instructions_per_candidate.items())
            },
            "num_clusters": self.num_clusters,
            "main_cluster_size": self.main_cluster_size,
            "selections": dict(sorted(self.selections.items())),
            "selection_scores": {
                k: float(v) for k, v in sorted(self.selection_scores.items())
            },
            "candidate_passed": None
            if self.candidate_passed is None
            else {str(k): v for k, v in sorted(self.candidate_passed.items())},
            "elapsed_s": float(self.elapsed_s),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "TaskReport":
        passed = payload.get("candidate_passed")
        return cls(
            task_id=str(payload["task_id"]),
            skipped=bool(payload.get("skipped", False)),
            error=str(payload.get("error", "")),
            num_candidates=int(payload.get("num_candidates", 0)),
            duplicates_collapsed=int(payload.get("duplicates_collapsed", 0)),
            num_instructions=int(payload.get("num_instructions", 0)),
            instructions_per_candidate={
                int(k): int(v)
                for k, v in payload.get("instructions_per_candidate", {}).items()
            },
            num_clusters=int(payload.get("num_clusters", 0)),
            main_cluster_size=int(payload.get("main_cluster_size", 0)),
            selections={k: int(v) for k, v in payload.get("selections", {}).items()},
            selection_scores={
                k: float(v) for k, v in payload.get("selection_scores", {}).items()
            },
            candidate_passed=None
            if passed is None
            else {int(k): bool(v) for k, v in passed.items()},
            elapsed_s=float(payload.get("elapsed_s", 0.0)),
        )


def evaluated_reports(per_task: list[TaskReport]) -> list[TaskReport]:
    """Tasks that ran to completion and have pass/fail data."""
    return [
        t
        for t in per_task
        if not t.skipped and t.candidate_passed is not None and t.selections
    ]


def compute_accuracy(per_task: list[TaskReport]) -> dict[str, float]:
    """Per-method fraction of tasks whose selected candidate passed.

    Skipped tasks count toward neither numerator nor denominator.
    """
    usable = evaluated_reports(per_task)
    if not usable:
        raise EmptyEvaluation("no evaluated tasks to compute accuracy over")
    accuracy = {}
    for method in METHODS:
        hits = 0
        for task in usable:
            selected = task.selections[method]
            if task.candidate_passed.get(selected, False):
                hits += 1
        accuracy[method] = hits / len(usable)
    return accuracy


def filter_solved_subset(per_task: list[TaskReport]) -> list[TaskReport]:
    """Keep tasks where the first candidate fails but some candidate passes.

    This is the regime where reranking is non-trivial: a single draw would
    miss, yet the pool contains a passing program.
    """
    kept = []
    for task in evaluated_reports(per_task):
        if not task.candidate_passed:
            continue
        first_id = min(task.candidate_passed)
        solved_at_1 = task.candidate_passed[first_id]
        solved_at_pool = any(task.candidate_passed.values())
        if not solved_at_1 and solved_at_pool:
            kept.append(task)
    return kept


@dataclass
class RunReport:
    """Aggregate over one run: configuration echoes, per-task fragments,
    and accuracy when pass/fail data exists."""

    model_name: str
    alpha: float
    n: int
    m: int
    per_task: list[TaskReport] = field(default_factory=list)
    accuracy: dict[str, float] | None = None
    total_elapsed_s: float = 0.0

    @property
    def num_tasks(self) -> int:
        return len(self.per_task)

    @property
    def num_skipped(self) -> int:
        return sum(1 for t in self.per_task if t.skipped)

    def to_payload(self) -> dict:
        return {
            "model_name": self.model_name,
            "alpha": float(self.alpha),
            "n": self.n,
            "m": self.m,
            "num_tasks": self.num_tasks,
            "num_skipped": self.num_skipped,
            "accuracy": None
            if self.accuracy is None
            else {k: float(v) for k, v in sorted(self.accuracy.items())},
            "total_elapsed_s": float(self.total_elapsed_s),
            "per_task": [t.to_payload() for t in self.per_task],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_payload(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_payload(cls, payload: dict) -> "RunReport":
        accuracy = payload.get("accuracy")
        return cls(
            model_name=str(payload["model_name"]),
            alpha=float(payload["alpha"]),
            n=int(payload["n"]),
            m=int(payload["m"]),
            per_task=[TaskReport.from_payload(t) for t in payload.get("per_task", [])],
            accuracy=None
            if accuracy is None
            else {k: float(v) for k, v in accuracy.items()},
            total_elapsed_s=float(payload.get("total_elapsed_s", 0.0)),
        )
