"""Sweep tooling: alpha sweeps and candidate-count subsampling sweeps.

Both sweeps rerun only the pure reranking math on artifacts that already
hold scores, partitions, and pass/fail outcomes; no backend calls happen
here. Output rows are plot-ready dictionaries, one per point.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .clustering import ClusterPartition, restrict_partition
from .errors import EmptyEvaluation
from .pipeline import TaskArtifacts
from .rsa import (
    METHODS,
    CalibrationParams,
    ScoreMatrix,
    rerank_all,
)


@dataclass(frozen=True)
class SweepSpec:
    alpha_values: tuple[float, ...] = ()
    n_values: tuple[int, ...] = ()
    repeats: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


def _usable(artifacts: Sequence[TaskArtifacts]) -> list[TaskArtifacts]:
    usable = [
        a
        for a in artifacts
        if not a.skipped and a.outcomes is not None and a.matrix is not None
    ]
    if not usable:
        raise EmptyEvaluation("no evaluated tasks available for sweeping")
    return usable


def _selection_passed(artifacts: TaskArtifacts, results) -> dict[str, bool]:
    return {
        method: artifacts.outcomes[result.selected_id].passed
        for method, result in results.items()
    }


def sweep_alpha(
    artifacts: Sequence[TaskArtifacts], alpha_values: Sequence[float]
) -> list[dict]:
    """Accuracy of every method at each alpha.

    Only the temperature calibration depends on alpha, so each point is a
    pure recomputation from the stored matrices and partitions.
    """
    if not alpha_values:
        raise ValueError("alpha_values must be non-empty")
    usable = _usable(artifacts)
    rows = []
    for alpha in alpha_values:
        params = CalibrationParams(alpha=alpha)
        hits = {method: 0 for method in METHODS}
        for task_artifacts in usable:
            results = rerank_all(task_artifacts.matrix, task_artifacts.partition, params)
            for method, passed in _selection_passed(task_artifacts, results).items():
                hits[method] += int(passed)
        row = {"alpha": float(alpha)}
        row.update({method: hits[method] / len(usable) for method in METHODS})
        rows.append(row)
    return rows


def subsample_task(
    artifacts: TaskArtifacts, keep_candidate_ids: Sequence[int]
) -> tuple[ScoreMatrix, ClusterPartition]:
    """Restrict a task's matrix and partition to a candidate subset.

    Instructions sourced from dropped candidates leave the instruction set;
    the original instruction always stays. The partition is restricted and
    renumbered accordingly.
    """
    keep = sorted(set(keep_candidate_ids))
    matrix = artifacts.matrix
    rows = [matrix.candidate_row(cid) for cid in keep]
    keep_instructions = [
        inst.instruction_id
        for inst in artifacts.instructions
        if inst.source_candidate_id is None or inst.source_candidate_id in set(keep)
    ]
    keep_instructions.sort()
    cols = [matrix.instruction_col(iid) for iid in keep_instructions]
    sub_matrix = ScoreMatrix(
        candidate_ids=keep,
        instruction_ids=keep_instructions,
        l0_log=matrix.l0_log[np.ix_(rows, cols)],
        prior_log=matrix.prior_log[rows],
        reviewer_log=None if matrix.reviewer_log is None else matrix.reviewer_log[rows],
    )
    sub_partition = restrict_partition(artifacts.partition, keep_instructions)
    return sub_matrix, sub_partition


def sweep_n(artifacts: Sequence[TaskArtifacts], spec: SweepSpec, alpha: float = 1.0) -> list[dict]:
    """Mean and standard deviation of accuracy when each task's pool is
    subsampled to n candidates, uniformly without replacement, over
    ``spec.repeats`` seeded draws."""
    if not spec.n_values:
        raise ValueError("n_values must be non-empty")
    usable = _usable(artifacts)
    params = CalibrationParams(alpha=alpha)
    rows = []
    for n in spec.n_values:
        if n < 1:
            raise ValueError("n values must be >= 1")
        per_repeat = {method: [] for method in METHODS}
        for repeat in range(spec.repeats):
            rng = random.Random(f"{spec.seed}:{n}:{repeat}")
            hits = {method: 0 for method in METHODS}
            for task_artifacts in usable:
                pool_ids = sorted(c.candidate_id for c in task_artifacts.candidates)
                take = min(n, len(pool_ids))
                chosen = sorted(rng.sample(pool_ids, take))
                sub_matrix, sub_partition = subsample_task(task_artifacts, chosen)
                results = rerank_all(sub_matrix, sub_partition, params)
                for method, passed in _selection_passed(task_artifacts, results).items():
                    hits[method] += int(passed)
            for method in METHODS:
                per_repeat[method].append(hits[method] / len(usable))
        row = {"n": int(n)}
        for method in METHODS:
            values = np.array(per_repeat[method], dtype=float)
            row[f"{method}_mean"] = float(values.mean())
            row[f"{method}_std"] = float(values.std())
        rows.append(row)
    return rows


def write_rows(rows: Sequence[dict], path: str | Path) -> None:
    """Write sweep rows as CSV, one row per point."""
    if not rows:
        raise ValueError("no rows to write")
    fieldnames = list(rows[0].keys())
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
