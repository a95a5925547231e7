"""End-to-end per-task pipeline and suite orchestration.

Stage order within a task: sample candidates, score the original-instruction
column and the priors, synthesize instructions, score the remaining
columns and the reviewer terms, judge pairs, build the partition, rerank
under all four methods, then (when an evaluator is supplied) execute every
candidate. Failures mark the task skipped and the run continues.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .backends import Backend, ScoreRequest
from .cache import JudgmentStore
from .candidates import Candidate, Task, sample_pool
from .clustering import ClusterPartition, PairJudgment, build_partition, judge_all_pairs
from .errors import CoderankError, EmptyEvaluation
from .evaluation import CandidateEvaluator, ExecOutcome
from .instructions import Instruction, synthesize_instructions
from .prompts import PRIOR_SCAFFOLD, coder_scoring_prompt, reviewer_scoring_prompt
from .report import RunReport, TaskReport, compute_accuracy
from .rsa import CalibrationParams, RerankResult, ScoreMatrix, rerank_all, standardized_priors

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    n: int = 10
    m: int = 1
    alpha: float = 1.0
    candidate_temperature: float = 1.0
    instruction_temperature: float = 0.7
    judge_temperature: float = 0.1
    candidate_max_tokens: int = 512
    instruction_max_tokens: int = 128
    judge_max_tokens: int = 8
    seed: int = 0
    task_workers: int = 1
    request_workers: int = 1
    # Injected clock so deterministic runs can produce byte-identical
    # reports; swap in a constant for golden tests.
    clock: Callable[[], float] = time.monotonic


@dataclass
class TaskArtifacts:
    """Everything produced for one task. ``error`` is non-empty when the
    task was skipped; later fields are then unset."""

    task: Task
    error: str = ""
    candidates: list[Candidate] = field(default_factory=list)
    duplicates_collapsed: int = 0
    instructions: list[Instruction] = field(default_factory=list)
    judgments: list[PairJudgment] = field(default_factory=list)
    partition: ClusterPartition | None = None
    matrix: ScoreMatrix | None = None
    results: dict[str, RerankResult] = field(default_factory=dict)
    outcomes: dict[int, ExecOutcome] | None = None
    elapsed_s: float = 0.0

    @property
    def skipped(self) -> bool:
        return bool(self.error)


def _score_map(
    backend: Backend,
    requests: Sequence[ScoreRequest],
    request_workers: int,
) -> list[float]:
    if request_workers > 1 and len(requests) > 1:
        with ThreadPoolExecutor(max_workers=request_workers) as pool:
            results = list(pool.map(backend.score_continuation, requests))
    else:
        results = [backend.score_continuation(r) for r in requests]
    return [r.total_logprob for r in results]


def build_score_matrix(
    backend: Backend,
    task: Task,
    candidates: Sequence[Candidate],
    instructions: Sequence[Instruction],
    request_workers: int = 1,
    include_reviewer: bool = True,
) -> ScoreMatrix:
    """Score every candidate against every instruction, plus priors and
    (optionally) reviewer terms. Also fills the candidates' score fields."""
    cands = sorted(candidates, key=lambda c: c.candidate_id)
    insts = sorted(instructions, key=lambda i: i.instruction_id)
    requests = [
        ScoreRequest(coder_scoring_prompt(inst.text), cand.code_text)
        for cand in cands
        for inst in insts
    ]
    requests.extend(
        ScoreRequest(PRIOR_SCAFFOLD, cand.code_text) for cand in cands
    )
    if include_reviewer:
        requests.extend(
            ScoreRequest(reviewer_scoring_prompt(cand.code_text), task.instruction_i0)
            for cand in cands
        )
    values = _score_map(backend, requests, request_workers)

    num_c, num_i = len(cands), len(insts)
    l0_log = np.array(values[: num_c * num_i], dtype=float).reshape(num_c, num_i)
    prior_log = np.array(values[num_c * num_i : num_c * num_i + num_c], dtype=float)
    reviewer_log = (
        np.array(values[num_c * num_i + num_c :], dtype=float)
        if include_reviewer
        else None
    )
    matrix = ScoreMatrix(
        candidate_ids=[c.candidate_id for c in cands],
        instruction_ids=[i.instruction_id for i in insts],
        l0_log=l0_log,
        prior_log=prior_log,
        reviewer_log=reviewer_log,
    )
    z = standardized_priors(prior_log)
    for row, cand in enumerate(cands):
        cand.coder_logprob_i0 = float(l0_log[row, 0])
        cand.prior_logprob = float(prior_log[row])
        cand.z_score = float(z[row])
    return matrix


def apply_calibration(candidates: Sequence[Candidate], matrix: ScoreMatrix, alpha: float) -> None:
    """Record z and tau on the candidates for the given alpha."""
    z = standardized_priors(matrix.prior_log)
    tau = np.exp(-alpha * z)
    by_id = {c.candidate_id: c for c in candidates}
    for row, candidate_id in enumerate(matrix.candidate_ids):
        cand = by_id[candidate_id]
        cand.z_score = float(z[row])
        cand.tau = float(tau[row])


def run_task(
    backend: Backend,
    task: Task,
    config: RunConfig,
    evaluator: CandidateEvaluator | None = None,
    judgment_store: JudgmentStore | None = None,
) -> TaskArtifacts:
    """Run the full pipeline for one task; on error, return a skipped
    fragment instead of raising."""
    start = config.clock()
    artifacts = TaskArtifacts(task=task)
    try:
        pool = sample_pool(
            backend,
            task,
            n=config.n,
            temperature=config.candidate_temperature,
            max_tokens=config.candidate_max_tokens,
        )
        artifacts.candidates = pool.candidates
        artifacts.duplicates_collapsed = pool.duplicates_collapsed

        artifacts.instructions = synthesize_instructions(
            backend,
            task,
            pool.candidates,
            m=config.m,
            temperature=config.instruction_temperature,
            max_tokens=config.instruction_max_tokens,
        )

        artifacts.matrix = build_score_matrix(
            backend,
            task,
            pool.candidates,
            artifacts.instructions,
            request_workers=config.request_workers,
        )

        artifacts.judgments = judge_all_pairs(
            backend,
            artifacts.instructions,
            temperature=config.judge_temperature,
            max_tokens=config.judge_max_tokens,
            store=judgment_store,
            max_workers=config.request_workers,
        )
        artifacts.partition = build_partition(artifacts.instructions, artifacts.judgments)

        params = CalibrationParams(alpha=config.alpha)
        artifacts.results = rerank_all(artifacts.matrix, artifacts.partition, params)
        apply_calibration(artifacts.candidates, artifacts.matrix, config.alpha)

        if evaluator is not None:
            artifacts.outcomes = {
                cand.candidate_id: evaluator.evaluate(task, cand)
                for cand in artifacts.candidates
            }
    except CoderankError as exc:
        logger.warning("task %s skipped: %s", task.task_id, exc)
        artifacts.error = f"{type(exc).__name__}: {exc}"
    artifacts.elapsed_s = config.clock() - start
    return artifacts


def task_report(artifacts: TaskArtifacts) -> TaskReport:
    """Reduce one task's artifacts to its report fragment."""
    if artifacts.skipped:
        return TaskReport(
            task_id=artifacts.task.task_id,
            skipped=True,
            error=artifacts.error,
            elapsed_s=artifacts.elapsed_s,
        )
    per_candidate = {c.candidate_id: 0 for c in artifacts.candidates}
    for inst in artifacts.instructions:
        if inst.source_candidate_id is not None:
            per_candidate[inst.source_candidate_id] += 1
    main_cluster = artifacts.partition.cluster_for(0)
    return TaskReport(
        task_id=artifacts.task.task_id,
        num_candidates=len(artifacts.candidates),
        duplicates_collapsed=artifacts.duplicates_collapsed,
        num_instructions=len(artifacts.instructions),
        instructions_per_candidate=per_candidate,
        num_clusters=len(artifacts.partition.clusters),
        main_cluster_size=len(main_cluster.member_ids),
        selections={m: r.selected_id for m, r in artifacts.results.items()},
        selection_scores={m: r.scores[0] for m, r in artifacts.results.items()},
        candidate_passed=None
        if artifacts.outcomes is None
        else {cid: out.passed for cid, out in artifacts.outcomes.items()},
        elapsed_s=artifacts.elapsed_s,
    )


@dataclass
class SuiteResult:
    artifacts: list[TaskArtifacts]
    report: RunReport


def run_suite(
    backend: Backend,
    tasks: Sequence[Task],
    config: RunConfig,
    evaluator: CandidateEvaluator | None = None,
    judgment_store: JudgmentStore | None = None,
) -> SuiteResult:
    """Run every task (possibly concurrently) and assemble the report.

    Per-task pipelines are independent; fragments are assembled in input
    order, so the report does not depend on worker count.
    """
    start = config.clock()
    if config.task_workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=config.task_workers) as pool:
            artifacts = list(
                pool.map(
                    lambda t: run_task(backend, t, config, evaluator, judgment_store),
                    tasks,
                )
            )
    else:
        artifacts = [
            run_task(backend, t, config, evaluator, judgment_store) for t in tasks
        ]
    per_task = [task_report(a) for a in artifacts]
    try:
        accuracy = compute_accuracy(per_task)
    except EmptyEvaluation:
        accuracy = None
    report = RunReport(
        model_name=backend.model_name,
        alpha=config.alpha,
        n=config.n,
        m=config.m,
        per_task=per_task,
        accuracy=accuracy,
        total_elapsed_s=config.clock() - start,
    )
    return SuiteResult(artifacts=artifacts, report=report)
