"""Run-directory persistence.

Every pipeline stage writes its artifacts as JSON records under one run
directory, so later stages (and sweeps) can rerun without regeneration:

    run_dir/
      tasks.json
      tasks/<slug>/candidates.json
      tasks/<slug>/instructions.json
      tasks/<slug>/matrix.json
      tasks/<slug>/partition.json
      tasks/<slug>/results.json
      tasks/<slug>/outcomes.json
      report.json
"""

from __future__ import annotations

import json
import re
from pathlib import Path

from .candidates import Candidate, Task
from .clustering import ClusterPartition, PairJudgment
from .evaluation import ExecOutcome
from .instructions import Instruction
from .rsa import RerankResult, ScoreMatrix


def _dump(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _load(path: Path):
    with path.open("r", encoding="utf-8") as fh:
        return json.load(fh)


class RunStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def _slug(task_id: str) -> str:
        return re.sub(r"[^A-Za-z0-9_.-]", "_", task_id)

    def task_dir(self, task_id: str) -> Path:
        return self.root / "tasks" / self._slug(task_id)

    # tasks

    def save_tasks(self, tasks: list[Task]) -> None:
        _dump(
            self.root / "tasks.json",
            [
                {
                    "task_id": t.task_id,
                    "instruction_i0": t.instruction_i0,
                    "prompt_scaffold": t.prompt_scaffold,
                    "entry_point": t.entry_point,
                    "tests": t.tests,
                }
                for t in tasks
            ],
        )

    def load_tasks(self) -> list[Task]:
        return [
            Task(
                task_id=r["task_id"],
                instruction_i0=r["instruction_i0"],
                prompt_scaffold=r.get("prompt_scaffold", ""),
                entry_point=r.get("entry_point", ""),
                tests=r.get("tests", ""),
            )
            for r in _load(self.root / "tasks.json")
        ]

    # candidates

    def save_candidates(
        self, task_id: str, candidates: list[Candidate], duplicates_collapsed: int = 0
    ) -> None:
        _dump(
            self.task_dir(task_id) / "candidates.json",
            {
                "task_id": task_id,
                "duplicates_collapsed": duplicates_collapsed,
                "candidates": [
                    {
                        "candidate_id": c.candidate_id,
                        "code_text": c.code_text,
                        "coder_logprob_i0": c.coder_logprob_i0,
                        "prior_logprob": c.prior_logprob,
                        "z_score": c.z_score,
                        "tau": c.tau,
                    }
                    for c in candidates
                ],
            },
        )

    def load_candidates(self, task_id: str) -> tuple[list[Candidate], int]:
        payload = _load(self.task_dir(task_id) / "candidates.json")
        candidates = [
            Candidate(
                candidate_id=int(r["candidate_id"]),
                code_text=r["code_text"],
                coder_logprob_i0=r.get("coder_logprob_i0"),
                prior_logprob=r.get("prior_logprob"),
                z_score=r.get("z_score"),
                tau=r.get("tau"),
            )
            for r in payload["candidates"]
        ]
        return candidates, int(payload.get("duplicates_collapsed", 0))

    # instructions

    def save_instructions(self, task_id: str, instructions: list[Instruction]) -> None:
        _dump(
            self.task_dir(task_id) / "instructions.json",
            [
                {
                    "instruction_id": i.instruction_id,
                    "text": i.text,
                    "source_candidate_id": i.source_candidate_id,
                }
                for i in instructions
            ],
        )

    def load_instructions(self, task_id: str) -> list[Instruction]:
        return [
            Instruction(
                instruction_id=int(r["instruction_id"]),
                text=r["text"],
                source_candidate_id=r.get("source_candidate_id"),
            )
            for r in _load(self.task_dir(task_id) / "instructions.json")
        ]

    # score matrix

    def save_matrix(self, task_id: str, matrix: ScoreMatrix) -> None:
        _dump(self.task_dir(task_id) / "matrix.json", matrix.to_payload())

    def load_matrix(self, task_id: str) -> ScoreMatrix:
        return ScoreMatrix.from_payload(_load(self.task_dir(task_id) / "matrix.json"))

    # partition and judgments

    def save_partition(
        self,
        task_id: str,
        partition: ClusterPartition,
        judgments: list[PairJudgment] | None = None,
    ) -> None:
        payload = {"partition": partition.to_payload()}
        if judgments is not None:
            payload["judgments"] = [
                {
                    "instruction_a": j.instruction_a,
                    "instruction_b": j.instruction_b,
                    "equivalent": j.equivalent,
                    "raw_response": j.raw_response,
                }
                for j in judgments
            ]
        _dump(self.task_dir(task_id) / "partition.json", payload)

    def load_partition(self, task_id: str) -> tuple[ClusterPartition, list[PairJudgment]]:
        payload = _load(self.task_dir(task_id) / "partition.json")
        judgments = [
            PairJudgment(
                instruction_a=int(j["instruction_a"]),
                instruction_b=int(j["instruction_b"]),
                equivalent=bool(j["equivalent"]),
                raw_response=j.get("raw_response", ""),
            )
            for j in payload.get("judgments", [])
        ]
        return ClusterPartition.from_payload(payload["partition"]), judgments

    # rerank results

    def save_results(self, task_id: str, results: dict[str, RerankResult]) -> None:
        _dump(
            self.task_dir(task_id) / "results.json",
            {method: result.to_payload() for method, result in results.items()},
        )

    def load_results(self, task_id: str) -> dict[str, RerankResult]:
        payload = _load(self.task_dir(task_id) / "results.json")
        return {m: RerankResult.from_payload(p) for m, p in payload.items()}

    # execution outcomes

    def save_outcomes(self, task_id: str, outcomes: dict[int, ExecOutcome]) -> None:
        _dump(
            self.task_dir(task_id) / "outcomes.json",
            {
                str(cid): {
                    "passed": o.passed,
                    "error_kind": o.error_kind,
                    "detail": o.detail,
                    "duration_ms": o.duration_ms,
                }
                for cid, o in sorted(outcomes.items())
            },
        )

    def load_outcomes(self, task_id: str) -> dict[int, ExecOutcome]:
        payload = _load(self.task_dir(task_id) / "outcomes.json")
        return {
            int(cid): ExecOutcome(
                passed=bool(r["passed"]),
                error_kind=r.get("error_kind", "none"),
                detail=r.get("detail", ""),
                duration_ms=int(r.get("duration_ms", 0)),
            )
            for cid, r in payload.items()
        }

    def has(self, task_id: str, name: str) -> bool:
        return (self.task_dir(task_id) / f"{name}.json").exists()

    # per-task stage errors (the task is skipped downstream)

    def save_error(self, task_id: str, stage: str, message: str) -> None:
        _dump(self.task_dir(task_id) / "error.json", {"stage": stage, "error": message})

    def load_error(self, task_id: str) -> str:
        if not self.has(task_id, "error"):
            return ""
        payload = _load(self.task_dir(task_id) / "error.json")
        return f"{payload.get('stage', '?')}: {payload.get('error', '')}"

    # report

    def save_report(self, report_json: str) -> Path:
        path = self.root / "report.json"
        path.write_text(report_json, encoding="utf-8")
        return path


def assemble_report(store: RunStore, model_name: str, alpha: float, n: int, m: int):
    """Rebuild a RunReport from stage artifacts on disk.

    Stage-wise CLI runs have no cross-stage timing, so elapsed fields are
    zero. Tasks with an error marker (or missing rerank results) appear as
    skipped fragments.
    """
    from .errors import EmptyEvaluation
    from .report import RunReport, TaskReport, compute_accuracy

    per_task = []
    for task in store.load_tasks():
        error = store.load_error(task.task_id)
        if not error and not store.has(task.task_id, "results"):
            error = "report: no rerank results stored"
        if error:
            per_task.append(TaskReport(task_id=task.task_id, skipped=True, error=error))
            continue
        candidates, duplicates_collapsed = store.load_candidates(task.task_id)
        instructions = store.load_instructions(task.task_id)
        partition, _ = store.load_partition(task.task_id)
        results = store.load_results(task.task_id)
        outcomes = (
            store.load_outcomes(task.task_id)
            if store.has(task.task_id, "outcomes")
            else None
        )
        per_candidate = {c.candidate_id: 0 for c in candidates}
        for inst in instructions:
            if inst.source_candidate_id is not None:
                per_candidate[inst.source_candidate_id] += 1
        main_cluster = partition.cluster_for(0)
        per_task.append(
            TaskReport(
                task_id=task.task_id,
                num_candidates=len(candidates),
                duplicates_collapsed=duplicates_collapsed,
                num_instructions=len(instructions),
                instructions_per_candidate=per_candidate,
                num_clusters=len(partition.clusters),
                main_cluster_size=len(main_cluster.member_ids),
                selections={mth: r.selected_id for mth, r in results.items()},
                selection_scores={mth: r.scores[0] for mth, r in results.items()},
                candidate_passed=None
                if outcomes is None
                else {cid: o.passed for cid, o in outcomes.items()},
            )
        )
    try:
        accuracy = compute_accuracy(per_task)
    except EmptyEvaluation:
        accuracy = None
    return RunReport(
        model_name=model_name,
        alpha=alpha,
        n=n,
        m=m,
        per_task=per_task,
        accuracy=accuracy,
    )
