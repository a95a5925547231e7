"""Command-line interface.

Stages share a run directory: `generate` samples candidates and
instructions, `score` builds the score matrices, `cluster` judges and
partitions, `rerank` applies the four methods, `evaluate` executes
candidates through the sandbox runner, and `report` aggregates accuracy.
`sweep-alpha` and `sweep-n` emit plot-ready CSV tables from stored
artifacts without touching the backend.
"""

from __future__ import annotations

import functools
import json
import logging
import shlex
import sys

import click

from .backends import BackendConfig, HttpBackend, mock_backend_from_file
from .cache import CachedScoringBackend, JudgmentStore
from .candidates import sample_pool
from .clustering import build_partition, judge_all_pairs
from .datasets import FORMATS, load_dataset
from .errors import CoderankError
from .evaluation import ExecOutcome
from .instructions import synthesize_instructions
from .pipeline import apply_calibration, build_score_matrix
from .report import compute_accuracy, filter_solved_subset
from .rsa import CalibrationParams, rerank_all
from .runner_client import RunnerClient, SubprocessEvaluator
from .store import RunStore, assemble_report
from .sweeps import SweepSpec, sweep_alpha, sweep_n, write_rows

logger = logging.getLogger(__name__)


def backend_options(fn):
    @click.option("--backend", "backend_kind", type=click.Choice(["http", "mock"]), default="http", show_default=True)
    @click.option("--base-url", envvar="CODERANK_BASE_URL", default="", help="Completions endpoint base URL (http backend).")
    @click.option("--model", "model_name", envvar="CODERANK_MODEL", default="", help="Model name sent with every request.")
    @click.option("--auth-token", envvar="CODERANK_AUTH_TOKEN", default=None)
    @click.option("--request-timeout", type=float, default=120.0, show_default=True)
    @click.option("--max-retries", type=int, default=3, show_default=True)
    @click.option("--max-concurrent", type=int, default=4, show_default=True)
    @click.option("--cache-dir", type=click.Path(), default=None, help="Content-addressed score/judgment cache directory.")
    @click.option("--mock-table", type=click.Path(exists=True), default=None, help="Scripted backend table (mock backend).")
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        return fn(*args, **kwargs)

    return wrapper


def _make_backend(backend_kind, base_url, model_name, auth_token, request_timeout,
                  max_retries, max_concurrent, cache_dir, mock_table):
    if backend_kind == "mock":
        if not mock_table:
            raise click.UsageError("--mock-table is required with --backend mock")
        backend = mock_backend_from_file(mock_table)
    else:
        if not base_url:
            raise click.UsageError("--base-url (or CODERANK_BASE_URL) is required")
        if not model_name:
            raise click.UsageError("--model (or CODERANK_MODEL) is required")
        backend = HttpBackend(
            BackendConfig(
                base_url=base_url,
                model_name=model_name,
                auth_token=auth_token,
                request_timeout=request_timeout,
                max_retries=max_retries,
                max_concurrent_requests=max_concurrent,
            )
        )
    if cache_dir:
        backend = CachedScoringBackend(backend, cache_dir)
    return backend


def _judgment_store(cache_dir):
    return JudgmentStore(cache_dir) if cache_dir else None


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


@main.command()
@click.option("--dataset", type=click.Path(exists=True), required=True)
@click.option("--format", "fmt", type=click.Choice(FORMATS), required=True)
@click.option("--run-dir", type=click.Path(), required=True)
@click.option("--limit", type=int, default=0, help="Only the first N tasks.")
@click.option("--n", type=int, default=10, show_default=True, help="Candidates per task.")
@click.option("--m", type=int, default=1, show_default=True, help="Instructions per candidate.")
@click.option("--candidate-temperature", type=float, default=1.0, show_default=True)
@click.option("--instruction-temperature", type=float, default=0.7, show_default=True)
@click.option("--candidate-max-tokens", type=int, default=512, show_default=True)
@click.option("--instruction-max-tokens", type=int, default=128, show_default=True)
@backend_options
def generate(dataset, fmt, run_dir, limit, n, m, candidate_temperature,
             instruction_temperature, candidate_max_tokens, instruction_max_tokens,
             **backend_kwargs):
    """Sample candidate pools and synthesize alternative instructions."""
    backend = _make_backend(**backend_kwargs)
    store = RunStore(run_dir)
    tasks = load_dataset(dataset, fmt)
    if limit:
        tasks = tasks[:limit]
    store.save_tasks(tasks)
    for task in tasks:
        try:
            pool = sample_pool(backend, task, n, candidate_temperature, candidate_max_tokens)
            instructions = synthesize_instructions(
                backend, task, pool.candidates, m, instruction_temperature,
                instruction_max_tokens,
            )
        except CoderankError as exc:
            logger.warning("task %s failed at generate: %s", task.task_id, exc)
            store.save_error(task.task_id, "generate", str(exc))
            continue
        store.save_candidates(task.task_id, pool.candidates, pool.duplicates_collapsed)
        store.save_instructions(task.task_id, instructions)
    click.echo(f"generated candidates for {len(tasks)} tasks into {run_dir}")


@main.command()
@click.option("--run-dir", type=click.Path(exists=True), required=True)
@click.option("--request-workers", type=int, default=1, show_default=True)
@backend_options
def score(run_dir, request_workers, **backend_kwargs):
    """Score candidates against instructions, priors, and reviewer terms."""
    backend = _make_backend(**backend_kwargs)
    store = RunStore(run_dir)
    scored = 0
    for task in store.load_tasks():
        if store.load_error(task.task_id):
            continue
        candidates, collapsed = store.load_candidates(task.task_id)
        instructions = store.load_instructions(task.task_id)
        try:
            matrix = build_score_matrix(
                backend, task, candidates, instructions,
                request_workers=request_workers,
            )
        except CoderankError as exc:
            logger.warning("task %s failed at score: %s", task.task_id, exc)
            store.save_error(task.task_id, "score", str(exc))
            continue
        store.save_matrix(task.task_id, matrix)
        store.save_candidates(task.task_id, candidates, collapsed)
        scored += 1
    click.echo(f"scored {scored} tasks")


@main.command()
@click.option("--run-dir", type=click.Path(exists=True), required=True)
@click.option("--judge-temperature", type=float, default=0.1, show_default=True)
@click.option("--judge-max-tokens", type=int, default=8, show_default=True)
@click.option("--request-workers", type=int, default=1, show_default=True)
@backend_options
def cluster(run_dir, judge_temperature, judge_max_tokens, request_workers, **backend_kwargs):
    """Judge instruction pairs and build equivalence partitions."""
    backend = _make_backend(**backend_kwargs)
    store = RunStore(run_dir)
    judgment_store = _judgment_store(backend_kwargs.get("cache_dir"))
    clustered = 0
    for task in store.load_tasks():
        if store.load_error(task.task_id):
            continue
        instructions = store.load_instructions(task.task_id)
        try:
            judgments = judge_all_pairs(
                backend, instructions, judge_temperature, judge_max_tokens,
                judgment_store, max_workers=request_workers,
            )
            partition = build_partition(instructions, judgments)
        except CoderankError as exc:
            logger.warning("task %s failed at cluster: %s", task.task_id, exc)
            store.save_error(task.task_id, "cluster", str(exc))
            continue
        store.save_partition(task.task_id, partition, judgments)
        clustered += 1
    click.echo(f"clustered {clustered} tasks")


@main.command()
@click.option("--run-dir", type=click.Path(exists=True), required=True)
@click.option("--alpha", type=float, default=1.0, show_default=True)
def rerank(run_dir, alpha):
    """Apply all four reranking methods to stored matrices/partitions."""
    store = RunStore(run_dir)
    params = CalibrationParams(alpha=alpha)
    reranked = 0
    for task in store.load_tasks():
        if store.load_error(task.task_id):
            continue
        matrix = store.load_matrix(task.task_id)
        partition, _ = store.load_partition(task.task_id)
        results = rerank_all(matrix, partition, params)
        store.save_results(task.task_id, results)
        candidates, collapsed = store.load_candidates(task.task_id)
        apply_calibration(candidates, matrix, alpha)
        store.save_candidates(task.task_id, candidates, collapsed)
        reranked += 1
    click.echo(f"reranked {reranked} tasks at alpha={alpha}")


@main.command()
@click.option("--run-dir", type=click.Path(exists=True), required=True)
@click.option("--runner-cmd", default="sandbox-runner", show_default=True,
              help="Command line that starts the execution runner.")
@click.option("--timeout-s", type=float, default=10.0, show_default=True)
def evaluate(run_dir, runner_cmd, timeout_s):
    """Execute every candidate of every task through the sandbox runner."""
    store = RunStore(run_dir)
    with RunnerClient(shlex.split(runner_cmd)) as client:
        evaluator = SubprocessEvaluator(client, timeout_s=timeout_s)
        evaluated = 0
        for task in store.load_tasks():
            if store.load_error(task.task_id):
                continue
            candidates, _ = store.load_candidates(task.task_id)
            outcomes = {
                c.candidate_id: evaluator.evaluate(task, c) for c in candidates
            }
            store.save_outcomes(task.task_id, outcomes)
            evaluated += 1
    click.echo(f"executed candidates for {evaluated} tasks")


@main.command()
@click.option("--run-dir", type=click.Path(exists=True), required=True)
@click.option("--fixtures", type=click.Path(exists=True), default=None,
              help="JSON file {task_id: {candidate_id: passed}} recording pass/fail without execution.")
def outcomes(run_dir, fixtures):
    """Record pass/fail outcomes from a fixture file (execution disabled)."""
    store = RunStore(run_dir)
    with open(fixtures, "r", encoding="utf-8") as fh:
        table = json.load(fh)
    recorded = 0
    for task in store.load_tasks():
        if task.task_id not in table or store.load_error(task.task_id):
            continue
        entry = table[task.task_id]
        store.save_outcomes(
            task.task_id,
            {
                int(cid): ExecOutcome(
                    passed=bool(passed),
                    error_kind="none" if passed else "assertion",
                )
                for cid, passed in entry.items()
            },
        )
        recorded += 1
    click.echo(f"recorded outcomes for {recorded} tasks")


@main.command()
@click.option("--run-dir", type=click.Path(exists=True), required=True)
@click.option("--model", "model_name", envvar="CODERANK_MODEL", default="unknown")
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--n", type=int, default=10, show_default=True)
@click.option("--m", type=int, default=1, show_default=True)
@click.option("--solved-subset", is_flag=True,
              help="Restrict accuracy to tasks unsolved by the first candidate but solved by some candidate.")
@click.option("--out", type=click.Path(), default=None, help="Also write the report JSON here.")
def report(run_dir, model_name, alpha, n, m, solved_subset, out):
    """Aggregate stored artifacts into a run report."""
    store = RunStore(run_dir)
    run_report = assemble_report(store, model_name, alpha, n, m)
    if solved_subset:
        run_report.per_task = filter_solved_subset(run_report.per_task)
        run_report.accuracy = (
            compute_accuracy(run_report.per_task) if run_report.per_task else None
        )
    payload = run_report.to_json()
    store.save_report(payload)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(payload)
    click.echo(payload, nl=False)


def _load_artifacts_for_sweep(store: RunStore):
    from .pipeline import TaskArtifacts

    artifacts = []
    for task in store.load_tasks():
        if store.load_error(task.task_id):
            continue
        if not (store.has(task.task_id, "matrix") and store.has(task.task_id, "outcomes")):
            continue
        candidates, collapsed = store.load_candidates(task.task_id)
        partition, judgments = store.load_partition(task.task_id)
        artifacts.append(
            TaskArtifacts(
                task=task,
                candidates=candidates,
                duplicates_collapsed=collapsed,
                instructions=store.load_instructions(task.task_id),
                judgments=judgments,
                partition=partition,
                matrix=store.load_matrix(task.task_id),
                outcomes=store.load_outcomes(task.task_id),
            )
        )
    return artifacts


@main.command(name="sweep-alpha")
@click.option("--run-dir", type=click.Path(exists=True), required=True)
@click.option("--alphas", default="0.0,0.25,0.5,0.75,1.0,1.25,1.5", show_default=True)
@click.option("--out", type=click.Path(), required=True)
def sweep_alpha_cmd(run_dir, alphas, out):
    """Accuracy per method across alpha values (pure recomputation)."""
    artifacts = _load_artifacts_for_sweep(RunStore(run_dir))
    rows = sweep_alpha(artifacts, _parse_floats(alphas))
    write_rows(rows, out)
    click.echo(f"wrote {len(rows)} rows to {out}")


@main.command(name="sweep-n")
@click.option("--run-dir", type=click.Path(exists=True), required=True)
@click.option("--n-values", default="1,2,3,4,5,6,7,8,9,10", show_default=True)
@click.option("--repeats", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def sweep_n_cmd(run_dir, n_values, repeats, seed, alpha, out):
    """Mean/std accuracy when pools are subsampled to n candidates."""
    artifacts = _load_artifacts_for_sweep(RunStore(run_dir))
    spec = SweepSpec(n_values=_parse_ints(n_values), repeats=repeats, seed=seed)
    rows = sweep_n(artifacts, spec, alpha=alpha)
    write_rows(rows, out)
    click.echo(f"wrote {len(rows)} rows to {out}")


if __name__ == "__main__":
    main()
