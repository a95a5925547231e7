"""Candidate pool construction: sampling, dedup, prior scoring."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from .backends import Backend, GenRequest, ScoreRequest
from .errors import GenerationExhausted
from .prompts import CODE_STOP_MARKERS, PRIOR_SCAFFOLD, generation_prompt

logger = logging.getLogger(__name__)


@dataclass
class Task:
    """One benchmark problem."""

    task_id: str
    instruction_i0: str
    prompt_scaffold: str = ""
    entry_point: str = ""
    tests: str = ""

    def __post_init__(self):
        if not self.instruction_i0:
            raise ValueError("instruction_i0 must be non-empty")


@dataclass
class Candidate:
    """One sampled program. Ids are 1-based generation order and stay
    stable through dedup, so they may have gaps. Score fields are filled in
    by later pipeline stages."""

    candidate_id: int
    code_text: str
    coder_logprob_i0: float | None = None
    prior_logprob: float | None = None
    z_score: float | None = None
    tau: float | None = None

    def __post_init__(self):
        if not self.code_text:
            raise ValueError("code_text must be non-empty")


@dataclass
class SamplePool:
    """A deduplicated candidate pool plus sampling bookkeeping."""

    candidates: list[Candidate]
    num_sampled: int
    duplicates_collapsed: int


def build_candidates(code_texts: Sequence[str]) -> tuple[list[Candidate], int]:
    """Turn raw sampled texts into candidates, collapsing exact duplicates.

    The first occurrence keeps its generation-order id; later duplicates
    are dropped and counted.
    """
    seen: set[str] = set()
    candidates: list[Candidate] = []
    collapsed = 0
    for index, text in enumerate(code_texts, start=1):
        if text in seen:
            collapsed += 1
            continue
        seen.add(text)
        candidates.append(Candidate(candidate_id=index, code_text=text))
    return candidates, collapsed


def sample_pool(
    backend: Backend,
    task: Task,
    n: int,
    temperature: float,
    max_tokens: int = 512,
) -> SamplePool:
    """Sample up to n candidate programs for a task.

    The prompt places the instruction above an opened code block followed by
    the task's scaffold, so a candidate's text is ``scaffold + completion``
    and is scored as a single continuation everywhere downstream.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    req = GenRequest(
        prompt_text=generation_prompt(task.instruction_i0, task.prompt_scaffold),
        sampling_temperature=temperature,
        max_tokens=max_tokens,
        stop_markers=CODE_STOP_MARKERS,
    )
    completions = backend.generate(req, n)
    texts = []
    for completion in completions:
        cleaned = completion.rstrip()
        if cleaned.strip():
            texts.append(task.prompt_scaffold + cleaned)
    if not texts:
        raise GenerationExhausted(f"task {task.task_id}: no non-empty samples")
    candidates, collapsed = build_candidates(texts)
    if collapsed:
        logger.info(
            "task %s: collapsed %d duplicate candidates", task.task_id, collapsed
        )
    return SamplePool(
        candidates=candidates,
        num_sampled=len(texts),
        duplicates_collapsed=collapsed,
    )


def sample_candidates(
    backend: Backend,
    task: Task,
    n: int,
    temperature: float,
    max_tokens: int = 512,
) -> list[Candidate]:
    """Sample and deduplicate candidates (see ``sample_pool``)."""
    return sample_pool(backend, task, n, temperature, max_tokens).candidates


def score_prior(backend: Backend, candidate: Candidate) -> float:
    """Log-probability of the candidate with no instruction context.

    The candidate is scored after a neutral scaffold that is nothing but a
    code-fence opener, keeping priors comparable within a task. The value
    is stored on the candidate and returned.
    """
    result = backend.score_continuation(
        ScoreRequest(prompt_text=PRIOR_SCAFFOLD, continuation_text=candidate.code_text)
    )
    candidate.prior_logprob = result.total_logprob
    return result.total_logprob
