"""Alternative-instruction synthesis.

Each candidate program is turned back into natural language with a one-shot
prompt; the resulting instructions, together with the original instruction
(id 0), form the alternative set that the reranking math normalizes over.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Sequence

from .backends import Backend, GenRequest
from .candidates import Candidate, Task
from .prompts import (
    INSTRUCTION_END_MARKER,
    INSTRUCTION_STOP_MARKERS,
    instruction_synthesis_prompt,
)

logger = logging.getLogger(__name__)

_BLANK_LINE = re.compile(r"\n[ \t]*\n")


@dataclass
class Instruction:
    """One member of the instruction set. Id 0 is reserved for the original
    instruction, which has no source candidate."""

    instruction_id: int
    text: str
    source_candidate_id: int | None = None

    def __post_init__(self):
        if not self.text:
            raise ValueError("instruction text must be non-empty")
        if (self.instruction_id == 0) != (self.source_candidate_id is None):
            raise ValueError(
                "instruction 0 has no source; synthesized instructions must have one"
            )


def normalize_text(text: str) -> str:
    """Whitespace-only normalization used for exact-duplicate detection:
    trim and collapse internal whitespace runs. Idempotent."""
    return " ".join(text.split())


def extract_instruction(completion: str) -> str:
    """Trim a raw generation down to the instruction it contains.

    The text is cut at the template's end marker or at the first blank line,
    whichever comes first; models that keep going past the delimiter
    contribute only their first paragraph.
    """
    text = completion.lstrip()
    cut = len(text)
    for marker in (INSTRUCTION_END_MARKER, "###instruction end###"):
        idx = text.find(marker)
        if idx != -1:
            cut = min(cut, idx)
    blank = _BLANK_LINE.search(text)
    if blank is not None:
        cut = min(cut, blank.start())
    return text[:cut].strip()


def synthesize_instructions(
    backend: Backend,
    task: Task,
    candidates: Sequence[Candidate],
    m: int = 1,
    temperature: float = 0.7,
    max_tokens: int = 128,
) -> list[Instruction]:
    """Build the instruction set: the original instruction plus up to m
    synthesized instructions per candidate.

    Synthesized ids count raw generations in candidate order, so dropped
    duplicates leave gaps; a duplicate keeps its first (lowest-id)
    occurrence, and anything matching the original instruction is dropped
    outright since id 0 already represents it.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if not candidates:
        raise ValueError("candidate pool must be non-empty")
    instructions = [Instruction(instruction_id=0, text=task.instruction_i0)]
    seen = {normalize_text(task.instruction_i0)}
    next_id = 1
    for candidate in candidates:
        req = GenRequest(
            prompt_text=instruction_synthesis_prompt(candidate.code_text),
            sampling_temperature=temperature,
            max_tokens=max_tokens,
            stop_markers=INSTRUCTION_STOP_MARKERS,
        )
        texts = [extract_instruction(c) for c in backend.generate(req, m)]
        texts = [t for t in texts if t]
        if not texts:
            logger.warning(
                "task %s: candidate %d contributed no usable instruction",
                task.task_id,
                candidate.candidate_id,
            )
        for text in texts:
            instruction_id = next_id
            next_id += 1
            normalized = normalize_text(text)
            if normalized in seen:
                continue
            seen.add(normalized)
            instructions.append(
                Instruction(
                    instruction_id=instruction_id,
                    text=text,
                    source_candidate_id=candidate.candidate_id,
                )
            )
    return instructions
