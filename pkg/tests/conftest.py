"""Shared test fixtures: a fully scripted multi-task mock suite.

The factory enumerates every prompt the pipeline can issue (generation,
instruction synthesis, scoring, pair judging) and scripts deterministic
responses, so end-to-end runs are reproducible byte-for-byte.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import pytest

from coderank.backends import MockBackend
from coderank.candidates import Task
from coderank.evaluation import FixtureEvaluator
from coderank.prompts import (
    PRIOR_SCAFFOLD,
    coder_scoring_prompt,
    equivalence_prompt,
    generation_prompt,
    instruction_synthesis_prompt,
    reviewer_scoring_prompt,
)


def stable_logprob(*parts: str, low: float = -30.0, high: float = -1.0) -> float:
    """Deterministic pseudo-random log-probability derived from content."""
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    fraction = int.from_bytes(digest[:8], "big") / 2**64
    return low + (high - low) * fraction


@dataclass
class MockSuite:
    tasks: list[Task]
    backend_factory: object  # () -> MockBackend
    evaluator: FixtureEvaluator
    # per task_id: candidate completions in generation order
    completions: dict[str, list[str]]
    # per task_id: instruction class label by text (for partition expectations)
    instruction_classes: dict[str, dict[str, str]]
    score_table: dict[tuple[str, str], list[float]]
    gen_table: dict[str, list[str]]
    pass_table: dict[tuple[str, str], bool]

    def backend(self) -> MockBackend:
        return self.backend_factory()

    def dump_mock_table(self, path) -> None:
        """Write the scripted tables in the CLI's --mock-table format."""
        import json

        payload = {
            "model_name": "mock",
            "scores": [
                {"prompt": p, "continuation": c, "token_logprobs": list(v)}
                for (p, c), v in self.score_table.items()
            ],
            "generations": [
                {"prompt": p, "completions": list(v)}
                for p, v in self.gen_table.items()
            ],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)


def _candidate_code(t: int, i: int) -> str:
    return f"def solve(xs):\n    return sorted(xs) + [{t}, {i}]"


def make_mock_suite(num_tasks: int = 5, n: int = 4) -> MockSuite:
    """Script `num_tasks` tasks with n sampled candidates each.

    Layout of quirks, all deterministic:
      task 0: one duplicate candidate (dedup), two instructions share a class
      task 1: one synthesized instruction equals the original (dropped)
      task 2: two candidates emit the identical instruction text (collapsed)
      task 3: one instruction is judged equivalent to the original
      task 4: everything distinct, every candidate fails execution
    """
    tasks: list[Task] = []
    gen_table: dict[str, list[str]] = {}
    score_table: dict[tuple[str, str], list[float]] = {}
    pass_table: dict[tuple[str, str], bool] = {}
    completions: dict[str, list[str]] = {}
    instruction_classes: dict[str, dict[str, str]] = {}

    for t in range(num_tasks):
        task_id = f"mock/{t}"
        i0 = f"Return the input list sorted with marker {t} appended."
        task = Task(task_id=task_id, instruction_i0=i0, entry_point="solve")
        tasks.append(task)

        raw = [_candidate_code(t, i) for i in range(n)]
        if t == 0 and n >= 3:
            raw[2] = raw[0]
        completions[task_id] = raw
        gen_table[generation_prompt(i0, "")] = raw
        distinct_codes = list(dict.fromkeys(raw))

        # Instruction text and equivalence class per surviving candidate,
        # in generation order of the distinct codes.
        classes: dict[str, str] = {i0: "main"}
        instr_by_code: dict[str, str] = {}
        for rank, code in enumerate(distinct_codes):
            if t == 1 and rank == 0:
                text = i0  # dropped against the original
                label = "main"
            elif t == 2 and rank in (1, 2):
                text = f"Sort the list, then tag it with {t}.shared"
                label = f"{t}-shared"
            elif t == 3 and rank == 0:
                text = f"Sort the input list and append the marker value {t}."
                label = "main"  # judged equivalent to the original
            elif t == 0 and rank in (0, 2):
                text = f"Sort values and add suffix {t}.pair (variant {rank})"
                label = f"{t}-pair"
            else:
                text = f"Sort the list and tag it with {t}.{rank}"
                label = f"{t}-solo-{rank}"
            instr_by_code[code] = text
            classes[text] = label
            gen_table[instruction_synthesis_prompt(code)] = [text]
        instruction_classes[task_id] = classes

        all_texts = [i0] + [instr_by_code[c] for c in distinct_codes]
        unique_texts = list(dict.fromkeys(all_texts))

        # Pair judgments: same class <=> equivalent. Both orders scripted.
        for a in unique_texts:
            for b in unique_texts:
                if a == b:
                    continue
                verdict = "yes" if classes[a] == classes[b] else "no"
                gen_table[equivalence_prompt(a, b)] = [verdict]

        # Scores: single-token entries derived from content.
        for code in distinct_codes:
            for text in unique_texts:
                score_table[(coder_scoring_prompt(text), code)] = [
                    stable_logprob("l0", task_id, text, code)
                ]
            score_table[(PRIOR_SCAFFOLD, code)] = [
                stable_logprob("prior", task_id, code)
            ]
            score_table[(reviewer_scoring_prompt(code), i0)] = [
                stable_logprob("reviewer", task_id, code)
            ]

        # Pass/fail fixture: parity rule, except task 4 where all fail.
        for rank, code in enumerate(distinct_codes):
            passed = False if t == 4 else (t + rank) % 2 == 0
            pass_table[(task_id, code)] = passed

    def backend_factory() -> MockBackend:
        return MockBackend(score_table=score_table, gen_table=gen_table)

    return MockSuite(
        tasks=tasks,
        backend_factory=backend_factory,
        evaluator=FixtureEvaluator(pass_table),
        completions=completions,
        instruction_classes=instruction_classes,
        score_table=score_table,
        gen_table=gen_table,
        pass_table=pass_table,
    )


@pytest.fixture
def mock_suite() -> MockSuite:
    return make_mock_suite()
