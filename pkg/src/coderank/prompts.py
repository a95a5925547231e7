"""Versioned prompt templates.

The template files under ``prompts/`` are assets checked into the package;
rendering never alters any byte outside the named slot. Scoring prompts end
exactly at the point where the scored continuation begins, so the
prompt/continuation boundary is always an explicit character offset.
"""

from importlib import resources

# Neutral scaffold used when scoring a candidate with no instruction
# context: just a code-fence opener, so priors stay comparable in-task.
PRIOR_SCAFFOLD = "```python\n"

# Candidate code is generated inside a fenced block; the closing fence
# terminates sampling.
CODE_STOP_MARKERS = ("```",)

INSTRUCTION_END_MARKER = "### instruction end ###"
INSTRUCTION_STOP_MARKERS = ("### instruction end ###", "###instruction end###")

_INSTRUCTION_SLOT = "any function"


def _load(name: str) -> str:
    return (resources.files("coderank") / "prompts" / name).read_text(encoding="utf-8")


_CODER_TEMPLATE = _load("coder_scoring.txt")
_REVIEWER_TEMPLATE = _load("reviewer_scoring.txt")
_INSTRUCTION_TEMPLATE = _load("instruction_synthesis.txt")
_EQUIVALENCE_TEMPLATE = _load("equivalence_judging.txt")


def coder_scoring_prompt(instruction_text: str) -> str:
    """Prompt whose continuation is a candidate program: the instruction
    followed by an opened code block."""
    return _CODER_TEMPLATE.replace("{instruction}", instruction_text, 1)


def generation_prompt(instruction_text: str, prompt_scaffold: str = "") -> str:
    """Sampling prompt for candidate programs.

    The scaffold (an unfinished function, when the task has one) is placed
    inside the code block, so the sampled completion continues it and the
    candidate text is ``scaffold + completion``.
    """
    return coder_scoring_prompt(instruction_text) + prompt_scaffold


def reviewer_scoring_prompt(code_text: str) -> str:
    """Prompt whose continuation is an instruction: the candidate program
    followed by a docstring request."""
    return _REVIEWER_TEMPLATE.replace("{code}", code_text, 1)


def instruction_synthesis_prompt(code_text: str) -> str:
    """One-shot prompt asking for an instruction describing ``code_text``.

    The template is reproduced verbatim apart from the function slot.
    """
    return _INSTRUCTION_TEMPLATE.replace(_INSTRUCTION_SLOT, code_text, 1)


def equivalence_prompt(text_a: str, text_b: str) -> str:
    """Few-shot yes/no prompt judging whether two instructions describe the
    same functionality."""
    rendered = _EQUIVALENCE_TEMPLATE.replace("{instruction_a}", text_a, 1)
    return rendered.replace("{instruction_b}", text_b, 1)
