"""Exception types shared across the package."""


class CoderankError(Exception):
    """Base class for all package-specific errors."""


class TransportError(CoderankError):
    """Network-level failure that persisted through all retries."""


class ProtocolError(CoderankError):
    """The backend answered, but the response is unusable (missing
    per-token log-probabilities, malformed body, client-side error)."""


class UnknownPair(CoderankError):
    """Mock backend only: the requested prompt/continuation pair or
    generation prompt has no scripted entry."""


class EmptyCompletion(CoderankError):
    """A sampled completion was empty after stop-marker truncation."""


class GenerationExhausted(CoderankError):
    """Sampling produced no usable output after all retries."""


class IncompleteJudgments(CoderankError):
    """Pairwise judgments do not cover every unordered instruction pair."""


class EmptyCluster(CoderankError):
    """A cluster with no members, which violates the partition invariant."""


class SchemaError(CoderankError):
    """A dataset record does not parse under the named schema."""

    def __init__(self, message: str, record_index: int | None = None):
        super().__init__(message)
        self.record_index = record_index


class EmptyEvaluation(CoderankError):
    """Accuracy requested over zero evaluated tasks."""
