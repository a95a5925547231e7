"""Reranking engine for LLM-sampled code candidates.

Given a pool of sampled programs for a natural-language instruction, the
engine generates alternative instructions, clusters the semantically
equivalent ones, and reranks the pool by how much of each candidate's
normalized speaker distribution lands on the cluster containing the
original instruction. Coder and CoderReviewer baselines and a benchmark
harness are included.
"""

__version__ = "0.1.0"

from .backends import (
    Backend,
    BackendConfig,
    GenRequest,
    HttpBackend,
    MockBackend,
    ScoreRequest,
    ScoreResult,
)
from .candidates import Candidate, Task, build_candidates, sample_candidates, score_prior
from .clustering import (
    Cluster,
    ClusterPartition,
    PairJudgment,
    build_partition,
    judge_pair,
    singleton_partition,
)
from .instructions import Instruction, synthesize_instructions
from .rsa import (
    METHODS,
    CalibrationParams,
    ClusterScores,
    RerankResult,
    ScoreMatrix,
    aggregate_clusters,
    calibrate_temperatures,
    rerank_code_rsa,
    rerank_code_rsa_no_clustering,
    rerank_coder,
    rerank_coder_reviewer,
    speaker_distribution,
)

__all__ = [
    "Backend",
    "BackendConfig",
    "GenRequest",
    "HttpBackend",
    "MockBackend",
    "ScoreRequest",
    "ScoreResult",
    "Candidate",
    "Task",
    "build_candidates",
    "sample_candidates",
    "score_prior",
    "Cluster",
    "ClusterPartition",
    "PairJudgment",
    "build_partition",
    "judge_pair",
    "singleton_partition",
    "Instruction",
    "synthesize_instructions",
    "METHODS",
    "CalibrationParams",
    "ClusterScores",
    "RerankResult",
    "ScoreMatrix",
    "aggregate_clusters",
    "calibrate_temperatures",
    "rerank_code_rsa",
    "rerank_code_rsa_no_clustering",
    "rerank_coder",
    "rerank_coder_reviewer",
    "speaker_distribution",
]
