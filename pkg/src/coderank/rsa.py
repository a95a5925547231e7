"""Reranking math: listener scores, cluster aggregation, speaker
normalization, and the four reranking methods.

Everything in this module is a pure function of its inputs; no model is
called. Probabilities live in natural-log space and are exponentiated only
inside max-shifted log-sum-exp normalizations, because the raw quantities
are products of hundreds of token probabilities and underflow otherwise.

The reranking methods:

- ``coder``: cumulative log-probability of the candidate given the
  original instruction.
- ``coder_reviewer``: coder score plus the log-probability of the original
  instruction given the candidate.
- ``code_rsa``: each candidate's speaker distribution over instruction
  clusters is computed, and the candidate is scored by the share it puts
  on the main cluster (the one containing the original instruction). The
  candidate's standardized prior sets a per-candidate temperature that
  sharpens or flattens its speaker distribution before normalization.
- ``code_rsa_no_clustering``: the same with every instruction its own
  cluster, which exposes how much the paraphrase grouping matters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .clustering import ClusterPartition, singleton_partition
from .errors import EmptyCluster

METHOD_CODER = "coder"
METHOD_CODER_REVIEWER = "coder_reviewer"
METHOD_CODE_RSA = "code_rsa"
METHOD_CODE_RSA_NO_CLUSTERING = "code_rsa_no_clustering"
METHODS = (
    METHOD_CODER,
    METHOD_CODER_REVIEWER,
    METHOD_CODE_RSA,
    METHOD_CODE_RSA_NO_CLUSTERING,
)


def logsumexp(values: np.ndarray, axis: int | None = None) -> np.ndarray | float:
    """Max-shifted log of a sum of exponentials."""
    values = np.asarray(values, dtype=float)
    vmax = np.max(values, axis=axis, keepdims=True)
    out = vmax + np.log(np.sum(np.exp(values - vmax), axis=axis, keepdims=True))
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


@dataclass
class ScoreMatrix:
    """Log-space conditional scores, candidates by instructions.

    ``l0_log[c, i]`` is the log-probability of candidate c's code given
    instruction i; column 0 always corresponds to the original instruction
    (id 0). ``prior_log`` holds each candidate's no-instruction score and
    ``reviewer_log``, when populated, the log-probability of the original
    instruction given the candidate.
    """

    candidate_ids: list[int]
    instruction_ids: list[int]
    l0_log: np.ndarray
    prior_log: np.ndarray
    reviewer_log: np.ndarray | None = None

    def __post_init__(self):
        self.l0_log = np.asarray(self.l0_log, dtype=float)
        self.prior_log = np.asarray(self.prior_log, dtype=float)
        if self.reviewer_log is not None:
            self.reviewer_log = np.asarray(self.reviewer_log, dtype=float)
        num_candidates, num_instructions = self.l0_log.shape
        if len(self.candidate_ids) != num_candidates:
            raise ValueError("candidate_ids length does not match matrix rows")
        if len(self.instruction_ids) != num_instructions:
            raise ValueError("instruction_ids length does not match matrix columns")
        if len(set(self.candidate_ids)) != num_candidates:
            raise ValueError("candidate_ids must be unique")
        if len(set(self.instruction_ids)) != num_instructions:
            raise ValueError("instruction_ids must be unique")
        if self.instruction_ids[0] != 0:
            raise ValueError("column 0 must correspond to the original instruction")
        if not np.all(np.isfinite(self.l0_log)):
            raise ValueError("l0_log entries must be finite")
        if self.prior_log.shape != (num_candidates,):
            raise ValueError("prior_log must have one entry per candidate")
        if not np.all(np.isfinite(self.prior_log)):
            raise ValueError("prior_log entries must be finite")
        if self.reviewer_log is not None:
            if self.reviewer_log.shape != (num_candidates,):
                raise ValueError("reviewer_log must have one entry per candidate")
            if not np.all(np.isfinite(self.reviewer_log)):
                raise ValueError("reviewer_log entries must be finite")

    def candidate_row(self, candidate_id: int) -> int:
        return self.candidate_ids.index(candidate_id)

    def instruction_col(self, instruction_id: int) -> int:
        return self.instruction_ids.index(instruction_id)

    def to_payload(self) -> dict:
        payload = {
            "candidate_ids": list(self.candidate_ids),
            "instruction_ids": list(self.instruction_ids),
            "l0_log": [[float(v) for v in row] for row in self.l0_log],
            "prior_log": [float(v) for v in self.prior_log],
        }
        if self.reviewer_log is not None:
            payload["reviewer_log"] = [float(v) for v in self.reviewer_log]
        return payload

    @classmethod
    def from_payload(cls, payload: dict) -> "ScoreMatrix":
        reviewer = payload.get("reviewer_log")
        return cls(
            candidate_ids=[int(i) for i in payload["candidate_ids"]],
            instruction_ids=[int(i) for i in payload["instruction_ids"]],
            l0_log=np.array(payload["l0_log"], dtype=float),
            prior_log=np.array(payload["prior_log"], dtype=float),
            reviewer_log=None if reviewer is None else np.array(reviewer, dtype=float),
        )


@dataclass
class ClusterScores:
    """Cluster-aggregated view of a score matrix: ``agg_log[c, k]`` is the
    log of the candidate's aggregated probability on cluster k, columns
    ordered by cluster id."""

    candidate_ids: list[int]
    cluster_ids: list[int]
    agg_log: np.ndarray
    main_cluster_id: int

    def main_column(self) -> int:
        return self.cluster_ids.index(self.main_cluster_id)


@dataclass(frozen=True)
class CalibrationParams:
    """Strength of the prior's influence on per-candidate temperatures."""

    alpha: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise ValueError("alpha must be finite and >= 0")


@dataclass
class RerankResult:
    """A method's full ranking: candidate ids ordered best-first with their
    scores, plus the selected (top) candidate."""

    method: str
    ranking: list[int]
    scores: list[float]
    selected_id: int = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if len(self.ranking) != len(self.scores):
            raise ValueError("ranking and scores must have equal length")
        if not self.ranking:
            raise ValueError("ranking must be non-empty")
        if len(set(self.ranking)) != len(self.ranking):
            raise ValueError("ranking must be a permutation of candidate ids")
        if self.selected_id is None:
            self.selected_id = self.ranking[0]
        elif self.selected_id != self.ranking[0]:
            raise ValueError("selected_id must be the top of the ranking")

    def to_payload(self) -> dict:
        return {
            "method": self.method,
            "ranking": list(self.ranking),
            "scores": [float(s) for s in self.scores],
            "selected_id": self.selected_id,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "RerankResult":
        return cls(
            method=str(payload["method"]),
            ranking=[int(i) for i in payload["ranking"]],
            scores=[float(s) for s in payload["scores"]],
            selected_id=int(payload["selected_id"]),
        )


def _ranked(candidate_ids: Sequence[int], scores: np.ndarray, method: str) -> RerankResult:
    # Descending score; ties go to the lower candidate id.
    order = sorted(
        range(len(candidate_ids)), key=lambda i: (-scores[i], candidate_ids[i])
    )
    return RerankResult(
        method=method,
        ranking=[candidate_ids[i] for i in order],
        scores=[float(scores[i]) for i in order],
    )


def aggregate_clusters(sm: ScoreMatrix, part: ClusterPartition) -> ClusterScores:
    """Collapse instruction columns into cluster columns.

    The main cluster keeps the original instruction's column unchanged;
    every other cluster takes the arithmetic mean of its members in
    probability space, computed as logsumexp(member columns) - log(size).
    """
    matrix_ids = set(sm.instruction_ids)
    partition_ids = part.instruction_ids()
    if matrix_ids != partition_ids:
        raise ValueError(
            "partition does not cover the matrix's instruction columns: "
            f"matrix has {sorted(matrix_ids)}, partition has {sorted(partition_ids)}"
        )
    clusters = sorted(part.clusters, key=lambda c: c.cluster_id)
    columns = []
    i0_col = sm.instruction_col(0)
    for cluster in clusters:
        if not cluster.member_ids:
            raise EmptyCluster(f"cluster {cluster.cluster_id} has no members")
        if cluster.is_main:
            columns.append(sm.l0_log[:, i0_col].copy())
            continue
        member_cols = [sm.instruction_col(i) for i in sorted(cluster.member_ids)]
        member_logs = sm.l0_log[:, member_cols]
        columns.append(logsumexp(member_logs, axis=1) - np.log(len(member_cols)))
    return ClusterScores(
        candidate_ids=list(sm.candidate_ids),
        cluster_ids=[c.cluster_id for c in clusters],
        agg_log=np.column_stack(columns),
        main_cluster_id=part.main_cluster_id,
    )


def calibrate_temperatures(prior_log: Sequence[float] | np.ndarray, alpha: float) -> np.ndarray:
    """Per-candidate temperatures from standardized log priors.

    z is the within-pool standardization of the log priors (divisor n-1);
    pools with no variance, including single-candidate pools, get z = 0 so
    every temperature is exactly 1. The temperature is exp(-alpha * z):
    candidates with above-average priors get temperatures below 1 and thus
    sharper speaker distributions.
    """
    prior = np.asarray(prior_log, dtype=float)
    if prior.ndim != 1 or prior.size == 0:
        raise ValueError("prior_log must be a non-empty vector")
    if prior.size == 1:
        z = np.zeros_like(prior)
    else:
        std = prior.std(ddof=1)
        if std == 0.0:
            z = np.zeros_like(prior)
        else:
            z = (prior - prior.mean()) / std
    return np.exp(-alpha * z)


def standardized_priors(prior_log: Sequence[float] | np.ndarray) -> np.ndarray:
    """The z vector used by ``calibrate_temperatures``."""
    prior = np.asarray(prior_log, dtype=float)
    if prior.size < 2:
        return np.zeros_like(prior)
    std = prior.std(ddof=1)
    if std == 0.0:
        return np.zeros_like(prior)
    return (prior - prior.mean()) / std


def _speaker_matrix(cs: ClusterScores, tau: np.ndarray) -> np.ndarray:
    """Row-normalized speaker probabilities: softmax over clusters of each
    candidate's aggregated log scores divided by its temperature."""
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (len(cs.candidate_ids),):
        raise ValueError("tau must have one entry per candidate")
    if np.any(tau <= 0):
        raise ValueError("temperatures must be > 0")
    scaled = cs.agg_log / tau[:, None]
    return np.exp(scaled - logsumexp(scaled, axis=1)[:, None])


def speaker_distribution(cs: ClusterScores, tau: Sequence[float] | np.ndarray, candidate_id: int) -> np.ndarray:
    """One candidate's probability distribution over clusters, ordered like
    ``cs.cluster_ids``. Entries sum to 1."""
    row = cs.candidate_ids.index(candidate_id)
    return _speaker_matrix(cs, np.asarray(tau, dtype=float))[row]


def rerank_code_rsa(
    sm: ScoreMatrix, part: ClusterPartition, params: CalibrationParams
) -> RerankResult:
    """Rank candidates by their speaker probability on the main cluster."""
    return _rerank_speaker(sm, part, params, METHOD_CODE_RSA)


def rerank_code_rsa_no_clustering(sm: ScoreMatrix, params: CalibrationParams) -> RerankResult:
    """The clustering-free ablation: every instruction is its own cluster."""
    part = singleton_partition(sm.instruction_ids)
    return _rerank_speaker(sm, part, params, METHOD_CODE_RSA_NO_CLUSTERING)


def _rerank_speaker(
    sm: ScoreMatrix, part: ClusterPartition, params: CalibrationParams, method: str
) -> RerankResult:
    tau = calibrate_temperatures(sm.prior_log, params.alpha)
    cluster_scores = aggregate_clusters(sm, part)
    probs = _speaker_matrix(cluster_scores, tau)
    scores = probs[:, cluster_scores.main_column()]
    return _ranked(sm.candidate_ids, scores, method)


def rerank_coder(sm: ScoreMatrix) -> RerankResult:
    """Rank candidates by their score on the original instruction alone."""
    return _ranked(sm.candidate_ids, sm.l0_log[:, sm.instruction_col(0)], METHOD_CODER)


def rerank_coder_reviewer(sm: ScoreMatrix) -> RerankResult:
    """Rank candidates by the sum of the coder score and the reviewer
    score (instruction given code)."""
    if sm.reviewer_log is None:
        raise ValueError("reviewer_log is not populated")
    scores = sm.l0_log[:, sm.instruction_col(0)] + sm.reviewer_log
    return _ranked(sm.candidate_ids, scores, METHOD_CODER_REVIEWER)


def rerank_all(
    sm: ScoreMatrix, part: ClusterPartition, params: CalibrationParams
) -> dict[str, RerankResult]:
    """All four methods on one matrix/partition pair."""
    return {
        METHOD_CODER: rerank_coder(sm),
        METHOD_CODER_REVIEWER: rerank_coder_reviewer(sm),
        METHOD_CODE_RSA: rerank_code_rsa(sm, part, params),
        METHOD_CODE_RSA_NO_CLUSTERING: rerank_code_rsa_no_clustering(sm, params),
    }
