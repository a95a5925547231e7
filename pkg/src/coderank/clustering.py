"""Semantic-equivalence clustering of instructions.

Instructions are judged pairwise by the model; positive judgments form the
edges of a graph whose connected components become the clusters. The
cluster containing the original instruction (id 0) is the main cluster.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .backends import Backend, GenRequest
from .cache import JudgmentStore
from .errors import EmptyCluster, IncompleteJudgments
from .instructions import Instruction
from .prompts import equivalence_prompt

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PairJudgment:
    """One equivalence verdict for an unordered instruction pair."""

    instruction_a: int
    instruction_b: int
    equivalent: bool
    raw_response: str = ""

    def __post_init__(self):
        if not self.instruction_a < self.instruction_b:
            raise ValueError("judgments are stored with instruction_a < instruction_b")


@dataclass(frozen=True)
class Cluster:
    cluster_id: int
    member_ids: frozenset[int]
    is_main: bool

    def __post_init__(self):
        if not self.member_ids:
            raise EmptyCluster(f"cluster {self.cluster_id} has no members")
        if self.is_main != (0 in self.member_ids):
            raise ValueError("is_main must hold exactly for the cluster containing id 0")


@dataclass
class ClusterPartition:
    """Disjoint, covering partition of the instruction ids."""

    clusters: list[Cluster]
    main_cluster_id: int = field(default=-1)

    def __post_init__(self):
        seen: set[int] = set()
        main_ids = []
        for cluster in self.clusters:
            if seen & cluster.member_ids:
                raise ValueError("clusters overlap")
            seen |= cluster.member_ids
            if cluster.is_main:
                main_ids.append(cluster.cluster_id)
        if len(main_ids) != 1:
            raise ValueError("exactly one cluster must contain instruction 0")
        if self.main_cluster_id == -1:
            self.main_cluster_id = main_ids[0]
        elif self.main_cluster_id != main_ids[0]:
            raise ValueError("main_cluster_id does not match the cluster containing 0")

    def instruction_ids(self) -> set[int]:
        out: set[int] = set()
        for cluster in self.clusters:
            out |= cluster.member_ids
        return out

    def cluster_for(self, instruction_id: int) -> Cluster:
        for cluster in self.clusters:
            if instruction_id in cluster.member_ids:
                return cluster
        raise KeyError(instruction_id)

    def to_payload(self) -> dict:
        return {
            "main_cluster_id": self.main_cluster_id,
            "clusters": [
                {
                    "cluster_id": c.cluster_id,
                    "member_ids": sorted(c.member_ids),
                    "is_main": c.is_main,
                }
                for c in self.clusters
            ],
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "ClusterPartition":
        clusters = [
            Cluster(
                cluster_id=int(c["cluster_id"]),
                member_ids=frozenset(int(i) for i in c["member_ids"]),
                is_main=bool(c["is_main"]),
            )
            for c in payload["clusters"]
        ]
        return cls(clusters=clusters, main_cluster_id=int(payload["main_cluster_id"]))


class _UnionFind:
    """Union-find over a fixed id set, with path halving and union by size."""

    def __init__(self, ids: Iterable[int]):
        self._parent = {i: i for i in ids}
        self._size = {i: 1 for i in self._parent}

    def find(self, x: int) -> int:
        parent = self._parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self._size[ra] < self._size[rb]:
            ra, rb = rb, ra
        self._parent[rb] = ra
        self._size[ra] += self._size[rb]


def parse_verdict(raw_response: str) -> bool:
    """Map a judge response to a boolean verdict.

    Only a leading affirmative counts as equivalent; anything unparseable
    counts as non-equivalent so that clusters never over-merge on noise.
    """
    token = raw_response.strip().lower()
    for sep in (" ", "\n", "\t", ".", ",", "!"):
        token = token.split(sep)[0] if token else token
    if token == "yes":
        return True
    if token != "no":
        logger.info("unparseable equivalence verdict %r; treating as non-equivalent", raw_response[:80])
    return False


def judge_pair(
    backend: Backend,
    a: Instruction,
    b: Instruction,
    temperature: float = 0.1,
    max_tokens: int = 8,
    store: JudgmentStore | None = None,
) -> PairJudgment:
    """Ask the model whether two instructions describe the same functionality.

    Each unordered pair is judged once, in (a, b) id order; verdicts are
    cached by model and text hashes when a store is given.
    """
    if not a.instruction_id < b.instruction_id:
        raise ValueError("judge_pair expects a.instruction_id < b.instruction_id")
    if store is not None:
        record = store.get(backend.model_name, a.text, b.text)
        if record is not None:
            return PairJudgment(
                instruction_a=a.instruction_id,
                instruction_b=b.instruction_id,
                equivalent=bool(record["equivalent"]),
                raw_response=str(record.get("raw_response", "")),
            )
    req = GenRequest(
        prompt_text=equivalence_prompt(a.text, b.text),
        sampling_temperature=temperature,
        max_tokens=max_tokens,
    )
    completions = backend.generate(req, 1)
    raw = completions[0] if completions else ""
    verdict = parse_verdict(raw)
    if store is not None:
        store.put(backend.model_name, a.text, b.text, verdict, raw)
    return PairJudgment(
        instruction_a=a.instruction_id,
        instruction_b=b.instruction_id,
        equivalent=verdict,
        raw_response=raw,
    )


def judge_all_pairs(
    backend: Backend,
    instructions: Sequence[Instruction],
    temperature: float = 0.1,
    max_tokens: int = 8,
    store: JudgmentStore | None = None,
    max_workers: int = 1,
) -> list[PairJudgment]:
    """Judge every unordered pair; output is ordered by (a, b)."""
    ordered = sorted(instructions, key=lambda i: i.instruction_id)
    pairs = list(itertools.combinations(ordered, 2))
    if max_workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(
                pool.map(
                    lambda ab: judge_pair(
                        backend, ab[0], ab[1], temperature, max_tokens, store
                    ),
                    pairs,
                )
            )
    return [judge_pair(backend, a, b, temperature, max_tokens, store) for a, b in pairs]


def build_partition(
    instructions: Sequence[Instruction], judgments: Sequence[PairJudgment]
) -> ClusterPartition:
    """Connected components of the positive-judgment graph.

    Clusters are numbered 0..K-1 in order of their smallest member id, so
    the main cluster (which contains instruction 0) is always cluster 0.
    """
    ids = sorted(i.instruction_id for i in instructions)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate instruction ids")
    if 0 not in ids:
        raise ValueError("instruction 0 (the original instruction) is required")
    id_set = set(ids)

    seen_pairs: set[tuple[int, int]] = set()
    uf = _UnionFind(ids)
    for judgment in judgments:
        pair = (judgment.instruction_a, judgment.instruction_b)
        if pair[0] not in id_set or pair[1] not in id_set:
            raise ValueError(f"judgment references unknown instruction ids {pair}")
        if pair in seen_pairs:
            raise ValueError(f"duplicate judgment for pair {pair}")
        seen_pairs.add(pair)
        if judgment.equivalent:
            uf.union(*pair)

    expected = {(a, b) for a, b in itertools.combinations(ids, 2)}
    missing = expected - seen_pairs
    if missing:
        raise IncompleteJudgments(
            f"{len(missing)} unordered pairs lack judgments, e.g. {sorted(missing)[0]}"
        )

    components: dict[int, set[int]] = {}
    for i in ids:
        components.setdefault(uf.find(i), set()).add(i)
    ordered_members = sorted(components.values(), key=min)
    clusters = [
        Cluster(cluster_id=k, member_ids=frozenset(members), is_main=0 in members)
        for k, members in enumerate(ordered_members)
    ]
    return ClusterPartition(clusters=clusters)


def singleton_partition(instruction_ids: Iterable[int]) -> ClusterPartition:
    """Every instruction in its own cluster; the main cluster is {0}."""
    ids = sorted(set(instruction_ids))
    if 0 not in ids:
        raise ValueError("instruction 0 (the original instruction) is required")
    clusters = [
        Cluster(cluster_id=k, member_ids=frozenset({i}), is_main=i == 0)
        for k, i in enumerate(ids)
    ]
    return ClusterPartition(clusters=clusters)


def restrict_partition(partition: ClusterPartition, keep_ids: Iterable[int]) -> ClusterPartition:
    """Drop instructions outside ``keep_ids``; empty clusters disappear and
    the rest are renumbered by smallest member."""
    keep = set(keep_ids)
    if 0 not in keep:
        raise ValueError("the original instruction (id 0) cannot be dropped")
    surviving = [c.member_ids & keep for c in partition.clusters]
    surviving = [members for members in surviving if members]
    surviving.sort(key=min)
    clusters = [
        Cluster(cluster_id=k, member_ids=frozenset(members), is_main=0 in members)
        for k, members in enumerate(surviving)
    ]
    return ClusterPartition(clusters=clusters)
