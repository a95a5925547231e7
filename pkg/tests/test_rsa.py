import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coderank.clustering import Cluster, ClusterPartition, singleton_partition
from coderank.rsa import (
    METHOD_CODE_RSA,
    METHOD_CODE_RSA_NO_CLUSTERING,
    METHOD_CODER,
    METHOD_CODER_REVIEWER,
    CalibrationParams,
    ClusterScores,
    RerankResult,
    ScoreMatrix,
    _speaker_matrix,
    aggregate_clusters,
    calibrate_temperatures,
    logsumexp,
    rerank_code_rsa,
    rerank_code_rsa_no_clustering,
    rerank_coder,
    rerank_coder_reviewer,
    speaker_distribution,
)

from oracles import brute_force_speaker_scores


def partition_of(members_per_cluster: list[set[int]]) -> ClusterPartition:
    ordered = sorted(members_per_cluster, key=min)
    clusters = [
        Cluster(cluster_id=k, member_ids=frozenset(m), is_main=0 in m)
        for k, m in enumerate(ordered)
    ]
    return ClusterPartition(clusters=clusters)


def matrix_of(l0_log, prior_log, reviewer_log=None, candidate_ids=None, instruction_ids=None):
    l0 = np.array(l0_log, dtype=float)
    return ScoreMatrix(
        candidate_ids=candidate_ids or list(range(1, l0.shape[0] + 1)),
        instruction_ids=instruction_ids or list(range(l0.shape[1])),
        l0_log=l0,
        prior_log=np.array(prior_log, dtype=float),
        reviewer_log=None if reviewer_log is None else np.array(reviewer_log, dtype=float),
    )


class TestScoreMatrixValidation:
    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            matrix_of([[0.0, -np.inf]], [-1.0])

    def test_requires_instruction_zero_first(self):
        with pytest.raises(ValueError):
            matrix_of([[-1.0, -2.0]], [-1.0], instruction_ids=[1, 0])

    def test_payload_roundtrip_full_precision(self):
        matrix = matrix_of(
            [[-1.23456789012345678, -2.0]], [-3.333333333333333], reviewer_log=[-0.1]
        )
        again = ScoreMatrix.from_payload(matrix.to_payload())
        assert np.array_equal(again.l0_log, matrix.l0_log)
        assert np.array_equal(again.prior_log, matrix.prior_log)
        assert np.array_equal(again.reviewer_log, matrix.reviewer_log)


class TestAggregation:
    def test_singleton_nonmain_column_is_copied(self):
        matrix = matrix_of(
            [[-1.0, -2.0, -3.5], [-4.0, -5.0, -6.25]], [-1.0, -2.0],
            instruction_ids=[0, 1, 3],
        )
        part = partition_of([{0}, {1}, {3}])
        scores = aggregate_clusters(matrix, part)
        assert np.array_equal(scores.agg_log[:, 2], matrix.l0_log[:, 2])

    def test_nonmain_mean_in_probability_space(self):
        matrix = matrix_of(
            [[-1.0, math.log(0.2), math.log(0.4)]], [-1.0]
        )
        part = partition_of([{0}, {1, 2}])
        scores = aggregate_clusters(matrix, part)
        assert scores.agg_log[0, 1] == pytest.approx(math.log(0.3), abs=1e-12)

    def test_main_cluster_keeps_original_column_exactly(self):
        matrix = matrix_of(
            [[-7.25, -50.0, -1.0], [-3.5, -60.0, -2.0]], [-1.0, -2.0],
            instruction_ids=[0, 5, 6],
        )
        part = partition_of([{0, 5}, {6}])
        scores = aggregate_clusters(matrix, part)
        assert np.array_equal(scores.agg_log[:, 0], matrix.l0_log[:, 0])
        assert scores.main_cluster_id == 0

    def test_partition_must_cover_columns(self):
        matrix = matrix_of([[-1.0, -2.0]], [-1.0])
        with pytest.raises(ValueError):
            aggregate_clusters(matrix, partition_of([{0}]))


class TestCalibration:
    def test_documented_example(self):
        tau = calibrate_temperatures([-10.0, -20.0, -30.0], alpha=1.0)
        assert tau == pytest.approx([math.exp(-1), 1.0, math.e], abs=1e-9)

    def test_alpha_zero_gives_unit_temperatures(self):
        tau = calibrate_temperatures([-3.0, -9.0, -27.0], alpha=0.0)
        assert list(tau) == [1.0, 1.0, 1.0]

    def test_zero_variance_guard(self):
        tau = calibrate_temperatures([-5.0, -5.0], alpha=2.5)
        assert list(tau) == [1.0, 1.0]

    def test_single_candidate_guard(self):
        assert list(calibrate_temperatures([-12.0], alpha=1.0)) == [1.0]

    def test_alpha_validation(self):
        with pytest.raises(ValueError):
            CalibrationParams(alpha=-0.5)
        with pytest.raises(ValueError):
            CalibrationParams(alpha=float("nan"))


class TestSpeaker:
    def test_equal_scores_split_evenly(self):
        cs = ClusterScores(
            candidate_ids=[1],
            cluster_ids=[0, 1],
            agg_log=np.array([[-2.0, -2.0]]),
            main_cluster_id=0,
        )
        for tau in (0.25, 1.0, 4.0):
            dist = speaker_distribution(cs, [tau], 1)
            assert dist == pytest.approx([0.5, 0.5], abs=1e-12)

    def test_temperature_sharpening_example(self):
        cs = ClusterScores(
            candidate_ids=[1],
            cluster_ids=[0, 1],
            agg_log=np.log(np.array([[0.4, 0.1]])),
            main_cluster_id=0,
        )
        dist = speaker_distribution(cs, [0.5], 1)
        assert dist == pytest.approx([16 / 17, 1 / 17], abs=1e-9)

    def test_distribution_sums_to_one(self):
        rng = np.random.default_rng(7)
        agg = rng.uniform(-40.0, 0.0, size=(5, 6))
        cs = ClusterScores(
            candidate_ids=list(range(1, 6)),
            cluster_ids=list(range(6)),
            agg_log=agg,
            main_cluster_id=0,
        )
        tau = rng.uniform(0.2, 5.0, size=5)
        probs = _speaker_matrix(cs, tau)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_row_scale_invariance(self):
        rng = np.random.default_rng(11)
        agg = rng.uniform(-30.0, 0.0, size=(3, 4))
        cs = ClusterScores(
            candidate_ids=[1, 2, 3],
            cluster_ids=[0, 1, 2, 3],
            agg_log=agg,
            main_cluster_id=0,
        )
        tau = np.array([0.5, 1.0, 2.0])
        base = _speaker_matrix(cs, tau)
        shifted = ClusterScores(
            candidate_ids=cs.candidate_ids,
            cluster_ids=cs.cluster_ids,
            agg_log=agg + np.array([[math.log(3.7)], [0.0], [0.0]]),
            main_cluster_id=0,
        )
        moved = _speaker_matrix(shifted, tau)
        assert np.all(np.abs(moved - base) < 1e-12)

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_entropy_monotone_in_temperature(self, seed):
        rng = np.random.default_rng(seed)
        agg = rng.uniform(-40.0, 0.0, size=(1, rng.integers(2, 7)))
        cs = ClusterScores(
            candidate_ids=[1],
            cluster_ids=list(range(agg.shape[1])),
            agg_log=agg,
            main_cluster_id=0,
        )

        def entropy(tau):
            p = speaker_distribution(cs, [tau], 1)
            p = p[p > 0]
            return float(-(p * np.log(p)).sum())

        taus = sorted(rng.uniform(0.05, 5.0, size=4))
        entropies = [entropy(t) for t in taus]
        for smaller, larger in zip(entropies, entropies[1:]):
            assert smaller <= larger + 1e-9


class TestRerankCodeRsa:
    def test_single_candidate_selected(self):
        matrix = matrix_of([[-1.0, -4.0]], [-2.0])
        part = partition_of([{0}, {1}])
        result = rerank_code_rsa(matrix, part, CalibrationParams(alpha=1.0))
        assert result.selected_id == 1
        expected = math.exp(-1.0) / (math.exp(-1.0) + math.exp(-4.0))
        assert result.scores[0] == pytest.approx(expected, abs=1e-12)

    def test_concentration_beats_higher_coder_score(self):
        # Candidate 2 has the higher score on the original instruction but
        # splits its mass across both clusters; candidate 1 concentrates.
        matrix = matrix_of(
            [
                [math.log(0.5), math.log(0.0001)],
                [math.log(0.6), math.log(0.6)],
            ],
            [-5.0, -5.0],
        )
        part = partition_of([{0}, {1}])
        rsa = rerank_code_rsa(matrix, part, CalibrationParams(alpha=1.0))
        coder = rerank_coder(matrix)
        assert coder.selected_id == 2
        assert rsa.selected_id == 1

    def test_alpha_zero_bitwise_equals_unit_temperatures(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            num_c = int(rng.integers(1, 5))
            num_i = int(rng.integers(1, 5))
            matrix = matrix_of(
                rng.uniform(-40, 0, size=(num_c, num_i)),
                rng.uniform(-40, 0, size=num_c),
            )
            part = singleton_partition(matrix.instruction_ids)
            with_zero = rerank_code_rsa(matrix, part, CalibrationParams(alpha=0.0))
            cs = aggregate_clusters(matrix, part)
            unscaled = _speaker_matrix(cs, np.ones(num_c))
            main_col = cs.main_column()
            by_id = dict(zip(with_zero.ranking, with_zero.scores))
            for row, cid in enumerate(matrix.candidate_ids):
                assert by_id[cid] == unscaled[row, main_col]

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(30):
            num_c = int(rng.integers(1, 7))
            num_i = int(rng.integers(1, 7))
            instruction_ids = list(range(num_i))
            l0 = rng.uniform(-40, 0, size=(num_c, num_i))
            prior = rng.uniform(-40, 0, size=num_c)
            # random partition: assign each instruction a bucket
            buckets: dict[int, set[int]] = {}
            assignment = rng.integers(0, num_i, size=num_i)
            for iid, bucket in zip(instruction_ids, assignment):
                buckets.setdefault(int(bucket), set()).add(iid)
            part = partition_of(list(buckets.values()))
            alpha = float(rng.uniform(0, 2))
            matrix = matrix_of(l0, prior, instruction_ids=instruction_ids)
            result = rerank_code_rsa(matrix, part, CalibrationParams(alpha=alpha))
            clusters = [
                (c.member_ids, c.is_main)
                for c in sorted(part.clusters, key=lambda c: c.cluster_id)
            ]
            expected_scores, expected_ranking = brute_force_speaker_scores(
                l0, prior, clusters, instruction_ids, matrix.candidate_ids, alpha
            )
            assert result.ranking == expected_ranking
            by_id = dict(zip(result.ranking, result.scores))
            for cid, expected in zip(matrix.candidate_ids, expected_scores):
                assert by_id[cid] == pytest.approx(expected, abs=1e-9)


class TestRerankNoClustering:
    def test_only_original_instruction_scores_one(self):
        matrix = matrix_of([[-2.0], [-9.0], [-4.0]], [-1.0, -2.0, -3.0])
        result = rerank_code_rsa_no_clustering(matrix, CalibrationParams(alpha=1.0))
        assert result.scores == pytest.approx([1.0, 1.0, 1.0])
        assert result.selected_id == 1
        assert result.ranking == [1, 2, 3]

    def test_equals_rsa_with_singleton_partition(self):
        rng = np.random.default_rng(23)
        matrix = matrix_of(
            rng.uniform(-30, 0, size=(4, 5)), rng.uniform(-30, 0, size=4)
        )
        params = CalibrationParams(alpha=0.7)
        direct = rerank_code_rsa_no_clustering(matrix, params)
        via_partition = rerank_code_rsa(
            matrix, singleton_partition(matrix.instruction_ids), params
        )
        assert direct.ranking == via_partition.ranking
        assert direct.scores == via_partition.scores
        assert direct.method == METHOD_CODE_RSA_NO_CLUSTERING
        assert via_partition.method == METHOD_CODE_RSA

    def test_paraphrase_split_changes_ranking(self):
        # Candidate 1's mass sits on two paraphrases of one another; counted
        # separately they swamp its original-instruction share, averaged as
        # one cluster they do not. Candidate 2 concentrates on a singleton
        # alternative instead, so the two runs order the pair differently.
        l0 = [
            [math.log(0.3), math.log(0.3), math.log(0.3), math.log(0.003)],
            [math.log(0.3), math.log(0.03), math.log(0.03), math.log(0.36)],
        ]
        matrix = matrix_of(l0, [-5.0, -5.0])
        params = CalibrationParams(alpha=1.0)
        clustered = rerank_code_rsa(matrix, partition_of([{0}, {1, 2}, {3}]), params)
        unclustered = rerank_code_rsa_no_clustering(matrix, params)
        assert unclustered.selected_id == 2
        assert clustered.selected_id == 1
        assert clustered.ranking != unclustered.ranking


class TestBaselines:
    def test_coder_uses_original_instruction_column(self):
        matrix = matrix_of(
            [[-21.12, -1.0], [-29.24, -50.0]], [-1.0, -2.0],
            candidate_ids=[9, 1],
        )
        result = rerank_coder(matrix)
        assert result.selected_id == 9
        assert result.ranking == [9, 1]
        assert result.scores == pytest.approx([-21.12, -29.24])

    def test_coder_ties_break_to_lower_id(self):
        matrix = matrix_of([[-3.0], [-3.0]], [-1.0, -2.0], candidate_ids=[7, 2])
        result = rerank_coder(matrix)
        assert result.ranking == [2, 7]

    def test_coder_ignores_other_columns(self):
        base = matrix_of([[-1.0, -9.0], [-2.0, -0.5]], [-1.0, -2.0])
        perturbed = matrix_of([[-1.0, -90.0], [-2.0, -0.05]], [-1.0, -2.0])
        assert rerank_coder(base).ranking == rerank_coder(perturbed).ranking

    def test_reviewer_zero_matches_coder(self):
        matrix = matrix_of(
            [[-2.0, -1.0], [-5.0, -1.0]], [-1.0, -2.0], reviewer_log=[0.0, 0.0]
        )
        assert rerank_coder_reviewer(matrix).ranking == rerank_coder(matrix).ranking

    def test_reviewer_sum_example(self):
        matrix = matrix_of(
            [[-2.0], [-1.0]], [-1.0, -2.0], reviewer_log=[-0.1, -3.0]
        )
        result = rerank_coder_reviewer(matrix)
        assert result.selected_id == 1
        assert result.scores == pytest.approx([-2.1, -4.0])

    def test_reviewer_requires_populated_vector(self):
        matrix = matrix_of([[-1.0]], [-1.0])
        with pytest.raises(ValueError):
            rerank_coder_reviewer(matrix)

    def test_reviewer_cannot_offset_inflated_coder_score(self):
        # Mirrors the worked example: the shorter degenerate candidate keeps
        # its lead under the bidirectional score.
        matrix = matrix_of(
            [[-29.24], [-21.12]], [-8.0, -8.0],
            reviewer_log=[-8.5, -9.0], candidate_ids=[1, 9],
        )
        result = rerank_coder_reviewer(matrix)
        assert result.selected_id == 9


class TestRerankResult:
    def test_validates_permutation(self):
        with pytest.raises(ValueError):
            RerankResult(method=METHOD_CODER, ranking=[1, 1], scores=[0.5, 0.5])

    def test_selected_is_top(self):
        result = RerankResult(method=METHOD_CODER, ranking=[4, 2], scores=[-1.0, -2.0])
        assert result.selected_id == 4
        with pytest.raises(ValueError):
            RerankResult(
                method=METHOD_CODER, ranking=[4, 2], scores=[-1.0, -2.0], selected_id=2
            )

    def test_payload_roundtrip(self):
        result = RerankResult(
            method=METHOD_CODER_REVIEWER, ranking=[3, 1], scores=[-0.25, -11.5]
        )
        assert RerankResult.from_payload(result.to_payload()) == result


class TestMainClusterMonotonicity:
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_increasing_main_score_increases_share(self, seed):
        rng = np.random.default_rng(seed)
        num_k = int(rng.integers(2, 6))
        row = rng.uniform(-40, 0, size=(1, num_k))
        cs = ClusterScores(
            candidate_ids=[1],
            cluster_ids=list(range(num_k)),
            agg_log=row,
            main_cluster_id=0,
        )
        tau = [float(rng.uniform(0.2, 3.0))]
        before = speaker_distribution(cs, tau, 1)[0]
        bumped = row.copy()
        bumped[0, 0] += 0.5
        cs_bumped = ClusterScores(
            candidate_ids=[1],
            cluster_ids=list(range(num_k)),
            agg_log=bumped,
            main_cluster_id=0,
        )
        after = speaker_distribution(cs_bumped, tau, 1)[0]
        # Strict increase except where the share already saturates 1.0 in
        # float arithmetic.
        if before < 1.0 - 1e-12:
            assert after > before
        else:
            assert after >= before


def test_logsumexp_matches_direct():
    values = np.array([-1.0, -2.0, -3.0])
    assert logsumexp(values) == pytest.approx(
        math.log(sum(math.exp(v) for v in values)), abs=1e-12
    )
    grid = np.array([[-1.0, -2.0], [-30.0, -31.0]])
    np.testing.assert_allclose(
        logsumexp(grid, axis=1),
        [math.log(math.exp(-1) + math.exp(-2)), math.log(math.exp(-30) + math.exp(-31))],
        atol=1e-12,
    )
