import numpy as np
import pytest

from oracles import two_gaussian_llr_auc
from unlearn_bench.attacks import (
    MASK_FORGOTTEN,
    MASK_KEPT,
    MASK_NEVER,
    PairedScoreMatrix,
    pairwise_decisions,
    update_leak_attack,
)
from unlearn_bench.errors import BenchError
from unlearn_bench.metrics import roc_from_scores


def synthetic_pairs(rng, n_pairs, n_queries, mu_forgot, mu_never, cov_scale=1.0):
    """Every query has both hypotheses populated with known Gaussians."""
    base = np.zeros((n_pairs, n_queries), dtype=np.float32)
    unl = np.zeros_like(base)
    mask = np.zeros((n_pairs, n_queries), dtype=np.uint8)
    for q in range(n_queries):
        forgot_rows = rng.choice(n_pairs, size=n_pairs // 2, replace=False)
        is_forgot = np.zeros(n_pairs, dtype=bool)
        is_forgot[forgot_rows] = True
        mask[is_forgot, q] = MASK_FORGOTTEN
        mask[~is_forgot, q] = MASK_NEVER
        n_f = int(is_forgot.sum())
        samples_f = rng.normal(mu_forgot, cov_scale, size=(n_f, 2))
        samples_n = rng.normal(mu_never, cov_scale, size=(n_pairs - n_f, 2))
        base[is_forgot, q], unl[is_forgot, q] = samples_f[:, 0], samples_f[:, 1]
        base[~is_forgot, q], unl[~is_forgot, q] = samples_n[:, 0], samples_n[:, 1]
    return PairedScoreMatrix(
        query_indices=np.arange(n_queries, dtype=np.int64),
        base_scores=base,
        unlearned_scores=unl,
        mask=mask,
        provenance={"kind": "test"},
    )


def targets_from(rng, n, mu, labels):
    """Target (phi_base, phi_unl) pairs drawn from the labelled hypothesis."""
    points = np.where(labels[:, None] == 1, rng.normal(mu[0], 1.0, size=(n, 2)), 0.0)
    never = rng.normal(mu[1], 1.0, size=(n, 2))
    points = np.where(labels[:, None] == 1, points, never)
    return points[:, 0], points[:, 1]


class TestUpdateLeakAttack:
    def test_known_mean_shift_matches_closed_form_auc(self, rng):
        # two-Gaussian oracle: AUC = Phi(||delta|| / sqrt(2)); min_fit above
        # the pair count forces globally pooled fits, whose 64k samples pin
        # the Gaussians to their true parameters
        mu_f = np.array([1.0, 0.0])
        mu_n = np.array([0.0, 0.5])
        n_queries = 4000
        pairs = synthetic_pairs(rng, n_pairs=64, n_queries=n_queries, mu_forgot=mu_f, mu_never=mu_n)
        labels = (rng.random(n_queries) < 0.5).astype(np.int64)
        phi_b, phi_u = targets_from(rng, n_queries, (mu_f, mu_n), labels)
        result = update_leak_attack(phi_b, phi_u, pairs, labels, pooling="global", min_fit=100)
        auc = roc_from_scores(result.scores, result.labels).auc
        expected = two_gaussian_llr_auc(mu_f - mu_n)
        assert abs(auc - expected) < 0.02

    def test_identical_hypotheses_are_chance(self, rng):
        mu = np.array([0.3, 0.3])
        n_queries = 2000
        pairs = synthetic_pairs(rng, 64, n_queries, mu, mu)
        labels = (rng.random(n_queries) < 0.5).astype(np.int64)
        phi_b, phi_u = targets_from(rng, n_queries, (mu, mu), labels)
        result = update_leak_attack(phi_b, phi_u, pairs, labels, pooling="global")
        assert np.mean(np.abs(result.scores)) < 0.5  # log-ratios hover near 0
        auc = roc_from_scores(result.scores, result.labels).auc
        assert 0.45 <= auc <= 0.55

    def test_reduces_to_single_model_when_planes_equal(self, rng):
        # duplicated second coordinate adds no information
        mu_f1 = np.array([1.2])
        mu_n1 = np.array([0.0])
        n_pairs, n_queries = 64, 3000
        phi_plane = np.zeros((n_pairs, n_queries), dtype=np.float32)
        mask = np.zeros((n_pairs, n_queries), dtype=np.uint8)
        for q in range(n_queries):
            forgot = rng.random(n_pairs) < 0.5
            mask[forgot, q] = MASK_FORGOTTEN
            mask[~forgot, q] = MASK_NEVER
            phi_plane[forgot, q] = rng.normal(mu_f1, 1.0, size=forgot.sum())
            phi_plane[~forgot, q] = rng.normal(mu_n1, 1.0, size=(~forgot).sum())
        pairs = PairedScoreMatrix(
            query_indices=np.arange(n_queries, dtype=np.int64),
            base_scores=phi_plane,
            unlearned_scores=phi_plane.copy(),
            mask=mask,
            provenance={},
        )
        labels = (rng.random(n_queries) < 0.5).astype(np.int64)
        phi = np.where(labels == 1, rng.normal(mu_f1, 1.0, n_queries), rng.normal(mu_n1, 1.0, n_queries))
        result = update_leak_attack(phi, phi, pairs, labels, pooling="global", cov_reg=1e-6)
        auc = roc_from_scores(result.scores, result.labels).auc
        expected = two_gaussian_llr_auc(np.array([mu_f1[0] - mu_n1[0], 0.0]) / np.sqrt(2))
        # 1-D problem: AUC should match Phi(|d|/sqrt(2)) for the scalar gap
        import scipy.stats

        assert abs(auc - scipy.stats.norm.cdf((mu_f1[0] - mu_n1[0]) / np.sqrt(2))) < 0.02

    def test_misaligned_queries(self, rng):
        pairs = synthetic_pairs(rng, 8, 10, np.zeros(2), np.ones(2))
        with pytest.raises(BenchError) as err:
            update_leak_attack(np.zeros(9), np.zeros(9), pairs, np.zeros(9, dtype=int))
        assert err.value.code == "MISALIGNED_QUERIES"
        with pytest.raises(BenchError) as err:
            update_leak_attack(np.zeros(10), np.zeros(9), pairs, np.zeros(10, dtype=int))
        assert err.value.code == "MISALIGNED_QUERIES"

    def test_too_few_samples_without_pooling(self, rng):
        pairs = synthetic_pairs(rng, 4, 6, np.zeros(2), np.ones(2))
        pairs.mask[:, 0] = MASK_KEPT  # query 0 unusable
        with pytest.raises(BenchError) as err:
            update_leak_attack(
                np.zeros(6), np.zeros(6), pairs, np.zeros(6, dtype=int), pooling="none", min_fit=3
            )
        assert err.value.code == "TOO_FEW_SHADOWS"

    def test_class_pooling_requires_labels(self, rng):
        pairs = synthetic_pairs(rng, 8, 6, np.zeros(2), np.ones(2))
        with pytest.raises(BenchError):
            update_leak_attack(np.zeros(6), np.zeros(6), pairs, np.zeros(6, dtype=int), pooling="class")

    def test_deterministic(self, rng):
        pairs = synthetic_pairs(rng, 16, 50, np.array([1.0, -0.5]), np.zeros(2))
        labels = np.r_[np.ones(25, dtype=int), np.zeros(25, dtype=int)]
        phi_b, phi_u = targets_from(rng, 50, (np.array([1.0, -0.5]), np.zeros(2)), labels)
        a = update_leak_attack(phi_b, phi_u, pairs, labels, pooling="global")
        b = update_leak_attack(phi_b, phi_u, pairs, labels, pooling="global")
        assert np.array_equal(a.scores, b.scores)


class TestPairwiseDecisions:
    def test_strong_signal_yields_confident_trials(self, rng):
        pairs = synthetic_pairs(rng, 32, 40, np.array([3.0, 3.0]), np.zeros(2), cov_scale=0.5)
        member, nonmember = pairwise_decisions(pairs, threshold=0.0, pooling="global")
        member_rate = np.mean(np.concatenate(member))
        nonmember_rate = np.mean(np.concatenate(nonmember))
        assert member_rate > 0.9
        assert nonmember_rate < 0.1

    def test_null_signal_yields_coin_flips(self, rng):
        mu = np.array([0.5, 0.5])
        pairs = synthetic_pairs(rng, 32, 60, mu, mu)
        member, nonmember = pairwise_decisions(pairs, threshold=0.0, pooling="global")
        rate = np.mean(np.concatenate(member + nonmember))
        assert 0.3 < rate < 0.7

    def test_trial_counts_match_mask(self, rng):
        pairs = synthetic_pairs(rng, 16, 10, np.ones(2), np.zeros(2))
        member, nonmember = pairwise_decisions(pairs, pooling="global")
        for q in range(10):
            assert len(member[q]) == int(np.sum(pairs.mask[:, q] == MASK_FORGOTTEN))
            assert len(nonmember[q]) == int(np.sum(pairs.mask[:, q] == MASK_NEVER))
