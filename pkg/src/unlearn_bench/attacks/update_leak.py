"""Update-leakage attack.

An adversary who saw the base model's output on a query and then sees the
unlearned model's output can test two hypotheses: the query was in the
forget set (FORGOTTEN) or it was never trained on (NEVER). Shadow pairs
provide samples of the joint (phi_base, phi_unlearned) behaviour under both
hypotheses; each is fitted with a bivariate Gaussian (MLE moments, covariance
regularized by +kappa*I) and the membership score is the log-likelihood
ratio

    score(q) = log p_FORGOTTEN(x_q) - log p_NEVER(x_q),  x_q = (phi_base, phi_unl)

Per-query fits need at least ``min_fit`` samples per hypothesis; below that
the fit pools samples across queries, either within the query's class or
globally, controlled by ``pooling``.
"""

from __future__ import annotations

import numpy as np

from ..errors import BenchError
from .results import AttackResult, hash_config
from .shadows import MASK_FORGOTTEN, MASK_NEVER, PairedScoreMatrix


def update_leak_attack(
    base_scores: np.ndarray,
    unlearned_scores: np.ndarray,
    shadow_pairs: PairedScoreMatrix,
    member_labels: np.ndarray,
    pooling: str = "class",
    class_labels: np.ndarray | None = None,
    cov_reg: float = 1e-6,
    min_fit: int = 3,
) -> AttackResult:
    base_scores = np.asarray(base_scores, dtype=np.float64)
    unlearned_scores = np.asarray(unlearned_scores, dtype=np.float64)
    if base_scores.shape != unlearned_scores.shape:
        raise BenchError("MISALIGNED_QUERIES", "base and unlearned score lists differ in length")
    if len(base_scores) != len(shadow_pairs.query_indices):
        raise BenchError("MISALIGNED_QUERIES", "target scores do not align with the shadow pairs")
    if not (np.all(np.isfinite(base_scores)) and np.all(np.isfinite(unlearned_scores))):
        raise BenchError("NAN_INPUT", "target scores contain NaN or infinity")
    fits = _FitTable(shadow_pairs, pooling, class_labels, cov_reg, min_fit)
    scores = np.zeros(len(base_scores))
    for q in range(len(base_scores)):
        x = np.array([base_scores[q], unlearned_scores[q]])
        forgotten = fits.fit(q, MASK_FORGOTTEN, exclude_pair=None)
        never = fits.fit(q, MASK_NEVER, exclude_pair=None)
        scores[q] = _log_pdf(x, *forgotten) - _log_pdf(x, *never)

    return AttackResult(
        attack_id="update_leak",
        query_indices=shadow_pairs.query_indices,
        scores=scores,
        labels=np.asarray(member_labels, dtype=np.int64),
        config_hash=hash_config(
            {"attack": "update_leak", "pooling": pooling, "cov_reg": cov_reg, "min_fit": min_fit}
        ),
    )


def pairwise_decisions(
    shadow_pairs: PairedScoreMatrix,
    threshold: float = 0.0,
    pooling: str = "class",
    class_labels: np.ndarray | None = None,
    cov_reg: float = 1e-6,
    min_fit: int = 3,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Leave-one-pair-out attack decisions, as repeated trials per query.

    Each shadow pair in turn plays the role of the target model: its
    (phi_base, phi_unlearned) point for query q is scored against fits built
    from the remaining pairs and thresholded. Trials where the pair had
    forgotten q populate the member side; NEVER trials the nonmember side.
    These per-example decision arrays feed epsilon estimation.
    """
    fits = _FitTable(shadow_pairs, pooling, class_labels, cov_reg, min_fit)
    n_queries = len(shadow_pairs.query_indices)
    member: list[list[int]] = [[] for _ in range(n_queries)]
    nonmember: list[list[int]] = [[] for _ in range(n_queries)]
    for p in range(shadow_pairs.n_pairs):
        for q in range(n_queries):
            state = shadow_pairs.mask[p, q]
            if state not in (MASK_FORGOTTEN, MASK_NEVER):
                continue
            x = np.array(
                [shadow_pairs.base_scores[p, q], shadow_pairs.unlearned_scores[p, q]],
                dtype=np.float64,
            )
            forgotten = fits.fit(q, MASK_FORGOTTEN, exclude_pair=p)
            never = fits.fit(q, MASK_NEVER, exclude_pair=p)
            call = int(_log_pdf(x, *forgotten) - _log_pdf(x, *never) > threshold)
            (member if state == MASK_FORGOTTEN else nonmember)[q].append(call)
    return (
        [np.asarray(m, dtype=np.int64) for m in member],
        [np.asarray(n, dtype=np.int64) for n in nonmember],
    )


class _FitTable:
    """Bivariate Gaussian fits with per-query or pooled sample selection.

    A query with fewer than ``min_fit`` samples under a hypothesis escalates
    through the tiers its pooling mode allows: "none" stays per-query,
    "class" may fall back to the query's class and then to all queries,
    "global" straight to all queries. Fits are cached keyed on the tier and
    the excluded pair, which keeps leave-one-pair-out evaluation cheap.
    """

    def __init__(
        self,
        pairs: PairedScoreMatrix,
        pooling: str,
        class_labels: np.ndarray | None,
        cov_reg: float,
        min_fit: int,
    ):
        n_queries = len(pairs.query_indices)
        if pooling == "class":
            if class_labels is None:
                raise BenchError("BAD_SIZES", "class pooling requires class_labels")
            if len(class_labels) != n_queries:
                raise BenchError("MISALIGNED_QUERIES", "class labels do not align with queries")
            self.groups = np.asarray(class_labels, dtype=np.int64)
        elif pooling in ("none", "global"):
            self.groups = None
        else:
            raise BenchError("BAD_SIZES", f"unknown pooling mode {pooling!r}")
        self.pooling = pooling
        self.pairs = pairs
        self.cov_reg = cov_reg
        self.min_fit = min_fit
        self.points = np.stack(
            [pairs.base_scores.astype(np.float64), pairs.unlearned_scores.astype(np.float64)],
            axis=-1,
        )  # (P, Q, 2)
        self._cache: dict = {}

    def fit(self, q: int, hypothesis: int, exclude_pair: int | None):
        tiers = [
            (("q", q, hypothesis, exclude_pair),
             lambda: self._samples_for_query(q, hypothesis, exclude_pair)),
        ]
        if self.pooling == "class":
            group = int(self.groups[q])
            tiers.append(
                (("g", group, hypothesis, exclude_pair),
                 lambda: self._samples_for_group(group, hypothesis, exclude_pair))
            )
        if self.pooling in ("class", "global"):
            tiers.append(
                (("all", hypothesis, exclude_pair),
                 lambda: self._samples_global(hypothesis, exclude_pair))
            )
        for key, samples in tiers:
            fit_key = ("fit",) + key
            if fit_key in self._cache:
                return self._cache[fit_key]
            points = samples()
            if len(points) >= self.min_fit:
                self._cache[fit_key] = _gaussian_fit(points, self.cov_reg)
                return self._cache[fit_key]
        raise BenchError(
            "TOO_FEW_SHADOWS",
            f"fewer than {self.min_fit} shadow-pair samples for hypothesis {hypothesis}",
        )

    def _samples_for_query(self, q: int, hypothesis: int, exclude_pair: int | None) -> np.ndarray:
        key = ("q", q, hypothesis, exclude_pair)
        if key not in self._cache:
            rows = self.pairs.mask[:, q] == hypothesis
            if exclude_pair is not None:
                rows = rows.copy()
                rows[exclude_pair] = False
            self._cache[key] = self.points[rows, q, :]
        return self._cache[key]

    def _samples_for_group(self, group: int, hypothesis: int, exclude_pair: int | None) -> np.ndarray:
        key = ("g", group, hypothesis, exclude_pair)
        if key not in self._cache:
            cols = self.groups == group
            sel = (self.pairs.mask == hypothesis) & cols[None, :]
            if exclude_pair is not None:
                sel = sel.copy()
                sel[exclude_pair, :] = False
            self._cache[key] = self.points[sel]
        return self._cache[key]

    def _samples_global(self, hypothesis: int, exclude_pair: int | None) -> np.ndarray:
        key = ("all", hypothesis, exclude_pair)
        if key not in self._cache:
            sel = self.pairs.mask == hypothesis
            if exclude_pair is not None:
                sel = sel.copy()
                sel[exclude_pair, :] = False
            self._cache[key] = self.points[sel]
        return self._cache[key]


def _gaussian_fit(samples: np.ndarray, cov_reg: float):
    mu = samples.mean(axis=0)
    centered = samples - mu
    cov = centered.T @ centered / len(samples) + cov_reg * np.eye(2)
    inv = np.linalg.inv(cov)
    _, logdet = np.linalg.slogdet(cov)
    return mu, inv, logdet


def _log_pdf(x: np.ndarray, mu: np.ndarray, cov_inv: np.ndarray, logdet: float) -> float:
    d = x - mu
    return float(-0.5 * (d @ cov_inv @ d + logdet + 2 * np.log(2 * np.pi)))
