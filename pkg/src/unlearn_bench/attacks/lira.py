"""Offline likelihood-ratio attack.

For each query q a Gaussian is fitted to the phi scores of the shadows that
never trained on q (the OUT population). The membership score is the
one-sided probability

    score(q) = NormalCDF(phi_target(q); mu_out(q), sigma_out(q))

so unusually high confidence relative to the OUT population reads as
membership, and the score is strictly increasing in phi_target. No new model
is trained per query, which is what makes the attack cheap enough to run
inside iterative benchmarks.

Desk-scale shadow counts make per-query variances noisy, so queries with
fewer than ``shrink_below`` OUT shadows have their variance shrunk toward
the pooled within-query OUT variance, with weight proportional to the OUT
count; sigma is floored at ``sigma_min``.
"""

from __future__ import annotations

import numpy as np
import scipy.stats

from ..errors import BenchError
from .results import AttackResult, hash_config
from .shadows import MASK_OUT, ScoreMatrix


def lira_offline(
    target_scores: np.ndarray,
    shadows: ScoreMatrix,
    member_labels: np.ndarray,
    sigma_min: float = 1e-3,
    shrink_below: int = 8,
) -> AttackResult:
    target_scores = np.asarray(target_scores, dtype=np.float64)
    if not np.all(np.isfinite(target_scores)):
        raise BenchError("NAN_INPUT", "target scores contain NaN or infinity")
    if len(target_scores) != len(shadows.query_indices):
        raise BenchError("MISALIGNED_QUERIES", "target scores do not align with the score matrix")

    out_mask = shadows.mask == MASK_OUT
    out_counts = out_mask.sum(axis=0)
    if np.any(out_counts < 2):
        raise BenchError(
            "TOO_FEW_SHADOWS",
            f"{int(np.sum(out_counts < 2))} queries have fewer than 2 OUT shadows",
        )

    scores64 = shadows.scores.astype(np.float64)
    mu, var = _out_moments(scores64, out_mask, out_counts)
    pooled_var = float(np.sum(var * out_counts) / np.sum(out_counts))
    weight = np.minimum(out_counts / shrink_below, 1.0)
    var_used = weight * var + (1.0 - weight) * pooled_var
    sigma = np.maximum(np.sqrt(var_used), sigma_min)

    member_scores = scipy.stats.norm.cdf((target_scores - mu) / sigma)
    return AttackResult(
        attack_id="lira_offline",
        query_indices=shadows.query_indices,
        scores=member_scores,
        labels=np.asarray(member_labels, dtype=np.int64),
        config_hash=hash_config(
            {"attack": "lira_offline", "sigma_min": sigma_min, "shrink_below": shrink_below}
        ),
    )


def lira_fit_parameters(
    shadows: ScoreMatrix, sigma_min: float = 1e-3, shrink_below: int = 8
) -> tuple[np.ndarray, np.ndarray]:
    """The (mu, sigma) per query actually used by :func:`lira_offline`."""
    out_mask = shadows.mask == MASK_OUT
    out_counts = out_mask.sum(axis=0)
    scores64 = shadows.scores.astype(np.float64)
    mu, var = _out_moments(scores64, out_mask, out_counts)
    pooled_var = float(np.sum(var * out_counts) / np.sum(out_counts))
    weight = np.minimum(out_counts / shrink_below, 1.0)
    sigma = np.maximum(np.sqrt(weight * var + (1.0 - weight) * pooled_var), sigma_min)
    return mu, sigma


def _out_moments(scores: np.ndarray, out_mask: np.ndarray, counts: np.ndarray):
    masked = np.where(out_mask, scores, 0.0)
    mu = masked.sum(axis=0) / counts
    var = np.where(out_mask, (scores - mu) ** 2, 0.0).sum(axis=0) / counts
    return mu, var
