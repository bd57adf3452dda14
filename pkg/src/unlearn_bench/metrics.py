"""Worst-case privacy metrics.

ROC curves are exact: every distinct score is used as a threshold (rule:
score >= threshold predicts member) and AUC is the tie-aware pair-counting
probability that a random member outscores a random nonmember. TPR at a
target FPR uses conservative step interpolation, never linear interpolation,
since interpolating between operating points overstates low-FPR power.

Per-example epsilon estimates convert repeated attack decisions into
(eps, delta)-style leakage numbers:

    eps = max( ln((1 - delta - FPR) / FNR), ln((1 - delta - FNR) / FPR), 0 )

where FPR/FNR are one-sided Clopper-Pearson upper confidence bounds on the
attack's per-example error rates (or raw point rates when ``confidence`` is
None). Using upper bounds on both error rates keeps the estimate a
defensible lower-confidence bound on leakage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.stats

from .errors import BenchError


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # +inf sentinel for the (0, 0) point
    auc: float


@dataclass(frozen=True)
class EpsilonEstimate:
    eps: np.ndarray
    delta: float
    confidence: float | None
    fpr_bounds: np.ndarray
    fnr_bounds: np.ndarray


@dataclass(frozen=True)
class WorstCaseReport:
    attack_id: str
    auc: float
    tpr_at_fpr: dict[float, float]
    max_eps: float | None
    eps_quantiles: dict[int, float] | None


def roc_from_scores(scores: Sequence[float], labels: Sequence[int]) -> RocCurve:
    """Exact ROC over all distinct-score thresholds, plus tie-aware AUC."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise BenchError("BAD_SIZES", "scores and labels must be equal-length vectors")
    if not np.all(np.isfinite(scores)):
        raise BenchError("NAN_INPUT", "scores contain NaN or infinity")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise BenchError("ONE_CLASS", "need both member and nonmember labels")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = (labels[order] == 1).astype(np.int64)
    tp = np.cumsum(sorted_pos)
    fp = np.cumsum(1 - sorted_pos)
    # Keep only the last entry of each run of equal scores: that is the
    # operating point of the rule "score >= threshold".
    last_of_run = np.r_[sorted_scores[1:] != sorted_scores[:-1], True]
    thresholds = np.r_[np.inf, sorted_scores[last_of_run]]
    tpr = np.r_[0.0, tp[last_of_run] / n_pos]
    fpr = np.r_[0.0, fp[last_of_run] / n_neg]

    # AUC by midrank pair counting: P(member > nonmember) + 0.5 P(tie).
    ranks = scipy.stats.rankdata(scores, method="average")
    pos_rank_sum = float(np.sum(ranks[labels == 1]))
    auc = (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds, auc=auc)


def tpr_at_fpr(curve: RocCurve, fpr_target: float) -> float:
    """TPR at the largest achieved FPR <= target (conservative step rule)."""
    if not 0.0 <= fpr_target <= 1.0:
        raise BenchError("BAD_SIZES", f"fpr_target must be in [0, 1], got {fpr_target}")
    # fpr is nondecreasing; rightmost index with fpr <= target always exists
    # because the curve starts at (0, 0).
    idx = np.searchsorted(curve.fpr, fpr_target, side="right") - 1
    eligible = curve.fpr <= curve.fpr[idx]
    return float(np.max(curve.tpr[eligible]))


def clopper_pearson_upper(k: int, n: int, confidence: float) -> float:
    """One-sided upper confidence bound for a binomial rate."""
    if k >= n:
        return 1.0
    return float(scipy.stats.beta.ppf(confidence, k + 1, n - k))


def estimate_epsilon(
    member_decisions: Sequence[np.ndarray],
    nonmember_decisions: Sequence[np.ndarray],
    delta: float,
    confidence: float | None = 0.95,
) -> EpsilonEstimate:
    """Per-example epsilon from repeated binary attack decisions.

    ``member_decisions[e]`` holds the attack's member/nonmember calls (1 =
    called member) over trials where example e really was a member;
    ``nonmember_decisions[e]`` over trials where it was not. Nonpositive log
    arguments clamp the corresponding branch to zero; a zero error-rate
    denominator is floored at 1/(2R) so the estimate stays finite and scales
    with the available evidence.
    """
    if not 0.0 <= delta < 1.0:
        raise BenchError("BAD_DELTA", f"delta must be in [0, 1), got {delta}")
    if len(member_decisions) != len(nonmember_decisions):
        raise BenchError("BAD_SIZES", "member/nonmember decision lists differ in length")
    if len(member_decisions) == 0:
        raise BenchError("EMPTY_TRIALS", "no examples given")

    eps, fprs, fnrs = [], [], []
    for mem, non in zip(member_decisions, nonmember_decisions):
        mem = np.asarray(mem)
        non = np.asarray(non)
        if mem.size == 0 or non.size == 0:
            raise BenchError("EMPTY_TRIALS", "every example needs at least one trial per side")
        fn_k = int(np.sum(mem == 0))
        fp_k = int(np.sum(non == 1))
        if confidence is None:
            fnr = fn_k / mem.size
            fpr = fp_k / non.size
        else:
            fnr = clopper_pearson_upper(fn_k, mem.size, confidence)
            fpr = clopper_pearson_upper(fp_k, non.size, confidence)
        fprs.append(fpr)
        fnrs.append(fnr)
        eps.append(max(_eps_branch(1.0 - delta - fpr, fnr, non.size), _eps_branch(1.0 - delta - fnr, fpr, mem.size), 0.0))
    return EpsilonEstimate(
        eps=np.asarray(eps),
        delta=delta,
        confidence=confidence,
        fpr_bounds=np.asarray(fprs),
        fnr_bounds=np.asarray(fnrs),
    )


def _eps_branch(numerator: float, denominator: float, n_trials: int) -> float:
    if numerator <= 0.0:
        return 0.0
    if denominator <= 0.0:
        denominator = 1.0 / (2.0 * n_trials)
    return float(np.log(numerator / denominator))


DEFAULT_FPR_GRID = (1e-3, 1e-2, 1e-1)


def worst_case_report(
    results: Sequence,
    eps: EpsilonEstimate | None,
    fpr_grid: Sequence[float] = DEFAULT_FPR_GRID,
) -> WorstCaseReport:
    """Aggregate attack results into worst-case numbers.

    With several results (e.g. repeated attack runs) every metric is the max
    across results; the epsilon distribution is reported as max plus
    50/90/99 quantiles so the maximum is never averaged away.
    """
    if len(results) == 0:
        raise BenchError("EMPTY_INPUT", "no attack results to report")
    aucs, tprs = [], {f: [] for f in fpr_grid}
    for result in results:
        curve = roc_from_scores(result.scores, result.labels)
        aucs.append(curve.auc)
        for f in fpr_grid:
            tprs[f].append(tpr_at_fpr(curve, f))
    ids = sorted({r.attack_id for r in results})
    max_eps = None
    quantiles = None
    if eps is not None:
        max_eps = float(np.max(eps.eps))
        quantiles = {q: float(np.quantile(eps.eps, q / 100.0)) for q in (50, 90, 99)}
    return WorstCaseReport(
        attack_id=",".join(ids),
        auc=float(np.max(aucs)),
        tpr_at_fpr={f: float(np.max(v)) for f, v in tprs.items()},
        max_eps=max_eps,
        eps_quantiles=quantiles,
    )
