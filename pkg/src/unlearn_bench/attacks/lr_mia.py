"""Loss-threshold membership inference via logistic regression.

The classic baseline attack: a one-feature logistic regression trained to
separate forget-set losses from nonmember losses. Scores are cross-fitted so
no query is scored by a model that saw it during fitting.
"""

from __future__ import annotations

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import StratifiedKFold

from ..errors import BenchError
from .results import AttackResult, hash_config


def lr_mia(
    forget_losses: np.ndarray,
    nonmember_losses: np.ndarray,
    folds: int = 5,
    seed: int = 0,
    query_indices: np.ndarray | None = None,
) -> AttackResult:
    """Attack scores are the cross-fitted predicted member probabilities.

    ``query_indices``, if given, must list the forget queries first and then
    the nonmember queries, matching the loss vectors.
    """
    forget_losses = np.asarray(forget_losses, dtype=np.float64)
    nonmember_losses = np.asarray(nonmember_losses, dtype=np.float64)
    if forget_losses.size == 0 or nonmember_losses.size == 0:
        raise BenchError("EMPTY_INPUT", "both loss lists must be nonempty")
    if not (np.all(np.isfinite(forget_losses)) and np.all(np.isfinite(nonmember_losses))):
        raise BenchError("NAN_INPUT", "losses contain NaN or infinity")
    if folds < 2:
        raise BenchError("BAD_SIZES", f"need folds >= 2, got {folds}")
    if folds > min(forget_losses.size, nonmember_losses.size):
        raise BenchError("BAD_SIZES", "more folds than examples in the smaller class")

    x = np.concatenate([forget_losses, nonmember_losses]).reshape(-1, 1)
    y = np.concatenate(
        [np.ones(forget_losses.size, dtype=np.int64), np.zeros(nonmember_losses.size, dtype=np.int64)]
    )
    scores = np.zeros(len(y))
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    for train_idx, test_idx in splitter.split(x, y):
        clf = LogisticRegression(max_iter=1000)
        clf.fit(x[train_idx], y[train_idx])
        scores[test_idx] = clf.predict_proba(x[test_idx])[:, 1]

    if query_indices is None:
        query_indices = np.arange(len(y), dtype=np.int64)
    return AttackResult(
        attack_id="lr_mia",
        query_indices=np.asarray(query_indices, dtype=np.int64),
        scores=scores,
        labels=y,
        config_hash=hash_config({"attack": "lr_mia", "folds": folds, "seed": seed}),
    )
