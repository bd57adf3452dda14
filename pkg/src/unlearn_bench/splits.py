"""Deterministic dataset split plans.

A plan partitions a dataset's index range into train/val/test sets and fixes
the whole sequence of per-iteration forget sets up front, so that every
experiment consumes the exact same indices. Validation indices are carved out
of the train portion of the dataset; the trailing ``n_test`` indices are kept
as the test split (for CIFAR-style datasets this is the official test split
appended after the train images).

Forget sets are sampled uniformly without replacement from the train indices
that have not been forgotten by an earlier iteration, each of size
``floor(forget_fraction * n_train)``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import BenchError

PLAN_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SplitPlan:
    dataset_id: str
    train_indices: np.ndarray
    val_indices: np.ndarray
    test_indices: np.ndarray
    forget_sequence: tuple[np.ndarray, ...]
    forget_fraction: float
    seed: int
    schema_version: int = field(default=PLAN_SCHEMA_VERSION)

    @property
    def n_iterations(self) -> int:
        return len(self.forget_sequence)

    @property
    def plan_id(self) -> str:
        digest = hashlib.sha256(plan_to_json(self).encode()).hexdigest()
        return f"plan-{digest[:12]}"


def build_split_plan(
    dataset_id: str,
    n_train: int,
    n_val: int,
    n_test: int,
    forget_fraction: float,
    n_iterations: int,
    seed: int,
) -> SplitPlan:
    """Build a plan over indices ``0 .. n_train+n_val+n_test-1``.

    Train and validation indices are a seeded shuffle of the leading
    ``n_train + n_val`` indices; the trailing ``n_test`` indices form the test
    set. All index arrays are stored sorted so serialized plans hash
    deterministically.
    """
    for name, n in (("n_train", n_train), ("n_val", n_val), ("n_test", n_test)):
        if n <= 0:
            raise BenchError("BAD_SIZES", f"{name} must be positive, got {n}")
    if n_iterations < 0:
        raise BenchError("BAD_SIZES", f"n_iterations must be >= 0, got {n_iterations}")
    if not 0.0 < forget_fraction <= 1.0:
        raise BenchError("BAD_SIZES", f"forget_fraction must be in (0, 1], got {forget_fraction}")
    if forget_fraction * n_iterations > 1.0:
        raise BenchError(
            "INFEASIBLE",
            f"cumulative forget demand {forget_fraction} x {n_iterations} exceeds the train set",
        )

    forget_size = int(np.floor(forget_fraction * n_train))
    if forget_size == 0 and n_iterations > 0:
        raise BenchError("BAD_SIZES", "forget_fraction yields empty forget sets")
    if forget_size * n_iterations > n_train:
        raise BenchError("INFEASIBLE", "cumulative forget demand exceeds |D_train|")

    rng = np.random.default_rng(seed)
    pool = rng.permutation(n_train + n_val)
    train = np.sort(pool[:n_train])
    val = np.sort(pool[n_train:])
    test = np.arange(n_train + n_val, n_train + n_val + n_test, dtype=np.int64)

    remaining = train.copy()
    forget_sequence = []
    for _ in range(n_iterations):
        picked = rng.choice(remaining, size=forget_size, replace=False)
        picked = np.sort(picked)
        forget_sequence.append(picked)
        remaining = np.setdiff1d(remaining, picked, assume_unique=True)

    return SplitPlan(
        dataset_id=dataset_id,
        train_indices=train.astype(np.int64),
        val_indices=val.astype(np.int64),
        test_indices=test,
        forget_sequence=tuple(f.astype(np.int64) for f in forget_sequence),
        forget_fraction=forget_fraction,
        seed=seed,
    )


def forget_set_for_iteration(plan: SplitPlan, i: int) -> np.ndarray:
    """The i-th forget set (sorted indices). Pure read."""
    if not 0 <= i < plan.n_iterations:
        raise BenchError(
            "OUT_OF_RANGE", f"iteration {i} out of range for a {plan.n_iterations}-iteration plan"
        )
    return plan.forget_sequence[i]


def retain_set_for_iteration(plan: SplitPlan, i: int) -> np.ndarray:
    """Train indices minus everything forgotten up to and including iteration i.

    Previously forgotten data never re-enters the retain set, so the set
    shrinks monotonically across iterations.
    """
    if not 0 <= i < plan.n_iterations:
        raise BenchError(
            "OUT_OF_RANGE", f"iteration {i} out of range for a {plan.n_iterations}-iteration plan"
        )
    forgotten = np.concatenate(plan.forget_sequence[: i + 1])
    return np.setdiff1d(plan.train_indices, forgotten, assume_unique=True)


def plan_to_json(plan: SplitPlan) -> str:
    doc = {
        "schema_version": plan.schema_version,
        "dataset_id": plan.dataset_id,
        "seed": plan.seed,
        "forget_fraction": plan.forget_fraction,
        "train_indices": plan.train_indices.tolist(),
        "val_indices": plan.val_indices.tolist(),
        "test_indices": plan.test_indices.tolist(),
        "forget_sequence": [f.tolist() for f in plan.forget_sequence],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def plan_from_json(text: str) -> SplitPlan:
    doc = json.loads(text)
    if doc.get("schema_version") != PLAN_SCHEMA_VERSION:
        raise BenchError("BAD_SCHEMA", f"unsupported plan schema {doc.get('schema_version')}")
    return SplitPlan(
        dataset_id=doc["dataset_id"],
        train_indices=np.asarray(doc["train_indices"], dtype=np.int64),
        val_indices=np.asarray(doc["val_indices"], dtype=np.int64),
        test_indices=np.asarray(doc["test_indices"], dtype=np.int64),
        forget_sequence=tuple(np.asarray(f, dtype=np.int64) for f in doc["forget_sequence"]),
        forget_fraction=doc["forget_fraction"],
        seed=doc["seed"],
    )


def index_set_hash(indices: np.ndarray) -> str:
    """Content hash of an index set; order-insensitive via sorting."""
    data = np.sort(np.asarray(indices, dtype=np.int64)).tobytes()
    return hashlib.sha256(data).hexdigest()
