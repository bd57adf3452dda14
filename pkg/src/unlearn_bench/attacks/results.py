"""Attack result record shared by all membership-inference attacks."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from ..errors import BenchError


@dataclass(frozen=True)
class AttackResult:
    attack_id: str
    query_indices: np.ndarray
    scores: np.ndarray  # higher = more likely member
    labels: np.ndarray  # ground truth, 1 = member
    config_hash: str

    def __post_init__(self):
        if not (len(self.query_indices) == len(self.scores) == len(self.labels)):
            raise BenchError("BAD_SIZES", "query/score/label lengths differ")
        if not np.all(np.isfinite(self.scores)):
            raise BenchError("NAN_INPUT", "attack scores contain NaN or infinity")
        if not np.all(np.isin(self.labels, (0, 1))):
            raise BenchError("BAD_SIZES", "labels must be 0/1")


def attack_accuracy(result: AttackResult, threshold: float = 0.5) -> float:
    """Fraction of queries classified correctly at a fixed score threshold."""
    calls = (result.scores > threshold).astype(np.int64)
    return float(np.mean(calls == result.labels))


def hash_config(config: dict) -> str:
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]
