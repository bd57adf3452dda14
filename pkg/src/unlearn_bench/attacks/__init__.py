from .results import AttackResult, attack_accuracy, hash_config
from .shadows import (
    MASK_FORGOTTEN,
    MASK_KEPT,
    MASK_NEVER,
    PairedScoreMatrix,
    ScoreMatrix,
    build_shadow_pairs,
    build_shadow_pairs_multi,
    train_shadow_models,
)
from .scorefile import read_score_file, write_score_file
from .lr_mia import lr_mia
from .lira import lira_offline
from .update_leak import pairwise_decisions, update_leak_attack

__all__ = [
    "AttackResult",
    "attack_accuracy",
    "hash_config",
    "ScoreMatrix",
    "PairedScoreMatrix",
    "MASK_NEVER",
    "MASK_FORGOTTEN",
    "MASK_KEPT",
    "train_shadow_models",
    "build_shadow_pairs",
    "build_shadow_pairs_multi",
    "read_score_file",
    "write_score_file",
    "lr_mia",
    "lira_offline",
    "update_leak_attack",
    "pairwise_decisions",
]
