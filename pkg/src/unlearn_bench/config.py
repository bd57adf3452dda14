"""Benchmark configuration.

One JSON file with sections {data, model, unlearn, attack, tune, report}
drives every CLI subcommand. Unknown sections or keys are rejected so typos
fail loudly. The store root resolves in priority order: CLI flag, the
BENCH_STORE environment variable, the config's "store" entry.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .errors import BenchError

DEFAULTS: dict = {
    "store": "./bench-store",
    "data": {
        "loader": "synthetic",
        "dataset_id": None,
        "params": {},
        "n_train": 8000,
        "n_val": 1000,
        "n_test": 1000,
        "forget_fraction": 0.01,
        "n_iterations": 10,
        "seed": 17,
    },
    "model": {
        "arch": "small-cnn",
        "epochs": 30,
        "batch_size": 128,
        "lr": 0.05,
        "momentum": 0.9,
        "weight_decay": 5e-4,
        "schedule": "cosine",
        "augment": False,
        "seed": 1234,
        "deterministic": True,
    },
    "unlearn": {
        "algo": "finetune",
        "params": {},
        "seed": 99,
    },
    "attack": {
        "n_shadows": 16,
        "shadow_seed": 5,
        "shadow_epochs": None,
        "n_pairs": 8,
        "pair_seed": 6,
        "nonmember_seed": 11,
        "folds": 5,
        "sigma_min": 1e-3,
        "shrink_below": 8,
        "cov_reg": 1e-6,
        "pooling": "class",
        "min_fit": 3,
        "decision_threshold": 0.0,
        "delta": None,
        "confidence": 0.95,
        "attack_every": 5,
        "noise_band": 0.02,
        "which": ["lr_mia", "lira_offline"],
    },
    "tune": {
        "trials": 100,
        "weight": 1.0,
        "seed": 23,
        "ranges": {},
    },
    "report": {
        "out_dir": "./reports",
        "fpr_grid": [1e-3, 1e-2, 1e-1],
    },
}


def load_config(path: str | os.PathLike | None, overrides: dict | None = None) -> dict:
    """Read, merge with defaults, and validate a config file."""
    merged = json.loads(json.dumps(DEFAULTS))  # deep copy
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise BenchError("NOT_FOUND", f"config file {p} does not exist")
        try:
            user = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise BenchError("BAD_CONFIG", f"config {p} is not valid JSON: {exc}") from exc
        _merge(merged, user, where="config")
    if overrides:
        _merge(merged, overrides, where="overrides")
    if os.environ.get("BENCH_STORE") and not (overrides or {}).get("store"):
        merged["store"] = os.environ["BENCH_STORE"]
    _validate(merged)
    return merged


def _merge(base: dict, update: dict, where: str, prefix: str = "") -> None:
    for key, value in update.items():
        if key not in base:
            raise BenchError("BAD_CONFIG", f"unknown {where} key {prefix}{key!r}")
        # leaf dicts like data.params and tune.ranges are free-form
        if isinstance(base[key], dict) and key not in ("params", "ranges"):
            if not isinstance(value, dict):
                raise BenchError("BAD_CONFIG", f"{prefix}{key} must be a section object")
            _merge(base[key], value, where, prefix=f"{prefix}{key}.")
        else:
            base[key] = value


def _validate(cfg: dict) -> None:
    data = cfg["data"]
    if data["loader"] == "synthetic" and not data["params"].get("n_examples"):
        total = data["n_train"] + data["n_val"] + data["n_test"]
        data["params"]["n_examples"] = total
    from .unlearn import ALGORITHM_IDS

    if cfg["unlearn"]["algo"] not in ALGORITHM_IDS:
        raise BenchError("UNKNOWN_ALGO", f"unlearn.algo {cfg['unlearn']['algo']!r} unknown")
    for attack in cfg["attack"]["which"]:
        if attack not in ("lr_mia", "lira_offline", "update_leak"):
            raise BenchError("BAD_CONFIG", f"unknown attack {attack!r} in attack.which")
