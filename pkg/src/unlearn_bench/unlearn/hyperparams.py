"""Hyperparameter schemas for the unlearning algorithms.

Each algorithm declares its tunable knobs with ranges and defaults. The
schema doubles as a machine-readable descriptor (``schema_descriptor``) so
the tuner can enumerate search ranges, and as the validator behind
``validate_params``: unknown keys, type errors and out-of-range values are
all rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from ..errors import BenchError


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str  # "int", "float" or "bool"
    lo: float | None = None
    hi: float | None = None
    log: bool = False
    default: Any = None


SCHEMAS: dict[str, tuple[ParamSpec, ...]] = {
    "identity": (),
    "retrain": (),
    "finetune": (
        # epochs=0 degenerates to identity, kept reachable for sanity checks
        ParamSpec("epochs", "int", 0, 8, default=5),
        ParamSpec("lr", "float", 1e-4, 0.1, log=True, default=0.01),
    ),
    "randlabel": (
        ParamSpec("epochs", "int", 1, 5, default=2),
        ParamSpec("lr", "float", 1e-4, 0.1, log=True, default=0.02),
        ParamSpec("exclude_true_class", "bool", default=True),
    ),
    "badteach": (
        ParamSpec("epochs", "int", 1, 5, default=2),
        ParamSpec("lr", "float", 1e-4, 0.1, log=True, default=0.02),
        ParamSpec("temperature", "float", 0.5, 8.0, log=True, default=2.0),
    ),
    "scrub_r": (
        ParamSpec("msteps", "int", 1, 4, default=2),
        ParamSpec("epochs", "int", 1, 8, default=4),
        ParamSpec("lr", "float", 1e-4, 0.05, log=True, default=0.005),
        ParamSpec("alpha", "float", 0.05, 2.0, log=True, default=0.5),
        ParamSpec("gamma", "float", 0.3, 3.0, default=1.0),
        ParamSpec("temperature", "float", 1.0, 8.0, log=True, default=2.0),
    ),
    "ssd": (
        ParamSpec("alpha", "float", 0.1, 100.0, log=True, default=10.0),
        ParamSpec("lam", "float", 0.01, 5.0, log=True, default=1.0),
    ),
    "ssd_ft": (
        ParamSpec("alpha", "float", 0.1, 100.0, log=True, default=10.0),
        ParamSpec("lam", "float", 0.01, 5.0, log=True, default=1.0),
        ParamSpec("ft_epochs", "int", 0, 5, default=2),
        ParamSpec("ft_lr", "float", 1e-4, 0.1, log=True, default=0.01),
    ),
}

ALGORITHM_IDS = tuple(SCHEMAS)


def validate_params(algorithm: str, params: dict | None) -> dict:
    """Fill defaults and reject unknown keys, wrong types, bad ranges."""
    if algorithm not in SCHEMAS:
        raise BenchError("UNKNOWN_ALGO", f"no unlearning algorithm {algorithm!r}")
    params = dict(params or {})
    schema = {spec.name: spec for spec in SCHEMAS[algorithm]}
    unknown = set(params) - set(schema)
    if unknown:
        raise BenchError("BAD_HYPERPARAMS", f"{algorithm}: unknown keys {sorted(unknown)}")
    out = {}
    for name, spec in schema.items():
        value = params.get(name, spec.default)
        out[name] = _check_value(algorithm, spec, value)
    if algorithm == "scrub_r" and out["msteps"] > out["epochs"]:
        raise BenchError("BAD_HYPERPARAMS", "scrub_r: msteps cannot exceed epochs")
    return out


def _check_value(algorithm: str, spec: ParamSpec, value):
    if spec.kind == "bool":
        if not isinstance(value, bool):
            raise BenchError("BAD_HYPERPARAMS", f"{algorithm}.{spec.name} must be a bool")
        return value
    if spec.kind == "int":
        if not isinstance(value, int) or isinstance(value, bool):
            raise BenchError("BAD_HYPERPARAMS", f"{algorithm}.{spec.name} must be an int")
    elif not isinstance(value, (int, float)) or isinstance(value, bool):
        raise BenchError("BAD_HYPERPARAMS", f"{algorithm}.{spec.name} must be a number")
    if spec.lo is not None and not spec.lo <= value <= spec.hi:
        raise BenchError(
            "BAD_HYPERPARAMS",
            f"{algorithm}.{spec.name}={value} outside [{spec.lo}, {spec.hi}]",
        )
    return value if spec.kind == "int" else float(value)


def schema_descriptor(algorithm: str | None = None) -> dict:
    """JSON-able description of the tunable parameter space."""
    algos = [algorithm] if algorithm else list(SCHEMAS)
    out = {}
    for algo in algos:
        if algo not in SCHEMAS:
            raise BenchError("UNKNOWN_ALGO", f"no unlearning algorithm {algo!r}")
        out[algo] = [
            {
                "name": s.name,
                "kind": s.kind,
                "lo": s.lo,
                "hi": s.hi,
                "log": s.log,
                "default": s.default,
            }
            for s in SCHEMAS[algo]
        ]
    return out


def sample_params(
    algorithm: str, rng: np.random.Generator, ranges: dict | None = None
) -> dict:
    """Draw one hyperparameter configuration for a tuning trial.

    ``ranges`` may narrow any numeric range as ``{name: [lo, hi]}``; an
    empty or inverted override raises EMPTY_RANGE.
    """
    if algorithm not in SCHEMAS:
        raise BenchError("UNKNOWN_ALGO", f"no unlearning algorithm {algorithm!r}")
    ranges = ranges or {}
    unknown = set(ranges) - {s.name for s in SCHEMAS[algorithm]}
    if unknown:
        raise BenchError("EMPTY_RANGE", f"{algorithm}: ranges for unknown keys {sorted(unknown)}")
    out = {}
    for spec in SCHEMAS[algorithm]:
        if spec.kind == "bool":
            out[spec.name] = bool(rng.integers(0, 2))
            continue
        lo, hi = spec.lo, spec.hi
        if spec.name in ranges:
            lo, hi = ranges[spec.name]
        if lo is None or hi is None or lo > hi:
            raise BenchError("EMPTY_RANGE", f"{algorithm}.{spec.name}: empty range [{lo}, {hi}]")
        if spec.kind == "int":
            out[spec.name] = int(rng.integers(int(lo), int(hi) + 1))
        elif spec.log:
            out[spec.name] = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        else:
            out[spec.name] = float(rng.uniform(lo, hi))
    if algorithm == "scrub_r":
        out["msteps"] = min(out["msteps"], out["epochs"])
    return out
