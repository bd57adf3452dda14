"""Unlearning interface: base model x (retain set, forget set) -> new model.

Eight algorithms share one entry point, :func:`run_unlearning`. Every run
returns the unlearned checkpoint (provenance parent = the base checkpoint,
except retrain which starts fresh) plus a cost report counting backward
passes, batch forward passes and the largest single-step parameter update.

Mechanisms are pinned as follows. Finetune continues SGD on the retain set.
RandLabel fine-tunes on the forget set under freshly drawn wrong labels,
interleaved 1:1 with retain batches. BadTeach distills forget examples
toward a randomly initialized teacher and everything else toward the base
model. SCRUB alternates divergence-maximizing passes on the forget set with
distill-plus-task passes on the retain set and rewinds to the round whose
forget error best matches a held-out reference. SSD dampens parameters whose
forget-set Fisher importance is disproportionate; SSD+FT fine-tunes
afterwards. Where these deviate from the originating methods the module
docstrings say so.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
import torch
import torch.nn.functional as F

from ..datasets import ImageDataset
from ..errors import BenchError
from ..models import parameter_count
from ..splits import index_set_hash
from ..training import Checkpoint, StepCounter, TrainConfig, evaluate_accuracy, train_loop, train_model
from .badteach import badteach_step
from .hyperparams import ALGORITHM_IDS, SCHEMAS, sample_params, schema_descriptor, validate_params
from .scrub import scrub_rewind, scrub_round
from .ssd import ssd_dampen, ssd_dampen_state, ssd_importances

__all__ = [
    "ALGORITHM_IDS",
    "SCHEMAS",
    "CostReport",
    "UnlearnRequest",
    "run_unlearning",
    "randlabel_relabel",
    "sample_params",
    "schema_descriptor",
    "validate_params",
    "ssd_importances",
    "ssd_dampen",
    "scrub_round",
    "scrub_rewind",
    "badteach_step",
]


@dataclass(frozen=True)
class CostReport:
    wall_seconds: float
    gradient_steps: int
    forward_passes: int
    peak_params_updated: int

    def __post_init__(self):
        if min(self.wall_seconds, self.gradient_steps, self.forward_passes, self.peak_params_updated) < 0:
            raise BenchError("BAD_SIZES", "cost counters must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "wall_seconds": self.wall_seconds,
            "gradient_steps": self.gradient_steps,
            "forward_passes": self.forward_passes,
            "peak_params_updated": self.peak_params_updated,
        }


@dataclass
class UnlearnRequest:
    base: Checkpoint
    retain_indices: np.ndarray
    forget_indices: np.ndarray
    algorithm: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.algorithm not in ALGORITHM_IDS:
            raise BenchError("UNKNOWN_ALGO", f"no unlearning algorithm {self.algorithm!r}")
        self.retain_indices = np.asarray(self.retain_indices, dtype=np.int64)
        self.forget_indices = np.asarray(self.forget_indices, dtype=np.int64)
        if np.intersect1d(self.retain_indices, self.forget_indices).size:
            raise BenchError("BAD_REQUEST", "retain and forget sets must be disjoint")


def run_unlearning(
    req: UnlearnRequest,
    data: ImageDataset,
    cfg: TrainConfig,
    proxy_indices: np.ndarray | None = None,
) -> tuple[Checkpoint, CostReport]:
    """Run one unlearning request; the base checkpoint is never modified.

    ``proxy_indices`` is a held-out set (disjoint from retain and forget)
    needed only by scrub_r for its rewind reference error.
    """
    params = validate_params(req.algorithm, req.params)
    runner = _RUNNERS[req.algorithm]
    counter = StepCounter()
    start = time.perf_counter()
    checkpoint, peak = runner(req, data, cfg, params, counter, proxy_indices)
    wall = time.perf_counter() - start
    cost = CostReport(
        wall_seconds=wall,
        gradient_steps=counter.gradient_steps,
        forward_passes=counter.forward_passes,
        peak_params_updated=peak,
    )
    return checkpoint, cost


def randlabel_relabel(
    labels: np.ndarray, n_classes: int, seed: int, exclude_true_class: bool = True
) -> np.ndarray:
    """Uniform random relabeling; by default the true class is excluded."""
    if n_classes < 2:
        raise BenchError("BAD_LABEL", "need at least 2 classes")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise BenchError("BAD_LABEL", "labels outside [0, n_classes)")
    rng = np.random.default_rng(seed)
    if not exclude_true_class:
        return rng.integers(0, n_classes, size=labels.size, dtype=np.int64)
    shift = rng.integers(1, n_classes, size=labels.size, dtype=np.int64)
    return (labels + shift) % n_classes


# --------------------------------------------------------------- runners


def _base_id(base: Checkpoint) -> str:
    return hashlib.sha256(base.encode()).hexdigest()


def _provenance(req, data_indices, epochs, cfg, params, parent):
    return {
        "architecture": req.base.arch.tag(),
        "data_hash": index_set_hash(data_indices),
        "epochs": epochs,
        "seed": cfg.seed,
        "parent": parent,
        "algorithm": req.algorithm,
        "params": params,
    }


def _run_identity(req, data, cfg, params, counter, proxy):
    ckpt = Checkpoint(
        arch=req.base.arch,
        state=req.base.clone_state(),
        provenance=_provenance(req, req.forget_indices, 0, cfg, params, _base_id(req.base)),
    )
    return ckpt, 0


def _run_retrain(req, data, cfg, params, counter, proxy):
    ckpt = train_model(req.base.arch, data, req.retain_indices, cfg, parent_id=None, counter=counter)
    ckpt.provenance["algorithm"] = "retrain"
    return ckpt, parameter_count(ckpt.module())


def _run_finetune(req, data, cfg, params, counter, proxy):
    model = req.base.module()
    ft_cfg = replace(cfg, lr=params["lr"], schedule="constant")
    train_loop(
        model, data, req.retain_indices, ft_cfg, epochs=params["epochs"],
        shuffle_seed=cfg.seed, counter=counter,
    )
    state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    prov = _provenance(req, req.retain_indices, params["epochs"], cfg, params, _base_id(req.base))
    return Checkpoint(arch=req.base.arch, state=state, provenance=prov), parameter_count(model)


def _run_randlabel(req, data, cfg, params, counter, proxy):
    if len(req.forget_indices) == 0 or len(req.retain_indices) == 0:
        raise BenchError("EMPTY_DATA", "randlabel needs nonempty retain and forget sets")
    model = req.base.module()
    wrong = randlabel_relabel(
        data.labels[req.forget_indices], data.n_classes, cfg.seed, params["exclude_true_class"]
    )
    xf = torch.from_numpy(data.images[req.forget_indices])
    yf = torch.from_numpy(wrong)
    xr = torch.from_numpy(data.images[req.retain_indices])
    yr = torch.from_numpy(data.labels[req.retain_indices])
    opt = torch.optim.SGD(
        model.parameters(), lr=params["lr"], momentum=cfg.momentum, weight_decay=cfg.weight_decay
    )
    gen = torch.Generator().manual_seed(cfg.seed)
    model.train()
    retain_iter = _batch_cycler(len(req.retain_indices), cfg.batch_size, gen)
    for _ in range(params["epochs"]):
        epoch_loss = 0.0
        order = torch.randperm(len(req.forget_indices), generator=gen)
        for start in range(0, len(order), cfg.batch_size):
            fb = order[start : start + cfg.batch_size]
            rb = next(retain_iter)
            for xb, yb in ((xf[fb], yf[fb]), (xr[rb], yr[rb])):
                opt.zero_grad()
                loss = F.cross_entropy(model(xb), yb)
                loss.backward()
                opt.step()
                counter.gradient_steps += 1
                counter.forward_passes += 1
                epoch_loss += loss.item()
        if not math.isfinite(epoch_loss):
            raise BenchError("DIVERGED", "randlabel loss became non-finite")
    model.eval()
    state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    touched = np.concatenate([req.forget_indices, req.retain_indices])
    prov = _provenance(req, touched, params["epochs"], cfg, params, _base_id(req.base))
    return Checkpoint(arch=req.base.arch, state=state, provenance=prov), parameter_count(model)


def _batch_cycler(n: int, batch_size: int, gen: torch.Generator):
    """Yields index batches forever, reshuffling after each pass."""
    while True:
        order = torch.randperm(n, generator=gen)
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            # drop ragged tails only when a full batch exists
            if len(batch) < batch_size and n >= batch_size:
                continue
            yield batch


def _run_badteach(req, data, cfg, params, counter, proxy):
    from ..models import build_model

    if len(req.forget_indices) == 0 or len(req.retain_indices) == 0:
        raise BenchError("EMPTY_DATA", "badteach needs nonempty retain and forget sets")
    good = req.base.module()
    bad = build_model(req.base.arch, init_seed=cfg.seed ^ 0xBAD)
    bad.eval()
    student = req.base.module()
    for teacher in (good, bad):
        for p in teacher.parameters():
            p.requires_grad_(False)
    union = np.concatenate([req.retain_indices, req.forget_indices])
    is_forget = np.r_[
        np.zeros(len(req.retain_indices), dtype=bool), np.ones(len(req.forget_indices), dtype=bool)
    ]
    xs = torch.from_numpy(data.images[union])
    mask_all = torch.from_numpy(is_forget)
    opt = torch.optim.SGD(student.parameters(), lr=params["lr"], momentum=cfg.momentum)
    gen = torch.Generator().manual_seed(cfg.seed)
    student.train()
    for _ in range(params["epochs"]):
        epoch_loss = 0.0
        order = torch.randperm(len(union), generator=gen)
        for start in range(0, len(union), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            epoch_loss += badteach_step(
                student, good, bad, xs[batch], mask_all[batch], params["temperature"], opt, counter
            )
        if not math.isfinite(epoch_loss):
            raise BenchError("DIVERGED", "badteach loss became non-finite")
    student.eval()
    state = {k: v.detach().clone() for k, v in student.state_dict().items()}
    prov = _provenance(req, union, params["epochs"], cfg, params, _base_id(req.base))
    return Checkpoint(arch=req.base.arch, state=state, provenance=prov), parameter_count(student)


def _run_scrub(req, data, cfg, params, counter, proxy):
    if proxy is None:
        raise BenchError(
            "MISSING_PROXY", "scrub_r needs a held-out proxy index set for rewind"
        )
    proxy = np.asarray(proxy, dtype=np.int64)
    if np.intersect1d(proxy, np.concatenate([req.retain_indices, req.forget_indices])).size:
        raise BenchError("MISSING_PROXY", "proxy set overlaps retain or forget data")
    teacher = req.base.module()
    student = req.base.module()
    for p in teacher.parameters():
        p.requires_grad_(False)
    gen = torch.Generator().manual_seed(cfg.seed)
    states: list[dict] = []
    forget_errors: list[float] = []
    for epoch in range(params["epochs"]):
        if epoch < params["msteps"]:
            scrub_round(
                student, teacher, data, req.retain_indices, req.forget_indices, "max",
                params["alpha"], params["gamma"], params["temperature"], params["lr"],
                cfg.batch_size, gen, counter,
            )
        scrub_round(
            student, teacher, data, req.retain_indices, req.forget_indices, "min",
            params["alpha"], params["gamma"], params["temperature"], params["lr"],
            cfg.batch_size, gen, counter,
        )
        state = {k: v.detach().clone() for k, v in student.state_dict().items()}
        snapshot = Checkpoint(arch=req.base.arch, state=state)
        forget_errors.append(1.0 - evaluate_accuracy(snapshot, data, req.forget_indices)["accuracy"])
        states.append(state)
    final = Checkpoint(arch=req.base.arch, state=states[-1])
    reference_error = 1.0 - evaluate_accuracy(final, data, proxy)["accuracy"]
    pick = scrub_rewind(forget_errors, reference_error)
    prov = _provenance(
        req, np.concatenate([req.retain_indices, req.forget_indices]),
        params["epochs"], cfg, params, _base_id(req.base),
    )
    prov["rewind_round"] = pick
    prov["reference_error"] = reference_error
    return Checkpoint(arch=req.base.arch, state=states[pick], provenance=prov), parameter_count(student)


def _run_ssd(req, data, cfg, params, counter, proxy):
    model = req.base.module()
    union = np.concatenate([req.retain_indices, req.forget_indices])
    imp_d = ssd_importances(model, data, union, counter=counter)
    imp_df = ssd_importances(model, data, req.forget_indices, counter=counter)
    new_state, touched = ssd_dampen_state(
        {k: v for k, v in model.state_dict().items()}, imp_d, imp_df,
        params["alpha"], params["lam"],
    )
    prov = _provenance(req, union, 0, cfg, params, _base_id(req.base))
    return Checkpoint(arch=req.base.arch, state=new_state, provenance=prov), touched


def _run_ssd_ft(req, data, cfg, params, counter, proxy):
    ssd_params = {"alpha": params["alpha"], "lam": params["lam"]}
    ssd_ckpt, touched = _run_ssd(
        replace_request(req, "ssd", ssd_params), data, cfg, ssd_params, counter, proxy
    )
    if params["ft_epochs"] == 0:
        return ssd_ckpt, touched
    model = ssd_ckpt.module()
    ft_cfg = replace(cfg, lr=params["ft_lr"], schedule="constant")
    train_loop(
        model, data, req.retain_indices, ft_cfg, epochs=params["ft_epochs"],
        shuffle_seed=cfg.seed, counter=counter,
    )
    state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    prov = _provenance(
        req, np.concatenate([req.retain_indices, req.forget_indices]),
        params["ft_epochs"], cfg, params, _base_id(req.base),
    )
    return Checkpoint(arch=req.base.arch, state=state, provenance=prov), max(touched, parameter_count(model))


def replace_request(req: UnlearnRequest, algorithm: str, params: dict) -> UnlearnRequest:
    return UnlearnRequest(
        base=req.base,
        retain_indices=req.retain_indices,
        forget_indices=req.forget_indices,
        algorithm=algorithm,
        params=params,
    )


_RUNNERS = {
    "identity": _run_identity,
    "retrain": _run_retrain,
    "finetune": _run_finetune,
    "randlabel": _run_randlabel,
    "badteach": _run_badteach,
    "scrub_r": _run_scrub,
    "ssd": _run_ssd,
    "ssd_ft": _run_ssd_ft,
}
