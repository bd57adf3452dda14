"""Training, evaluation and per-example score extraction.

Checkpoints bundle weights with full provenance (architecture tag, hash of
the training index set, epochs, seeds, parent checkpoint). Weights serialize
through a deterministic little-endian codec so identical models hash to
identical checkpoint ids.

Scores follow the logit-scaled confidence construction: for true-class
probability p, phi = ln(p / (1 - p)) with p clamped away from {0, 1} so phi
stays finite and Gaussian fits over phi are well behaved.
"""

from __future__ import annotations

import json
import math
import struct
import time
from dataclasses import dataclass, field, replace

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .datasets import ImageDataset
from .errors import BenchError
from .models import ArchitectureSpec, build_model
from .splits import index_set_hash

PROB_CLAMP = 1e-6  # probability clamp before logit scaling


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 128
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    schedule: str = "cosine"  # "cosine" or "constant"
    augment: bool = False
    seed: int = 0
    deterministic: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise BenchError("BAD_SIZES", "epochs must be >= 0")
        if self.schedule not in ("cosine", "constant"):
            raise BenchError("BAD_SIZES", f"unknown schedule {self.schedule!r}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "schedule": self.schedule,
            "augment": self.augment,
            "seed": self.seed,
            "deterministic": self.deterministic,
        }


@dataclass
class Checkpoint:
    arch: ArchitectureSpec
    state: dict[str, torch.Tensor]
    provenance: dict = field(default_factory=dict)

    def module(self) -> nn.Module:
        model = build_model(self.arch)
        model.load_state_dict({k: v.clone() for k, v in self.state.items()})
        model.eval()
        return model

    def clone_state(self) -> dict[str, torch.Tensor]:
        return {k: v.clone() for k, v in self.state.items()}

    def encode(self) -> bytes:
        return encode_state_dict(self.state)


@dataclass(frozen=True)
class ScoreRecord:
    index: int
    loss: float
    prob: float
    phi: float


def set_deterministic(on: bool = True) -> None:
    torch.use_deterministic_algorithms(on)


def _child_seeds(seed: int, n: int) -> list[int]:
    ss = np.random.SeedSequence(seed)
    return [int(s.generate_state(1)[0]) for s in ss.spawn(n)]


def _augment_batch(x: torch.Tensor, gen: torch.Generator) -> torch.Tensor:
    """Random crop with 4px reflect padding plus horizontal flip."""
    n, _, h, w = x.shape
    padded = F.pad(x, (4, 4, 4, 4), mode="reflect")
    dx = torch.randint(0, 9, (n,), generator=gen)
    dy = torch.randint(0, 9, (n,), generator=gen)
    flip = torch.rand(n, generator=gen) < 0.5
    out = torch.empty_like(x)
    for i in range(n):
        crop = padded[i, :, dy[i] : dy[i] + h, dx[i] : dx[i] + w]
        out[i] = torch.flip(crop, dims=[2]) if flip[i] else crop
    return out


class StepCounter:
    """Tallies backward passes and batch forward passes for cost reports."""

    def __init__(self):
        self.gradient_steps = 0
        self.forward_passes = 0


def _make_optimizer(model: nn.Module, cfg: TrainConfig, epochs: int):
    opt = torch.optim.SGD(
        model.parameters(), lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay
    )
    if cfg.schedule == "cosine" and epochs > 0:
        sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=epochs)
    else:
        sched = None
    return opt, sched


def train_loop(
    model: nn.Module,
    data: ImageDataset,
    indices: np.ndarray,
    cfg: TrainConfig,
    epochs: int | None = None,
    shuffle_seed: int | None = None,
    counter: StepCounter | None = None,
) -> None:
    """SGD training of ``model`` in place on ``data[indices]``.

    Factored out so fine-tuning style unlearning algorithms can reuse the
    exact base recipe with their own epoch/lr settings.
    """
    epochs = cfg.epochs if epochs is None else epochs
    if epochs == 0:
        return
    indices = np.asarray(indices, dtype=np.int64)
    if len(indices) == 0:
        raise BenchError("EMPTY_DATA", "cannot train on an empty index set")
    if cfg.deterministic:
        set_deterministic(True)

    x_all = torch.from_numpy(data.images[indices])
    y_all = torch.from_numpy(data.labels[indices])
    gen = torch.Generator().manual_seed(shuffle_seed if shuffle_seed is not None else cfg.seed)
    opt, sched = _make_optimizer(model, cfg, epochs)
    model.train()
    n = len(indices)
    for _ in range(epochs):
        order = torch.randperm(n, generator=gen)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            xb, yb = x_all[batch], y_all[batch]
            if cfg.augment:
                xb = _augment_batch(xb, gen)
            opt.zero_grad()
            loss = F.cross_entropy(model(xb), yb)
            loss.backward()
            opt.step()
            epoch_loss += loss.item() * len(batch)
            if counter is not None:
                counter.gradient_steps += 1
                counter.forward_passes += 1
        if not math.isfinite(epoch_loss):
            raise BenchError("DIVERGED", "training loss became non-finite")
        if sched is not None:
            sched.step()
    model.eval()


def train_model(
    arch: ArchitectureSpec,
    data: ImageDataset,
    indices: np.ndarray,
    cfg: TrainConfig,
    parent_id: str | None = None,
    counter: StepCounter | None = None,
) -> Checkpoint:
    """Train a fresh model on ``data[indices]`` and return a checkpoint.

    RNG use is split into named child streams (init, shuffle) derived from
    ``cfg.seed``; the streams consumed are recorded in the provenance.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if len(indices) == 0 and cfg.epochs > 0:
        raise BenchError("EMPTY_DATA", "cannot train on an empty index set")
    init_seed, shuffle_seed = _child_seeds(cfg.seed, 2)
    if cfg.deterministic:
        set_deterministic(True)
    model = build_model(arch, init_seed=init_seed)
    train_loop(model, data, indices, cfg, shuffle_seed=shuffle_seed, counter=counter)
    provenance = {
        "architecture": arch.tag(),
        "data_hash": index_set_hash(indices),
        "n_examples": int(len(indices)),
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "rng_streams": {"init": init_seed, "shuffle": shuffle_seed},
        "train_config": cfg.to_dict(),
        "parent": parent_id,
    }
    state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    return Checkpoint(arch=arch, state=state, provenance=provenance)


def _forward_logits(
    model: nn.Module, data: ImageDataset, indices: np.ndarray, batch_size: int = 512
) -> torch.Tensor:
    xs = torch.from_numpy(data.images[np.asarray(indices, dtype=np.int64)])
    model.eval()
    outs = []
    with torch.no_grad():
        for start in range(0, len(xs), batch_size):
            outs.append(model(xs[start : start + batch_size]))
    return torch.cat(outs)


def evaluate_accuracy(checkpoint: Checkpoint, data: ImageDataset, indices: np.ndarray) -> dict:
    """Accuracy and mean cross-entropy on ``data[indices]``; no augmentation."""
    indices = np.asarray(indices, dtype=np.int64)
    if len(indices) == 0:
        raise BenchError("EMPTY_DATA", "cannot evaluate on an empty index set")
    model = checkpoint.module()
    logits = _forward_logits(model, data, indices)
    labels = torch.from_numpy(data.labels[indices])
    accuracy = (logits.argmax(dim=1) == labels).double().mean().item()
    mean_loss = F.cross_entropy(logits, labels).item()
    return {"accuracy": accuracy, "mean_loss": mean_loss}


def extract_scores(
    checkpoint: Checkpoint, data: ImageDataset, indices: np.ndarray
) -> list[ScoreRecord]:
    """Per-example loss, true-class probability and logit-scaled confidence.

    Records come back in input order. Probabilities are clamped to
    ``[PROB_CLAMP, 1 - PROB_CLAMP]`` and loss is reported as ``-ln(p)`` of the
    clamped probability, so loss and phi always agree.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if len(indices) == 0:
        raise BenchError("EMPTY_DATA", "cannot score an empty index set")
    model = checkpoint.module()
    logits = _forward_logits(model, data, indices).double()
    probs = F.softmax(logits, dim=1).numpy()
    true_p = probs[np.arange(len(indices)), data.labels[indices]]
    p = np.clip(true_p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = -np.log(p)
    phi = np.log(p / (1.0 - p))
    return [
        ScoreRecord(index=int(i), loss=float(l), prob=float(pi), phi=float(f))
        for i, l, pi, f in zip(indices, loss, p, phi)
    ]


def phi_scores(checkpoint: Checkpoint, data: ImageDataset, indices: np.ndarray) -> np.ndarray:
    """Vector of phi values only, for attack plumbing."""
    return np.array([r.phi for r in extract_scores(checkpoint, data, indices)])


def loss_scores(checkpoint: Checkpoint, data: ImageDataset, indices: np.ndarray) -> np.ndarray:
    return np.array([r.loss for r in extract_scores(checkpoint, data, indices)])


# ------------------------------------------------------------ weight codec

_CODEC_MAGIC = b"UBWT"
_CODEC_VERSION = 1
_DTYPES = {"float32": np.float32, "float64": np.float64, "int64": np.int64}


def encode_state_dict(state: dict[str, torch.Tensor]) -> bytes:
    """Deterministic byte encoding: sorted keys, JSON header, raw LE arrays."""
    entries = []
    payload = bytearray()
    for key in sorted(state):
        arr = state[key].detach().cpu().numpy()
        dtype = str(arr.dtype)
        if dtype not in _DTYPES:
            raise BenchError("BAD_DTYPE", f"unsupported tensor dtype {dtype} for {key}")
        raw = np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes()
        entries.append({"name": key, "dtype": dtype, "shape": list(arr.shape)})
        payload.extend(raw)
    header = json.dumps(entries, sort_keys=True, separators=(",", ":")).encode()
    return _CODEC_MAGIC + struct.pack("<HI", _CODEC_VERSION, len(header)) + header + bytes(payload)


def decode_state_dict(blob: bytes) -> dict[str, torch.Tensor]:
    if blob[:4] != _CODEC_MAGIC:
        raise BenchError("BAD_BLOB", "not a weight blob (bad magic)")
    version, header_len = struct.unpack("<HI", blob[4:10])
    if version != _CODEC_VERSION:
        raise BenchError("BAD_BLOB", f"unsupported weight codec version {version}")
    entries = json.loads(blob[10 : 10 + header_len].decode())
    offset = 10 + header_len
    state = {}
    for entry in entries:
        dtype = np.dtype(_DTYPES[entry["dtype"]]).newbyteorder("<")
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = count * dtype.itemsize
        arr = np.frombuffer(blob[offset : offset + nbytes], dtype=dtype).reshape(entry["shape"])
        state[entry["name"]] = torch.from_numpy(arr.astype(entry["dtype"], copy=True))
        offset += nbytes
    return state


def register(store, checkpoint: Checkpoint) -> str:
    """Serialize and register a checkpoint; returns its content-hash id."""
    cid = store.register_checkpoint(checkpoint.encode(), checkpoint.provenance)
    checkpoint.provenance = dict(checkpoint.provenance, checkpoint_id=cid)
    return cid


def load(store, checkpoint_id: str, arch: ArchitectureSpec) -> Checkpoint:
    blob = store.load_checkpoint(checkpoint_id)
    provenances = store.checkpoint_provenances(checkpoint_id)
    return Checkpoint(arch=arch, state=decode_state_dict(blob), provenance=provenances[0])
