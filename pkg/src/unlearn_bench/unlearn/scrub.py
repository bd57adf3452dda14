"""SCRUB with rewind selection.

The student starts from the base model and alternates two phases against a
frozen copy of the base (the teacher): max rounds ascend the KL divergence
KL(student || teacher) on forget batches, min rounds descend

    alpha * KL(student || teacher) + gamma * cross_entropy

on retain batches. The first ``msteps`` epochs run a max round followed by a
min round; the remaining epochs are min-only. After every round the forget
error is recorded, and rewind picks the round whose forget error is closest
to a reference error measured on a held-out proxy set, breaking ties toward
the earliest round (guarding against over-forgetting that makes forgotten
examples conspicuous).
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..datasets import ImageDataset
from ..errors import BenchError
from ..training import StepCounter


def distill_kl(
    student_logits: torch.Tensor, teacher_logits: torch.Tensor, temperature: float
) -> torch.Tensor:
    """Mean KL(student || teacher) over the batch at the given temperature."""
    log_p = F.log_softmax(student_logits / temperature, dim=1)
    log_q = F.log_softmax(teacher_logits / temperature, dim=1)
    p = log_p.exp()
    return (p * (log_p - log_q)).sum(dim=1).mean() * (temperature**2)


def scrub_round(
    student: nn.Module,
    teacher: nn.Module,
    data: ImageDataset,
    retain_indices: np.ndarray,
    forget_indices: np.ndarray,
    phase: str,
    alpha: float,
    gamma: float,
    temperature: float,
    lr: float,
    batch_size: int,
    gen: torch.Generator,
    counter: StepCounter | None = None,
) -> nn.Module:
    """One pass over the phase's index set; mutates the student in place."""
    if phase not in ("max", "min"):
        raise BenchError("BAD_HYPERPARAMS", f"unknown scrub phase {phase!r}")
    indices = np.asarray(forget_indices if phase == "max" else retain_indices, dtype=np.int64)
    if len(indices) == 0:
        raise BenchError("EMPTY_DATA", f"scrub {phase} phase has no data")
    xs = torch.from_numpy(data.images[indices])
    ys = torch.from_numpy(data.labels[indices])
    opt = torch.optim.SGD(student.parameters(), lr=lr, momentum=0.9)
    teacher.eval()
    student.train()
    order = torch.randperm(len(indices), generator=gen)
    for start in range(0, len(indices), batch_size):
        batch = order[start : start + batch_size]
        xb, yb = xs[batch], ys[batch]
        with torch.no_grad():
            t_logits = teacher(xb)
        s_logits = student(xb)
        kl = distill_kl(s_logits, t_logits, temperature)
        if phase == "max":
            loss = -kl  # gradient ascent on the divergence
        else:
            loss = alpha * kl + gamma * F.cross_entropy(s_logits, yb)
        opt.zero_grad()
        loss.backward()
        opt.step()
        if counter is not None:
            counter.gradient_steps += 1
            counter.forward_passes += 2  # student + teacher
    student.eval()
    return student


def scrub_rewind(forget_errors: list[float], reference_error: float) -> int:
    """Index of the round whose forget error is closest to the reference.

    Ties break toward the earliest round.
    """
    if len(forget_errors) == 0:
        raise BenchError("EMPTY_TRAJECTORY", "no scrub rounds to rewind over")
    gaps = np.abs(np.asarray(forget_errors, dtype=np.float64) - reference_error)
    return int(np.argmin(gaps))
