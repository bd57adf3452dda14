"""Bad-teacher unlearning step.

Two frozen teachers: the base model (good) and a randomly initialized net of
the same architecture (bad). Within a batch, forget-masked examples are
distilled toward the bad teacher and the rest toward the good teacher, so
the student sheds forget-set knowledge while being anchored elsewhere.
"""

from __future__ import annotations

import torch
from torch import nn

from ..errors import BenchError
from ..training import StepCounter
from .scrub import distill_kl


def badteach_step(
    student: nn.Module,
    good_teacher: nn.Module,
    bad_teacher: nn.Module,
    batch_x: torch.Tensor,
    forget_mask: torch.Tensor,
    temperature: float,
    optimizer: torch.optim.Optimizer,
    counter: StepCounter | None = None,
) -> float:
    """One optimizer step on a mixed batch; returns the loss value."""
    if len(forget_mask) != len(batch_x):
        raise BenchError("SHAPE_MISMATCH", "forget mask does not match the batch")
    forget_mask = forget_mask.bool()
    with torch.no_grad():
        good_logits = good_teacher(batch_x)
        bad_logits = bad_teacher(batch_x)
    s_logits = student(batch_x)
    terms = []
    if forget_mask.any():
        terms.append(
            forget_mask.float().mean()
            * distill_kl(s_logits[forget_mask], bad_logits[forget_mask], temperature)
        )
    if (~forget_mask).any():
        terms.append(
            (~forget_mask).float().mean()
            * distill_kl(s_logits[~forget_mask], good_logits[~forget_mask], temperature)
        )
    loss = sum(terms)
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    if counter is not None:
        counter.gradient_steps += 1
        counter.forward_passes += 3  # student + both teachers
    return float(loss.item())
