"""Selective synaptic dampening.

Parameter importances are diagonal Fisher approximations, the per-example
mean of squared loss gradients. A parameter is selected when its forget-set
importance is disproportionately high relative to its importance over the
current training data, and selected parameters are shrunk:

    theta_j <- theta_j * min(lam * imp_D_j / imp_Df_j, 1)   if imp_Df_j > alpha * imp_D_j
    theta_j <- theta_j                                      otherwise

The division is guarded by an additive 1e-12 floor on the forget importance.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from torch.func import functional_call, grad, vmap

from ..datasets import ImageDataset
from ..errors import BenchError
from ..training import StepCounter

IMP_FLOOR = 1e-12


def ssd_importances(
    model: nn.Module,
    data: ImageDataset,
    indices: np.ndarray,
    chunk_size: int = 256,
    counter: StepCounter | None = None,
) -> dict[str, torch.Tensor]:
    """Mean over examples of squared per-example loss gradients.

    Per-example gradients come from a vmapped functional call, so one chunk
    costs a single batched backward pass. Duplicated examples average out:
    importances over D + D equal importances over D.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if len(indices) == 0:
        raise BenchError("EMPTY_DATA", "cannot compute importances on an empty index set")
    params = {k: v.detach() for k, v in model.named_parameters()}
    buffers = {k: v.detach() for k, v in model.named_buffers()}

    def example_loss(p, xi, yi):
        out = functional_call(model, (p, buffers), (xi.unsqueeze(0),))
        return F.cross_entropy(out, yi.unsqueeze(0))

    grad_fn = vmap(grad(example_loss), in_dims=(None, 0, 0))
    sums = {k: torch.zeros_like(v) for k, v in params.items()}
    xs = torch.from_numpy(data.images[indices])
    ys = torch.from_numpy(data.labels[indices])
    for start in range(0, len(indices), chunk_size):
        g = grad_fn(params, xs[start : start + chunk_size], ys[start : start + chunk_size])
        for k in sums:
            sums[k] += (g[k] ** 2).sum(dim=0)
        if counter is not None:
            counter.gradient_steps += 1
            counter.forward_passes += 1
    return {k: v / len(indices) for k, v in sums.items()}


def ssd_dampen(
    theta: torch.Tensor,
    imp_d: torch.Tensor,
    imp_df: torch.Tensor,
    alpha: float,
    lam: float,
) -> torch.Tensor:
    """Apply the dampening rule elementwise; shapes must match exactly."""
    if not (theta.shape == imp_d.shape == imp_df.shape):
        raise BenchError("LENGTH_MISMATCH", "theta and importance tensors differ in shape")
    if alpha <= 0 or lam <= 0:
        raise BenchError("BAD_HYPERPARAMS", "ssd needs alpha > 0 and lam > 0")
    selected = imp_df > alpha * imp_d
    multiplier = torch.clamp(lam * imp_d / (imp_df + IMP_FLOOR), max=1.0)
    return torch.where(selected, theta * multiplier, theta)


def ssd_dampen_state(
    state: dict[str, torch.Tensor],
    imp_d: dict[str, torch.Tensor],
    imp_df: dict[str, torch.Tensor],
    alpha: float,
    lam: float,
) -> tuple[dict[str, torch.Tensor], int]:
    """Dampen a whole state dict; returns (new state, #entries modified)."""
    out = {}
    touched = 0
    for key, theta in state.items():
        if key in imp_d:
            new = ssd_dampen(theta, imp_d[key], imp_df[key], alpha, lam)
            touched += int((new != theta).sum().item())
            out[key] = new
        else:
            out[key] = theta.clone()
    return out, touched
