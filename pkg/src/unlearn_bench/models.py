"""Model architectures.

Architectures are referenced by family tag so checkpoint provenance stays
comparable across runs. ``small-cnn`` (about 300k parameters, strided convs,
no batch norm) is the desk-scale default; ``resnet18-class`` is provided for
full-scale reproduction runs. ``linear`` and ``mlp`` exist mainly for fast
tests and finite-difference oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .errors import BenchError


@dataclass(frozen=True)
class ArchitectureSpec:
    family: str
    input_shape: tuple[int, int, int]  # (C, H, W)
    n_classes: int

    def __post_init__(self):
        if self.n_classes < 2:
            raise BenchError("BAD_SIZES", "n_classes must be >= 2")
        if self.family not in ARCHITECTURES:
            raise BenchError("UNKNOWN_ARCH", f"no architecture family {self.family!r}")

    def tag(self) -> str:
        c, h, w = self.input_shape
        return f"{self.family}/{c}x{h}x{w}/c{self.n_classes}"


def _small_cnn(spec: ArchitectureSpec) -> nn.Module:
    c, h, w = spec.input_shape
    if h % 8 or w % 8:
        raise BenchError("BAD_SIZES", "small-cnn needs height/width divisible by 8")
    return nn.Sequential(
        nn.Conv2d(c, 24, 3, stride=2, padding=1),
        nn.ReLU(),
        nn.Conv2d(24, 48, 3, stride=2, padding=1),
        nn.ReLU(),
        nn.Conv2d(48, 96, 3, stride=2, padding=1),
        nn.ReLU(),
        nn.Flatten(),
        nn.Linear(96 * (h // 8) * (w // 8), 160),
        nn.ReLU(),
        nn.Linear(160, spec.n_classes),
    )


def _mlp(spec: ArchitectureSpec) -> nn.Module:
    c, h, w = spec.input_shape
    return nn.Sequential(
        nn.Flatten(),
        nn.Linear(c * h * w, 64),
        nn.ReLU(),
        nn.Linear(64, spec.n_classes),
    )


def _linear(spec: ArchitectureSpec) -> nn.Module:
    c, h, w = spec.input_shape
    return nn.Sequential(nn.Flatten(), nn.Linear(c * h * w, spec.n_classes))


def _resnet18(spec: ArchitectureSpec) -> nn.Module:
    from torchvision.models import resnet18

    model = resnet18(weights=None, num_classes=spec.n_classes)
    # CIFAR-style stem: 3x3 conv, no max pool, so 32x32 inputs keep resolution.
    model.conv1 = nn.Conv2d(spec.input_shape[0], 64, 3, stride=1, padding=1, bias=False)
    model.maxpool = nn.Identity()
    return model


ARCHITECTURES = {
    "small-cnn": _small_cnn,
    "mlp": _mlp,
    "linear": _linear,
    "resnet18-class": _resnet18,
}


def build_model(spec: ArchitectureSpec, init_seed: int | None = None) -> nn.Module:
    """Instantiate the architecture, optionally with seeded initialization."""
    if init_seed is not None:
        torch.manual_seed(init_seed)
    return ARCHITECTURES[spec.family](spec)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
