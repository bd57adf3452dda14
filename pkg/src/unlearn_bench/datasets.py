"""Dataset loading.

Datasets are plain in-memory arrays: images as float32 ``(N, C, H, W)`` and
integer labels ``(N,)``. Two loaders are built in:

* ``synthetic`` draws each class around a fixed random prototype pattern with
  additive Gaussian noise, which gives a classification task whose difficulty
  (and hence how much a model overfits) is controlled by the signal/noise
  ratio.
* ``cifar10`` reads the standard python pickle batches from a local
  directory. There is no download logic; point ``root`` at an existing copy.

Plans address a dataset by position, train/val portion first and the test
portion last, so ``cifar10`` exposes the official train split as indices
0..49999 and the test split as 50000..59999.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BenchError


@dataclass(frozen=True)
class ImageDataset:
    dataset_id: str
    images: np.ndarray  # (N, C, H, W) float32
    labels: np.ndarray  # (N,) int64

    def __post_init__(self):
        if self.images.ndim != 4 or len(self.labels) != len(self.images):
            raise BenchError("BAD_SIZES", "images must be (N, C, H, W) with matching labels")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])


def synthetic_dataset(
    n_examples: int,
    n_classes: int = 10,
    image_hw: int = 32,
    channels: int = 3,
    signal: float = 0.3,
    noise: float = 1.0,
    seed: int = 0,
    dataset_id: str | None = None,
) -> ImageDataset:
    """Class-prototype images with i.i.d. Gaussian pixel noise.

    Example i of class c is ``signal * prototype[c] + noise * eps_i``. Labels
    cycle through the classes so every class has within-one-example balance.
    """
    if n_examples <= 0 or n_classes < 2:
        raise BenchError("BAD_SIZES", "need n_examples > 0 and n_classes >= 2")
    rng = np.random.default_rng(seed)
    protos = rng.standard_normal((n_classes, channels, image_hw, image_hw), dtype=np.float32)
    labels = (np.arange(n_examples) % n_classes).astype(np.int64)
    eps = rng.standard_normal((n_examples, channels, image_hw, image_hw), dtype=np.float32)
    images = signal * protos[labels] + noise * eps
    name = dataset_id or f"synth{n_classes}-{n_examples}-s{signal}-n{noise}-{seed}"
    return ImageDataset(dataset_id=name, images=images.astype(np.float32), labels=labels)


# CIFAR-10 per-channel mean/std, the usual normalization constants.
_CIFAR_MEAN = np.array([0.4914, 0.4822, 0.4465], dtype=np.float32)
_CIFAR_STD = np.array([0.2470, 0.2435, 0.2616], dtype=np.float32)


def cifar10_dataset(root: str, dataset_id: str = "cifar10") -> ImageDataset:
    """Load CIFAR-10 from the extracted ``cifar-10-batches-py`` directory."""
    base = Path(root)
    if (base / "cifar-10-batches-py").is_dir():
        base = base / "cifar-10-batches-py"
    batches = [f"data_batch_{i}" for i in range(1, 6)] + ["test_batch"]
    images, labels = [], []
    for name in batches:
        path = base / name
        if not path.exists():
            raise BenchError("NOT_FOUND", f"missing CIFAR-10 batch {path}")
        with open(path, "rb") as fh:
            batch = pickle.load(fh, encoding="bytes")
        images.append(batch[b"data"].reshape(-1, 3, 32, 32).astype(np.float32) / 255.0)
        labels.append(np.asarray(batch[b"labels"], dtype=np.int64))
    x = np.concatenate(images)
    x = (x - _CIFAR_MEAN[None, :, None, None]) / _CIFAR_STD[None, :, None, None]
    return ImageDataset(dataset_id=dataset_id, images=x, labels=np.concatenate(labels))


def load_dataset(loader: str, params: dict) -> ImageDataset:
    """Build a dataset from a config section. ``loader`` names the recipe."""
    if loader == "synthetic":
        return synthetic_dataset(**params)
    if loader == "cifar10":
        return cifar10_dataset(**params)
    raise BenchError("UNKNOWN_LOADER", f"no dataset loader {loader!r}")
