import numpy as np
import pytest

from unlearn_bench.datasets import synthetic_dataset
from unlearn_bench.models import ArchitectureSpec
from unlearn_bench.splits import build_split_plan
from unlearn_bench.training import TrainConfig, train_model


@pytest.fixture(scope="session")
def tiny_data():
    """240 small images, 4 classes, easily separable."""
    return synthetic_dataset(
        n_examples=240, n_classes=4, image_hw=8, signal=0.8, noise=0.5, seed=11,
        dataset_id="tiny-240",
    )


@pytest.fixture(scope="session")
def tiny_arch(tiny_data):
    return ArchitectureSpec(family="mlp", input_shape=tiny_data.input_shape, n_classes=4)


@pytest.fixture(scope="session")
def tiny_cfg():
    return TrainConfig(epochs=4, batch_size=32, lr=0.05, weight_decay=1e-4, seed=7)


@pytest.fixture(scope="session")
def tiny_plan():
    # 160 train / 40 val / 40 test over the 240 tiny examples
    return build_split_plan("tiny-240", 160, 40, 40, 0.05, 3, seed=5)


@pytest.fixture(scope="session")
def tiny_base(tiny_data, tiny_arch, tiny_cfg, tiny_plan):
    return train_model(tiny_arch, tiny_data, tiny_plan.train_indices, tiny_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
