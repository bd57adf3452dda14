import copy

import numpy as np
import pytest
import torch
from torch import nn

from unlearn_bench.datasets import synthetic_dataset
from unlearn_bench.errors import BenchError
from unlearn_bench.models import ArchitectureSpec, build_model
from unlearn_bench.training import TrainConfig, evaluate_accuracy, train_model
from unlearn_bench.unlearn.badteach import badteach_step


def small_model(seed=0):
    torch.manual_seed(seed)
    return nn.Sequential(nn.Flatten(), nn.Linear(4, 3))


class TestBadteachStep:
    def test_pure_retain_batch_at_equality_is_stationary(self):
        good = small_model(1)
        bad = small_model(2)
        student = copy.deepcopy(good)
        opt = torch.optim.SGD(student.parameters(), lr=0.1)
        x = torch.randn(8, 1, 2, 2)
        before = {k: v.clone() for k, v in student.state_dict().items()}
        loss = badteach_step(student, good, bad, x, torch.zeros(8), 2.0, opt)
        assert loss == pytest.approx(0.0, abs=1e-7)
        for key, value in student.state_dict().items():
            assert torch.allclose(value, before[key], atol=1e-6)

    def test_empty_forget_mask_is_pure_distillation(self):
        good = small_model(3)
        bad = small_model(4)
        student = small_model(5)
        opt = torch.optim.SGD(student.parameters(), lr=0.05)
        x = torch.randn(16, 1, 2, 2)
        from unlearn_bench.unlearn.scrub import distill_kl

        with torch.no_grad():
            before = distill_kl(student(x), good(x), 2.0).item()
        for _ in range(20):
            badteach_step(student, good, bad, x, torch.zeros(16), 2.0, opt)
        with torch.no_grad():
            after = distill_kl(student(x), good(x), 2.0).item()
        assert after < before  # converging toward the good teacher only

    def test_shape_mismatch(self):
        student, good, bad = small_model(), small_model(1), small_model(2)
        opt = torch.optim.SGD(student.parameters(), lr=0.1)
        with pytest.raises(BenchError) as err:
            badteach_step(student, good, bad, torch.randn(4, 1, 2, 2), torch.zeros(3), 2.0, opt)
        assert err.value.code == "SHAPE_MISMATCH"

    def test_forget_only_training_collapses_toward_chance(self):
        # sustained bad-teacher pressure drives forget accuracy to ~1/C
        data = synthetic_dataset(n_examples=120, n_classes=4, image_hw=8, signal=0.8,
                                 noise=0.4, seed=9, dataset_id="bt")
        arch = ArchitectureSpec("mlp", data.input_shape, 4)
        cfg = TrainConfig(epochs=6, batch_size=32, lr=0.05, seed=2)
        base = train_model(arch, data, np.arange(120), cfg)
        forget = np.arange(40)
        start_acc = evaluate_accuracy(base, data, forget)["accuracy"]
        assert start_acc > 0.8  # trained model knows the forget set

        student = base.module()
        good = base.module()
        bad = build_model(arch, init_seed=77)
        opt = torch.optim.SGD(student.parameters(), lr=0.05, momentum=0.9)
        x = torch.from_numpy(data.images[forget])
        mask = torch.ones(len(forget))
        for _ in range(30):
            badteach_step(student, good, bad, x, mask, 2.0, opt)
        state = {k: v.detach().clone() for k, v in student.state_dict().items()}
        from unlearn_bench.training import Checkpoint

        after = evaluate_accuracy(Checkpoint(arch=arch, state=state), data, forget)["accuracy"]
        assert after < start_acc
        assert after <= 0.5  # heading for 1/C = 0.25
