import copy

import numpy as np
import pytest
import torch
from torch import nn

from unlearn_bench.datasets import synthetic_dataset
from unlearn_bench.errors import BenchError
from unlearn_bench.unlearn.scrub import distill_kl, scrub_rewind, scrub_round


@pytest.fixture(scope="module")
def kd_data():
    return synthetic_dataset(n_examples=60, n_classes=3, image_hw=2, channels=1, seed=4)


def small_model(seed=0):
    torch.manual_seed(seed)
    return nn.Sequential(nn.Flatten(), nn.Linear(4, 3))


class TestDistillKl:
    def test_zero_at_equality(self):
        logits = torch.randn(5, 3)
        assert distill_kl(logits, logits, 2.0).item() == pytest.approx(0.0, abs=1e-7)

    def test_gradient_zero_at_equality(self):
        teacher = small_model(1)
        student = copy.deepcopy(teacher)
        x = torch.randn(8, 1, 2, 2)
        kl = distill_kl(student(x), teacher(x).detach(), 2.0)
        kl.backward()
        for p in student.parameters():
            assert torch.allclose(p.grad, torch.zeros_like(p.grad), atol=1e-6)

    def test_positive_when_different(self):
        a = torch.randn(6, 3)
        b = torch.randn(6, 3)
        assert distill_kl(a, b, 1.0).item() > 0

    def test_max_phase_gradient_matches_finite_differences(self, kd_data):
        # criterion-4 oracle: KL gradient vs central differences, float64
        teacher = small_model(2).double()
        student = small_model(3).double()
        x = torch.from_numpy(kd_data.images[:10]).double()
        with torch.no_grad():
            t_logits = teacher(x)

        def kl_value(flat):
            w = torch.tensor(flat[:12].reshape(3, 4), dtype=torch.float64)
            b = torch.tensor(flat[12:], dtype=torch.float64)
            logits = torch.flatten(x, 1) @ w.T + b
            return distill_kl(logits, t_logits, 2.0).item()

        w0 = student[1].weight.detach().numpy().ravel()
        b0 = student[1].bias.detach().numpy()
        theta = np.concatenate([w0, b0])
        from oracles import finite_difference_grad

        fd = finite_difference_grad(kl_value, theta, h=1e-6)
        kl = distill_kl(student(x), t_logits, 2.0)
        kl.backward()
        got = np.concatenate(
            [student[1].weight.grad.numpy().ravel(), student[1].bias.grad.numpy()]
        )
        rel = np.abs(got - fd) / np.maximum(np.abs(fd), 1e-8)
        assert np.max(rel) < 1e-4


class TestScrubRound:
    def test_max_round_increases_forget_kl(self, kd_data):
        # ascent check: small steps on the forget set push KL up
        teacher = small_model(5)
        student = copy.deepcopy(teacher)
        with torch.no_grad():
            for p in student.parameters():
                p.add_(0.01 * torch.randn_like(p))
        forget = np.arange(20)
        x = torch.from_numpy(kd_data.images[forget])
        with torch.no_grad():
            before = distill_kl(student(x), teacher(x), 2.0).item()
        gen = torch.Generator().manual_seed(0)
        scrub_round(
            student, teacher, kd_data, np.arange(20, 50), forget, "max",
            alpha=0.5, gamma=1.0, temperature=2.0, lr=0.01, batch_size=10, gen=gen,
        )
        with torch.no_grad():
            after = distill_kl(student(x), teacher(x), 2.0).item()
        assert after > before

    def test_min_round_reduces_combined_objective(self, kd_data):
        teacher = small_model(6)
        student = small_model(7)
        retain = np.arange(20, 50)
        x = torch.from_numpy(kd_data.images[retain])
        y = torch.from_numpy(kd_data.labels[retain])
        with torch.no_grad():
            before = (
                0.5 * distill_kl(student(x), teacher(x), 2.0)
                + 1.0 * torch.nn.functional.cross_entropy(student(x), y)
            ).item()
        gen = torch.Generator().manual_seed(0)
        for _ in range(3):
            scrub_round(
                student, teacher, kd_data, retain, np.arange(20), "min",
                alpha=0.5, gamma=1.0, temperature=2.0, lr=0.05, batch_size=10, gen=gen,
            )
        with torch.no_grad():
            after = (
                0.5 * distill_kl(student(x), teacher(x), 2.0)
                + 1.0 * torch.nn.functional.cross_entropy(student(x), y)
            ).item()
        assert after < before

    def test_empty_phase_set(self, kd_data):
        student, teacher = small_model(1), small_model(2)
        gen = torch.Generator().manual_seed(0)
        with pytest.raises(BenchError) as err:
            scrub_round(
                student, teacher, kd_data, np.arange(5), np.array([], dtype=np.int64),
                "max", 0.5, 1.0, 2.0, 0.01, 8, gen,
            )
        assert err.value.code == "EMPTY_DATA"

    def test_unknown_phase(self, kd_data):
        with pytest.raises(BenchError):
            scrub_round(
                small_model(), small_model(), kd_data, np.arange(5), np.arange(5, 10),
                "sideways", 0.5, 1.0, 2.0, 0.01, 8, torch.Generator(),
            )


class TestScrubRewind:
    def test_selects_closest_to_reference(self):
        assert scrub_rewind([0.10, 0.40, 0.55], 0.50) == 2

    def test_single_round(self):
        assert scrub_rewind([0.3], 0.9) == 0

    def test_tie_breaks_earliest(self):
        assert scrub_rewind([0.4, 0.6], 0.5) == 0

    def test_empty_trajectory(self):
        with pytest.raises(BenchError) as err:
            scrub_rewind([], 0.5)
        assert err.value.code == "EMPTY_TRAJECTORY"


def test_scrub_runner_requires_proxy(tiny_base, tiny_data, tiny_cfg, tiny_plan):
    from unlearn_bench.splits import forget_set_for_iteration, retain_set_for_iteration
    from unlearn_bench.unlearn import UnlearnRequest, run_unlearning

    req = UnlearnRequest(
        base=tiny_base,
        retain_indices=retain_set_for_iteration(tiny_plan, 0),
        forget_indices=forget_set_for_iteration(tiny_plan, 0),
        algorithm="scrub_r",
        params={"msteps": 1, "epochs": 1},
    )
    with pytest.raises(BenchError) as err:
        run_unlearning(req, tiny_data, tiny_cfg, proxy_indices=None)
    assert err.value.code == "MISSING_PROXY"
    model, _ = run_unlearning(req, tiny_data, tiny_cfg, proxy_indices=tiny_plan.val_indices)
    assert model.provenance["rewind_round"] == 0
