import numpy as np
import pytest
import scipy.stats
import torch

from unlearn_bench.errors import BenchError
from unlearn_bench.splits import forget_set_for_iteration, retain_set_for_iteration
from unlearn_bench.training import TrainConfig, evaluate_accuracy, train_model
from unlearn_bench.unlearn import (
    ALGORITHM_IDS,
    UnlearnRequest,
    randlabel_relabel,
    run_unlearning,
    sample_params,
    schema_descriptor,
    validate_params,
)


@pytest.fixture(scope="module")
def split(tiny_plan):
    return retain_set_for_iteration(tiny_plan, 0), forget_set_for_iteration(tiny_plan, 0)


def make_request(base, split, algorithm, params=None):
    retain, forget = split
    return UnlearnRequest(
        base=base, retain_indices=retain, forget_indices=forget,
        algorithm=algorithm, params=params or {},
    )


class TestRequestValidation:
    def test_unknown_algorithm(self, tiny_base, split):
        with pytest.raises(BenchError) as err:
            make_request(tiny_base, split, "foo")
        assert err.value.code == "UNKNOWN_ALGO"

    def test_overlapping_sets_rejected(self, tiny_base):
        with pytest.raises(BenchError) as err:
            UnlearnRequest(
                base=tiny_base, retain_indices=np.array([1, 2, 3]),
                forget_indices=np.array([3, 4]), algorithm="identity",
            )
        assert err.value.code == "BAD_REQUEST"

    def test_unknown_hyperparameter_key(self, tiny_base, tiny_data, tiny_cfg, split):
        req = make_request(tiny_base, split, "finetune", {"epochs": 1, "nope": 2})
        with pytest.raises(BenchError) as err:
            run_unlearning(req, tiny_data, tiny_cfg)
        assert err.value.code == "BAD_HYPERPARAMS"

    def test_out_of_range_value(self):
        with pytest.raises(BenchError) as err:
            validate_params("finetune", {"lr": 5.0})
        assert err.value.code == "BAD_HYPERPARAMS"

    def test_scrub_msteps_bounded_by_epochs(self):
        with pytest.raises(BenchError):
            validate_params("scrub_r", {"msteps": 4, "epochs": 2})

    def test_schema_descriptor_machine_readable(self):
        desc = schema_descriptor()
        assert set(desc) == set(ALGORITHM_IDS)
        assert {p["name"] for p in desc["ssd"]} == {"alpha", "lam"}
        import json

        json.dumps(desc)  # serializable

    def test_sampling_respects_ranges(self, rng):
        for _ in range(50):
            p = sample_params("finetune", rng, {"epochs": [2, 3]})
            assert 2 <= p["epochs"] <= 3
            assert 1e-4 <= p["lr"] <= 0.1
        with pytest.raises(BenchError) as err:
            sample_params("finetune", rng, {"epochs": [5, 2]})
        assert err.value.code == "EMPTY_RANGE"


class TestIdentity:
    def test_bitwise_identity_and_zero_cost(self, tiny_base, tiny_data, tiny_cfg, split):
        model, cost = run_unlearning(make_request(tiny_base, split, "identity"), tiny_data, tiny_cfg)
        for key in tiny_base.state:
            assert torch.equal(model.state[key], tiny_base.state[key])
        assert cost.gradient_steps == 0
        assert cost.peak_params_updated == 0

    def test_base_checkpoint_unmodified(self, tiny_base, tiny_data, tiny_cfg, split):
        before = {k: v.clone() for k, v in tiny_base.state.items()}
        run_unlearning(make_request(tiny_base, split, "finetune", {"epochs": 1}), tiny_data, tiny_cfg)
        for key in before:
            assert torch.equal(tiny_base.state[key], before[key])


class TestRetrain:
    def test_matches_independent_retraining(self, tiny_base, tiny_data, tiny_arch, tiny_cfg, split):
        retain, _ = split
        model, _ = run_unlearning(make_request(tiny_base, split, "retrain"), tiny_data, tiny_cfg)
        oracle = train_model(tiny_arch, tiny_data, retain, tiny_cfg)
        for key in oracle.state:
            assert torch.equal(model.state[key], oracle.state[key])
        assert model.provenance["parent"] is None
        assert model.provenance["data_hash"] == oracle.provenance["data_hash"]


class TestFinetune:
    def test_zero_epochs_is_identity(self, tiny_base, tiny_data, tiny_cfg, split):
        model, cost = run_unlearning(
            make_request(tiny_base, split, "finetune", {"epochs": 0}), tiny_data, tiny_cfg
        )
        for key in tiny_base.state:
            assert torch.equal(model.state[key], tiny_base.state[key])
        assert cost.gradient_steps == 0

    def test_parent_chain(self, tiny_base, tiny_data, tiny_cfg, split):
        model, _ = run_unlearning(
            make_request(tiny_base, split, "finetune", {"epochs": 1}), tiny_data, tiny_cfg
        )
        assert model.provenance["parent"] is not None
        assert model.provenance["algorithm"] == "finetune"


class TestRandlabel:
    def test_two_classes_always_flip(self):
        labels = np.array([0, 1, 0, 1, 1])
        out = randlabel_relabel(labels, 2, seed=5)
        assert np.array_equal(out, 1 - labels)

    def test_deterministic(self):
        labels = np.arange(100) % 10
        assert np.array_equal(randlabel_relabel(labels, 10, 3), randlabel_relabel(labels, 10, 3))

    def test_never_true_class(self):
        labels = np.arange(10000) % 10
        out = randlabel_relabel(labels, 10, seed=0)
        assert not np.any(out == labels)

    def test_uniform_over_wrong_classes_chi2(self):
        # 10k relabels of a single class: 9 wrong classes each ~1/9
        labels = np.full(10000, 3, dtype=np.int64)
        out = randlabel_relabel(labels, 10, seed=0)
        counts = np.bincount(out, minlength=10)
        assert counts[3] == 0
        wrong = np.delete(counts, 3)
        _, p = scipy.stats.chisquare(wrong)
        assert p > 0.01

    def test_uniform_over_all_switch(self):
        labels = np.full(2000, 1, dtype=np.int64)
        out = randlabel_relabel(labels, 4, seed=2, exclude_true_class=False)
        assert np.any(out == 1)  # true class reachable when the switch is off

    def test_bad_label_rejected(self):
        with pytest.raises(BenchError) as err:
            randlabel_relabel(np.array([0, 7]), 4, seed=0)
        assert err.value.code == "BAD_LABEL"

    def test_runner_executes(self, tiny_base, tiny_data, tiny_cfg, split):
        model, cost = run_unlearning(
            make_request(tiny_base, split, "randlabel", {"epochs": 1, "lr": 0.01}),
            tiny_data, tiny_cfg,
        )
        assert cost.gradient_steps > 0
        # interleaving doubles the forget-batch step count
        retain, forget = split
        per_epoch = int(np.ceil(len(forget) / tiny_cfg.batch_size))
        assert cost.gradient_steps == 2 * per_epoch


class TestCostOrdering:
    def test_default_config_ordering(self, tiny_data, tiny_arch, tiny_plan):
        # identity = 0 < ssd < finetune < retrain at default hyperparameters
        cfg = TrainConfig(epochs=30, batch_size=32, lr=0.05, seed=3)
        base = train_model(tiny_arch, tiny_data, tiny_plan.train_indices, cfg)
        retain = retain_set_for_iteration(tiny_plan, 0)
        forget = forget_set_for_iteration(tiny_plan, 0)
        steps = {}
        for algo in ("identity", "ssd", "finetune", "retrain"):
            req = UnlearnRequest(
                base=base, retain_indices=retain, forget_indices=forget,
                algorithm=algo, params={},
            )
            _, cost = run_unlearning(req, tiny_data, cfg)
            steps[algo] = cost.gradient_steps
        assert steps["identity"] == 0
        assert 0 < steps["ssd"] < steps["finetune"] < steps["retrain"]

    def test_wall_clock_positive(self, tiny_base, tiny_data, tiny_cfg, split):
        _, cost = run_unlearning(
            make_request(tiny_base, split, "finetune", {"epochs": 1}), tiny_data, tiny_cfg
        )
        assert cost.wall_seconds > 0


class TestDeterminism:
    @pytest.mark.parametrize(
        "algorithm,params",
        [
            ("identity", {}),
            ("finetune", {"epochs": 1}),
            ("randlabel", {"epochs": 1}),
            ("badteach", {"epochs": 1}),
            ("scrub_r", {"msteps": 1, "epochs": 2}),
            ("ssd", {}),
            ("ssd_ft", {"ft_epochs": 1}),
            ("retrain", {}),
        ],
    )
    def test_rerun_bit_identical(self, tiny_base, tiny_data, tiny_cfg, tiny_plan, split, algorithm, params):
        kwargs = {"proxy_indices": tiny_plan.val_indices}
        a, _ = run_unlearning(make_request(tiny_base, split, algorithm, params), tiny_data, tiny_cfg, **kwargs)
        b, _ = run_unlearning(make_request(tiny_base, split, algorithm, params), tiny_data, tiny_cfg, **kwargs)
        for key in a.state:
            assert torch.equal(a.state[key], b.state[key]), key
