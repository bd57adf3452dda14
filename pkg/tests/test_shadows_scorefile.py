import struct

import numpy as np
import pytest

from oracles import binomial_band
from unlearn_bench.attacks import (
    MASK_FORGOTTEN,
    MASK_KEPT,
    MASK_NEVER,
    PairedScoreMatrix,
    ScoreMatrix,
    build_shadow_pairs_multi,
    read_score_file,
    train_shadow_models,
    write_score_file,
)
from unlearn_bench.errors import BenchError


@pytest.fixture(scope="module")
def shadow_setup(tiny_data, tiny_arch, tiny_cfg, tiny_plan):
    pool = tiny_plan.train_indices
    _, matrix = train_shadow_models(
        tiny_data, tiny_arch, tiny_cfg, n_shadows=12, seed=0, pool_indices=pool
    )
    return pool, matrix


class TestTrainShadowModels:
    def test_out_counts_in_binomial_band(self, shadow_setup):
        # each query lands OUT in about half the shadows
        _, matrix = shadow_setup
        out_counts = np.sum(matrix.mask == 0, axis=0)
        lo, hi = binomial_band(12, 0.5, sigmas=3)
        assert abs(np.mean(out_counts) - 6.0) < 1.0  # population average near S/2
        assert ((out_counts >= lo) & (out_counts <= hi)).mean() > 0.95

    def test_half_sizes_exact(self, shadow_setup):
        pool, matrix = shadow_setup
        in_counts = np.sum(matrix.mask == 1, axis=1)
        assert np.all(in_counts == len(pool) // 2)

    def test_scores_finite(self, shadow_setup):
        _, matrix = shadow_setup
        assert np.all(np.isfinite(matrix.scores))

    def test_shadow_floor(self, tiny_data, tiny_arch, tiny_cfg, tiny_plan):
        with pytest.raises(BenchError) as err:
            train_shadow_models(
                tiny_data, tiny_arch, tiny_cfg, n_shadows=2, seed=0,
                pool_indices=tiny_plan.train_indices,
            )
        assert err.value.code == "TOO_FEW_SHADOWS"

    def test_select_queries_reorders_columns(self, shadow_setup):
        pool, matrix = shadow_setup
        subset = matrix.query_indices[[5, 2, 9]]
        sub = matrix.select_queries(subset)
        assert np.array_equal(sub.query_indices, subset)
        assert np.array_equal(sub.scores[:, 0], matrix.scores[:, 5])

    def test_select_unknown_query(self, shadow_setup):
        _, matrix = shadow_setup
        with pytest.raises(BenchError) as err:
            matrix.select_queries(np.array([10**9]))
        assert err.value.code == "MISALIGNED_QUERIES"


class TestBuildShadowPairs:
    def test_mask_states_and_identity_planes(self, tiny_data, tiny_arch, tiny_cfg, tiny_plan):
        queries = tiny_plan.train_indices[:30]
        pairs = build_shadow_pairs_multi(
            tiny_data, tiny_arch, tiny_cfg, {"identity": {}}, n_pairs=4, seed=3,
            pool_indices=tiny_plan.train_indices, query_indices=queries, forget_size=10,
        )["identity"]
        assert set(np.unique(pairs.mask)) <= {MASK_NEVER, MASK_FORGOTTEN, MASK_KEPT}
        # identity leaves outputs untouched
        assert np.array_equal(pairs.base_scores, pairs.unlearned_scores)
        # forget sets have at most forget_size members per pair
        assert np.all(np.sum(pairs.mask == MASK_FORGOTTEN, axis=1) <= 10)

    def test_shared_bases_across_algorithms(self, tiny_data, tiny_arch, tiny_cfg, tiny_plan):
        queries = tiny_plan.train_indices[:20]
        out = build_shadow_pairs_multi(
            tiny_data, tiny_arch, tiny_cfg,
            {"identity": {}, "finetune": {"epochs": 1, "lr": 0.01}},
            n_pairs=4, seed=3, pool_indices=tiny_plan.train_indices,
            query_indices=queries, forget_size=8,
        )
        assert np.array_equal(out["identity"].base_scores, out["finetune"].base_scores)
        assert np.array_equal(out["identity"].mask, out["finetune"].mask)


class TestScoreFile:
    def test_single_round_trip(self, shadow_setup, tmp_path):
        _, matrix = shadow_setup
        path = tmp_path / "m.scm"
        write_score_file(path, matrix)
        back = read_score_file(path)
        assert isinstance(back, ScoreMatrix)
        assert np.array_equal(back.query_indices, matrix.query_indices)
        assert np.array_equal(back.scores, matrix.scores)
        assert np.array_equal(back.mask, matrix.mask)
        assert back.provenance == matrix.provenance

    def test_paired_round_trip(self, rng, tmp_path):
        pairs = PairedScoreMatrix(
            query_indices=np.arange(5, dtype=np.int64),
            base_scores=rng.normal(size=(3, 5)).astype(np.float32),
            unlearned_scores=rng.normal(size=(3, 5)).astype(np.float32),
            mask=rng.integers(0, 3, size=(3, 5)).astype(np.uint8),
            provenance={"kind": "t", "seed": 1},
        )
        path = tmp_path / "p.scm"
        write_score_file(path, pairs)
        back = read_score_file(path)
        assert isinstance(back, PairedScoreMatrix)
        assert np.array_equal(back.base_scores, pairs.base_scores)
        assert np.array_equal(back.unlearned_scores, pairs.unlearned_scores)
        assert np.array_equal(back.mask, pairs.mask)

    def test_header_layout_byte_exact(self, rng, tmp_path):
        # the documented layout: magic, u16 version, u16 planes, u32 S, u32 Q
        matrix = ScoreMatrix(
            query_indices=np.array([7, 9], dtype=np.int64),
            scores=np.array([[1.5, -2.0], [0.25, 4.0], [0.0, 1.0]], dtype=np.float32),
            mask=np.array([[1, 0], [0, 1], [0, 0]], dtype=np.uint8),
            provenance={},
        )
        path = tmp_path / "h.scm"
        write_score_file(path, matrix)
        blob = path.read_bytes()
        assert blob[:4] == b"UBSM"
        version, planes, s, q = struct.unpack("<HHII", blob[4:16])
        assert (version, planes, s, q) == (1, 1, 3, 2)
        assert np.frombuffer(blob, dtype="<i8", count=2, offset=16).tolist() == [7, 9]
        plane = np.frombuffer(blob, dtype="<f4", count=6, offset=32)
        assert plane.tolist() == [1.5, -2.0, 0.25, 4.0, 0.0, 1.0]
        assert blob[56:62] == bytes([1, 0, 0, 1, 0, 0])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.scm"
        path.write_bytes(b"NOPE" + b"\0" * 32)
        with pytest.raises(BenchError) as err:
            read_score_file(path)
        assert err.value.code == "BAD_BLOB"
