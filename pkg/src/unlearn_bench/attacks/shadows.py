"""Shadow-model populations.

Single-model shadows (for offline LiRA) each train on an independent uniform
half of a candidate pool; the IN/OUT mask records which queries each shadow
saw. Shadow *pairs* (for the update-leakage attack) additionally run the
target unlearning algorithm on each shadow with an attacker-chosen forget
set sampled from the queries inside its training half, so that per query a
pair is one of

    FORGOTTEN  trained on the query, then asked to unlearn it
    NEVER      never trained on the query
    KEPT       trained on the query and kept it (excluded from fits)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..datasets import ImageDataset
from ..errors import BenchError
from ..models import ArchitectureSpec
from ..splits import index_set_hash
from ..training import Checkpoint, TrainConfig, phi_scores, train_model

MASK_NEVER = 0
MASK_FORGOTTEN = 1
MASK_KEPT = 2
# In single-model matrices the mask is 1 = IN (trained on), 0 = OUT.
MASK_OUT = 0
MASK_IN = 1


@dataclass
class ScoreMatrix:
    query_indices: np.ndarray  # (Q,) int64
    scores: np.ndarray  # (S, Q) float32 phi
    mask: np.ndarray  # (S, Q) uint8, 1 = IN
    provenance: dict

    def __post_init__(self):
        if self.scores.shape != self.mask.shape or self.scores.shape[1] != len(self.query_indices):
            raise BenchError("BAD_SIZES", "score matrix planes and mask must align")

    @property
    def n_shadows(self) -> int:
        return self.scores.shape[0]

    def select_queries(self, indices: np.ndarray) -> "ScoreMatrix":
        """Restrict to the given query indices, in the given order."""
        cols = _column_positions(self.query_indices, indices)
        return ScoreMatrix(
            query_indices=self.query_indices[cols],
            scores=self.scores[:, cols],
            mask=self.mask[:, cols],
            provenance=self.provenance,
        )


@dataclass
class PairedScoreMatrix:
    query_indices: np.ndarray  # (Q,) int64
    base_scores: np.ndarray  # (P, Q) float32 phi from the pre-unlearning shadow
    unlearned_scores: np.ndarray  # (P, Q) float32 phi from the unlearned shadow
    mask: np.ndarray  # (P, Q) uint8 in {NEVER, FORGOTTEN, KEPT}
    provenance: dict

    def __post_init__(self):
        shapes = {self.base_scores.shape, self.unlearned_scores.shape, self.mask.shape}
        if len(shapes) != 1 or self.base_scores.shape[1] != len(self.query_indices):
            raise BenchError("BAD_SIZES", "paired score planes and mask must align")

    @property
    def n_pairs(self) -> int:
        return self.base_scores.shape[0]

    def select_queries(self, indices: np.ndarray) -> "PairedScoreMatrix":
        cols = _column_positions(self.query_indices, indices)
        return PairedScoreMatrix(
            query_indices=self.query_indices[cols],
            base_scores=self.base_scores[:, cols],
            unlearned_scores=self.unlearned_scores[:, cols],
            mask=self.mask[:, cols],
            provenance=self.provenance,
        )


def _column_positions(have: np.ndarray, want: np.ndarray) -> np.ndarray:
    pos = {int(q): i for i, q in enumerate(have)}
    try:
        return np.array([pos[int(q)] for q in np.asarray(want)], dtype=np.int64)
    except KeyError as exc:
        raise BenchError("MISALIGNED_QUERIES", f"query {exc} not present in the score matrix")


def _half_split(pool: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return np.sort(rng.choice(pool, size=len(pool) // 2, replace=False))


def train_shadow_models(
    data: ImageDataset,
    arch: ArchitectureSpec,
    cfg: TrainConfig,
    n_shadows: int,
    seed: int,
    pool_indices: np.ndarray,
    query_indices: np.ndarray | None = None,
    keep_checkpoints: bool = False,
) -> tuple[list[Checkpoint], ScoreMatrix]:
    """Train ``n_shadows`` models, each on a random half of the pool.

    Every query is scored by every shadow; queries that are members of the
    shadow pool land IN roughly half the shadows. Queries outside the pool
    are OUT everywhere, which is fine for offline fits.
    """
    if n_shadows < 4:
        raise BenchError("TOO_FEW_SHADOWS", f"need at least 4 shadows, got {n_shadows}")
    pool = np.asarray(pool_indices, dtype=np.int64)
    queries = pool if query_indices is None else np.asarray(query_indices, dtype=np.int64)
    rng = np.random.default_rng(seed)
    shadow_seeds = rng.integers(0, 2**31 - 1, size=n_shadows)

    scores = np.zeros((n_shadows, len(queries)), dtype=np.float32)
    mask = np.zeros((n_shadows, len(queries)), dtype=np.uint8)
    half_hashes = []
    checkpoints: list[Checkpoint] = []
    for s in range(n_shadows):
        srng = np.random.default_rng(shadow_seeds[s])
        half = _half_split(pool, srng)
        ckpt = train_model(arch, data, half, _reseed(cfg, int(shadow_seeds[s])))
        scores[s] = phi_scores(ckpt, data, queries)
        mask[s] = np.isin(queries, half).astype(np.uint8)
        half_hashes.append(index_set_hash(half))
        if keep_checkpoints:
            checkpoints.append(ckpt)

    out_counts = np.sum(mask == MASK_OUT, axis=0)
    if np.any(out_counts < 2):
        raise BenchError(
            "TOO_FEW_SHADOWS",
            f"{int(np.sum(out_counts < 2))} queries have fewer than 2 OUT shadows",
        )
    provenance = {
        "kind": "shadow-singles",
        "seed": seed,
        "shadow_seeds": [int(s) for s in shadow_seeds],
        "half_hashes": half_hashes,
        "architecture": arch.tag(),
        "train_config": cfg.to_dict(),
    }
    return checkpoints, ScoreMatrix(
        query_indices=queries, scores=scores, mask=mask, provenance=provenance
    )


def build_shadow_pairs(
    data: ImageDataset,
    arch: ArchitectureSpec,
    cfg: TrainConfig,
    algorithm: str,
    params: dict,
    n_pairs: int,
    seed: int,
    pool_indices: np.ndarray,
    query_indices: np.ndarray,
    forget_size: int,
    proxy_indices: np.ndarray | None = None,
) -> PairedScoreMatrix:
    """Shadow pairs for the update-leakage attack, single algorithm."""
    return build_shadow_pairs_multi(
        data, arch, cfg, {algorithm: params}, n_pairs, seed, pool_indices,
        query_indices, forget_size, proxy_indices,
    )[algorithm]


def build_shadow_pairs_multi(
    data: ImageDataset,
    arch: ArchitectureSpec,
    cfg: TrainConfig,
    algorithms: dict[str, dict],
    n_pairs: int,
    seed: int,
    pool_indices: np.ndarray,
    query_indices: np.ndarray,
    forget_size: int,
    proxy_indices: np.ndarray | None = None,
) -> dict[str, PairedScoreMatrix]:
    """Shadow pairs for several unlearning algorithms at once.

    Each pair trains a base shadow on a random half of the pool, picks a
    forget set of up to ``forget_size`` queries from inside that half, and
    runs every requested algorithm to unlearn that same forget set. Sharing
    the base shadows across algorithms keeps the comparison apples to apples
    and saves most of the training cost.
    """
    from ..unlearn import UnlearnRequest, run_unlearning

    if n_pairs < 2:
        raise BenchError("TOO_FEW_SHADOWS", f"need at least 2 shadow pairs, got {n_pairs}")
    pool = np.asarray(pool_indices, dtype=np.int64)
    queries = np.asarray(query_indices, dtype=np.int64)
    rng = np.random.default_rng(seed)
    pair_seeds = rng.integers(0, 2**31 - 1, size=n_pairs)

    base_scores = np.zeros((n_pairs, len(queries)), dtype=np.float32)
    unl_scores = {a: np.zeros_like(base_scores) for a in algorithms}
    mask = np.full((n_pairs, len(queries)), MASK_NEVER, dtype=np.uint8)
    half_hashes = []
    for p in range(n_pairs):
        prng = np.random.default_rng(pair_seeds[p])
        half = _half_split(pool, prng)
        in_half = queries[np.isin(queries, half)]
        take = min(forget_size, len(in_half))
        if take == 0:
            raise BenchError("TOO_FEW_SHADOWS", f"pair {p} has no queries inside its half")
        forget = np.sort(prng.choice(in_half, size=take, replace=False))
        retain = np.setdiff1d(half, forget, assume_unique=True)

        base = train_model(arch, data, half, _reseed(cfg, int(pair_seeds[p])))
        base_scores[p] = phi_scores(base, data, queries)
        for algo, params in algorithms.items():
            req = UnlearnRequest(
                base=base, retain_indices=retain, forget_indices=forget,
                algorithm=algo, params=params,
            )
            unlearned, _ = run_unlearning(
                req, data, _reseed(cfg, int(pair_seeds[p]) ^ 0x5EED), proxy_indices=proxy_indices
            )
            unl_scores[algo][p] = phi_scores(unlearned, data, queries)
        mask[p, np.isin(queries, half)] = MASK_KEPT
        mask[p, np.isin(queries, forget)] = MASK_FORGOTTEN
        half_hashes.append(index_set_hash(half))

    out = {}
    for algo, params in algorithms.items():
        provenance = {
            "kind": "shadow-pairs",
            "algorithm": algo,
            "params": params,
            "seed": seed,
            "pair_seeds": [int(s) for s in pair_seeds],
            "half_hashes": half_hashes,
            "architecture": arch.tag(),
            "train_config": cfg.to_dict(),
            "forget_size": forget_size,
        }
        out[algo] = PairedScoreMatrix(
            query_indices=queries,
            base_scores=base_scores.copy(),
            unlearned_scores=unl_scores[algo],
            mask=mask.copy(),
            provenance=provenance,
        )
    return out


def _reseed(cfg: TrainConfig, seed: int) -> TrainConfig:
    from dataclasses import replace

    return replace(cfg, seed=seed)
