"""End-to-end benchmark orchestration.

Ties the pieces together: iterative unlearning runs over a split plan,
hyperparameter search, the privacy evaluation bundle (baseline loss attack,
offline LiRA, update leakage with the do-no-harm verdict, per-example
epsilon), and report emission. Everything is keyed by deterministic run ids
so re-running a configuration reproduces the same artifacts.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .attacks import (
    AttackResult,
    MASK_FORGOTTEN,
    MASK_NEVER,
    PairedScoreMatrix,
    ScoreMatrix,
    attack_accuracy,
    build_shadow_pairs_multi,
    hash_config,
    lira_offline,
    lr_mia,
    pairwise_decisions,
    read_score_file,
    train_shadow_models,
    update_leak_attack,
    write_score_file,
)
from .datasets import ImageDataset
from .errors import BenchError
from .metrics import EpsilonEstimate, estimate_epsilon, roc_from_scores, tpr_at_fpr, worst_case_report
from .models import ArchitectureSpec
from .splits import SplitPlan, forget_set_for_iteration, retain_set_for_iteration
from .store import ExperimentStore
from .training import Checkpoint, TrainConfig, evaluate_accuracy, loss_scores, phi_scores, register
from .unlearn import CostReport, UnlearnRequest, run_unlearning, sample_params, validate_params


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    algorithm: str
    test_accuracy: float
    retain_accuracy: float
    forget_accuracy: float
    cost: CostReport
    checkpoint_id: str
    attack_summary: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "iteration": self.iteration,
            "algorithm": self.algorithm,
            "test_accuracy": self.test_accuracy,
            "retain_accuracy": self.retain_accuracy,
            "forget_accuracy": self.forget_accuracy,
            "cost": self.cost.to_dict(),
            "checkpoint_id": self.checkpoint_id,
        }
        if self.attack_summary is not None:
            out["attack_summary"] = self.attack_summary
        return out


@dataclass(frozen=True)
class TuneSpec:
    algorithm: str
    ranges: dict = field(default_factory=dict)
    trials: int = 100
    weight: float = 1.0
    seed: int = 23

    def __post_init__(self):
        if self.trials < 1:
            raise BenchError("BAD_SIZES", "trial count must be >= 1")


def run_id_for(plan: SplitPlan, algorithm: str, params: dict, model_seed: int, unlearn_seed: int) -> str:
    payload = json.dumps(
        {
            "plan": plan.plan_id,
            "algorithm": algorithm,
            "params": params,
            "model_seed": model_seed,
            "unlearn_seed": unlearn_seed,
        },
        sort_keys=True,
        default=str,
    )
    return "run-" + hashlib.sha256(payload.encode()).hexdigest()[:12]


def run_iterative(
    store: ExperimentStore,
    data: ImageDataset,
    plan: SplitPlan,
    base: Checkpoint,
    algorithm: str,
    params: dict,
    train_cfg: TrainConfig,
    unlearn_seed: int,
    attack_every: int = 0,
    attack_fn=None,
) -> tuple[str, list[IterationRecord]]:
    """Apply the algorithm down the plan's forget sequence.

    Each iteration unlearns the current model's own output (M_{i+1} =
    U(M_i, retain_i, forget_i)), records test/retain/forget accuracy and the
    cost report, registers the checkpoint, and appends to the run manifest.
    Attacks run on iterations i with i % attack_every == 0 when an attack_fn
    is supplied. A diverging algorithm preserves the records collected so far
    and marks the run failed.
    """
    if attack_every < 0:
        raise BenchError("BAD_SIZES", "attack_every must be >= 0")
    if plan.n_iterations == 0:
        raise BenchError("PLAN_EXHAUSTED", "plan has no forget iterations")
    params = validate_params(algorithm, params)
    run_id = run_id_for(plan, algorithm, params, train_cfg.seed, unlearn_seed)
    store.put_plan(plan)
    seeds = {"model": train_cfg.seed, "unlearn": unlearn_seed}
    store.create_manifest(run_id, plan.plan_id, algorithm, params, seeds)

    iteration_seeds = np.random.SeedSequence(unlearn_seed).generate_state(plan.n_iterations)
    current = base
    records: list[IterationRecord] = []
    status = "ok"
    for i in range(plan.n_iterations):
        forget = forget_set_for_iteration(plan, i)
        retain = retain_set_for_iteration(plan, i)
        req = UnlearnRequest(
            base=current, retain_indices=retain, forget_indices=forget,
            algorithm=algorithm, params=params,
        )
        step_cfg = replace(train_cfg, seed=int(iteration_seeds[i]))
        try:
            current, cost = run_unlearning(req, data, step_cfg, proxy_indices=plan.val_indices)
        except BenchError as exc:
            if exc.code != "DIVERGED":
                raise
            status = "failed"
            break
        checkpoint_id = register(store, current)
        summary = None
        if attack_fn is not None and attack_every > 0 and i % attack_every == 0:
            summary = attack_fn(i, current, forget)
        record = IterationRecord(
            iteration=i,
            algorithm=algorithm,
            test_accuracy=evaluate_accuracy(current, data, plan.test_indices)["accuracy"],
            retain_accuracy=evaluate_accuracy(current, data, retain)["accuracy"],
            forget_accuracy=evaluate_accuracy(current, data, forget)["accuracy"],
            cost=cost,
            checkpoint_id=checkpoint_id,
            attack_summary=summary,
        )
        records.append(record)
        store.append_iteration(run_id, record.to_dict())
    store.finish_manifest(run_id, status)
    return run_id, records


def nonmember_queries(plan: SplitPlan, size: int, seed: int) -> np.ndarray:
    """Size-matched nonmember pool sampled from the test split."""
    rng = np.random.default_rng(seed)
    if size > len(plan.test_indices):
        raise BenchError("BAD_SIZES", "nonmember pool larger than the test split")
    return np.sort(rng.choice(plan.test_indices, size=size, replace=False))


def attack_summary_stats(result: AttackResult) -> dict:
    curve = roc_from_scores(result.scores, result.labels)
    return {
        "auc": curve.auc,
        "tpr_at_1e-2": tpr_at_fpr(curve, 1e-2),
        "accuracy": attack_accuracy(result),
    }


def make_lira_attack_fn(
    data: ImageDataset,
    plan: SplitPlan,
    shadows: ScoreMatrix,
    nonmembers: np.ndarray,
    sigma_min: float,
    shrink_below: int,
):
    """Per-iteration offline-LiRA summary callback for run_iterative."""

    def attack_fn(iteration: int, model: Checkpoint, forget: np.ndarray) -> dict:
        queries = np.concatenate([forget, nonmembers])
        labels = np.r_[np.ones(len(forget), dtype=np.int64), np.zeros(len(nonmembers), dtype=np.int64)]
        sub = shadows.select_queries(queries)
        target_phi = phi_scores(model, data, queries)
        result = lira_offline(target_phi, sub, labels, sigma_min=sigma_min, shrink_below=shrink_below)
        return {"lira_offline": attack_summary_stats(result)}

    return attack_fn


def tune_hyperparams(
    spec: TuneSpec,
    store: ExperimentStore,
    data: ImageDataset,
    plan: SplitPlan,
    base: Checkpoint,
    train_cfg: TrainConfig,
    folds: int = 5,
) -> tuple[dict, list[dict]]:
    """Random search over the algorithm's hyperparameter space.

    Each trial runs one unlearning step on iteration 0 and scores

        J = val_accuracy - weight * |0.5 - MIA_accuracy|

    with the baseline loss attack. Nonmember losses for the MIA come from
    the validation split: the tuner has no code path that touches test
    indices. Returns the argmax-J parameters and the full trial table.
    """
    forget = forget_set_for_iteration(plan, 0)
    retain = retain_set_for_iteration(plan, 0)
    rng = np.random.default_rng(spec.seed)
    trial_seeds = rng.integers(0, 2**31 - 1, size=spec.trials)

    mia_rng = np.random.default_rng(spec.seed ^ 0xA77AC)
    nonmember_pool = np.sort(
        mia_rng.choice(plan.val_indices, size=min(len(forget), len(plan.val_indices)), replace=False)
    )

    trials: list[dict] = []
    best = None
    for t in range(spec.trials):
        params = sample_params(spec.algorithm, rng, spec.ranges)
        row = {"trial": t, "params": params, "status": "ok"}
        try:
            req = UnlearnRequest(
                base=base, retain_indices=retain, forget_indices=forget,
                algorithm=spec.algorithm, params=params,
            )
            cfg = replace(train_cfg, seed=int(trial_seeds[t]))
            model, cost = run_unlearning(req, data, cfg, proxy_indices=plan.val_indices)
            val_acc = evaluate_accuracy(model, data, plan.val_indices)["accuracy"]
            mia = lr_mia(
                loss_scores(model, data, forget),
                loss_scores(model, data, nonmember_pool),
                folds=folds,
                seed=spec.seed,
            )
            mia_acc = attack_accuracy(mia)
            objective = val_acc - spec.weight * abs(0.5 - mia_acc)
            row.update(
                val_accuracy=val_acc,
                mia_accuracy=mia_acc,
                objective=objective,
                gradient_steps=cost.gradient_steps,
            )
            if best is None or objective > best[0]:
                best = (objective, params)
        except BenchError as exc:
            row.update(status=f"failed:{exc.code}", objective=float("-inf"))
        trials.append(row)
    if best is None:
        raise BenchError("ALL_TRIALS_FAILED", f"all {spec.trials} tuning trials failed")
    return best[1], trials


def do_no_harm_check(
    base_attack: AttackResult,
    update_attack: AttackResult,
    retrain_update_attack: AttackResult,
    noise_band: float = 0.02,
    eps_update: EpsilonEstimate | None = None,
    eps_base: EpsilonEstimate | None = None,
    eps_retrain: EpsilonEstimate | None = None,
) -> dict:
    """Compare the update-leak attack against two references.

    Harm: the update attack beats the same attack machinery restricted to
    base-model outputs by more than the noise band on any worst-case metric.
    Benefit: the update attack is below the retrain baseline's update attack
    on every metric by more than the band (ties are not a benefit).
    """
    for other in (update_attack, retrain_update_attack):
        if not np.array_equal(base_attack.query_indices, other.query_indices):
            raise BenchError("QUERY_MISMATCH", "attack results cover different query sets")

    def metric_vector(result: AttackResult, eps: EpsilonEstimate | None) -> dict:
        stats = attack_summary_stats(result)
        out = {"auc": stats["auc"], "tpr_at_1e-2": stats["tpr_at_1e-2"]}
        if eps is not None:
            out["max_eps"] = float(np.max(eps.eps))
        return out

    base_m = metric_vector(base_attack, eps_base)
    update_m = metric_vector(update_attack, eps_update)
    retrain_m = metric_vector(retrain_update_attack, eps_retrain)
    shared_base = set(base_m) & set(update_m)
    shared_retrain = set(retrain_m) & set(update_m)
    harm = any(update_m[k] > base_m[k] + noise_band for k in shared_base)
    benefit = all(update_m[k] < retrain_m[k] - noise_band for k in shared_retrain)
    return {
        "harm": harm,
        "benefit": benefit,
        "noise_band": noise_band,
        "metrics": {"base": base_m, "update": update_m, "retrain_update": retrain_m},
    }


# ------------------------------------------------------------ privacy bundle


def shadow_matrix_cached(
    store: ExperimentStore,
    data: ImageDataset,
    arch: ArchitectureSpec,
    cfg: TrainConfig,
    n_shadows: int,
    seed: int,
    pool: np.ndarray,
    queries: np.ndarray,
) -> ScoreMatrix:
    """Train (or reload) the single-model shadow population for a config."""
    key = hash_config(
        {
            "kind": "singles",
            "pool": hashlib.sha256(np.sort(pool).tobytes()).hexdigest(),
            "queries": hashlib.sha256(np.sort(queries).tobytes()).hexdigest(),
            "arch": arch.tag(),
            "cfg": cfg.to_dict(),
            "n": n_shadows,
            "seed": seed,
        }
    )
    path = store.score_path(f"shadows-{key}")
    if path.exists():
        matrix = read_score_file(path)
        if isinstance(matrix, ScoreMatrix):
            return matrix
    _, matrix = train_shadow_models(data, arch, cfg, n_shadows, seed, pool, queries)
    write_score_file(path, matrix)
    return matrix


def shadow_pairs_cached(
    store: ExperimentStore,
    data: ImageDataset,
    arch: ArchitectureSpec,
    cfg: TrainConfig,
    algorithms: dict[str, dict],
    n_pairs: int,
    seed: int,
    pool: np.ndarray,
    queries: np.ndarray,
    forget_size: int,
    proxy_indices: np.ndarray | None = None,
) -> dict[str, PairedScoreMatrix]:
    """Build (or reload) shadow pairs for the given algorithms."""

    def key_for(algo: str, params: dict) -> str:
        return hash_config(
            {
                "kind": "pairs",
                "algo": algo,
                "params": params,
                "pool": hashlib.sha256(np.sort(pool).tobytes()).hexdigest(),
                "queries": hashlib.sha256(np.asarray(queries).tobytes()).hexdigest(),
                "arch": arch.tag(),
                "cfg": cfg.to_dict(),
                "n": n_pairs,
                "seed": seed,
                "forget_size": forget_size,
            }
        )

    out: dict[str, PairedScoreMatrix] = {}
    missing: dict[str, dict] = {}
    for algo, params in algorithms.items():
        path = store.score_path(f"pairs-{key_for(algo, params)}")
        if path.exists():
            matrix = read_score_file(path)
            if isinstance(matrix, PairedScoreMatrix):
                out[algo] = matrix
                continue
        missing[algo] = params
    if missing:
        built = build_shadow_pairs_multi(
            data, arch, cfg, missing, n_pairs, seed, pool, queries, forget_size, proxy_indices
        )
        for algo, matrix in built.items():
            write_score_file(store.score_path(f"pairs-{key_for(algo, missing[algo])}"), matrix)
            out[algo] = matrix
    return out


def base_view(pairs: PairedScoreMatrix) -> PairedScoreMatrix:
    """The same attack machinery fed only base-model outputs.

    Duplicating the base plane yields a single-model two-hypothesis attack;
    when an algorithm leaves outputs untouched (identity) the update attack
    coincides with this view exactly, which is what forces the do-no-harm
    verdict to come out clean there.
    """
    return PairedScoreMatrix(
        query_indices=pairs.query_indices,
        base_scores=pairs.base_scores,
        unlearned_scores=pairs.base_scores,
        mask=pairs.mask,
        provenance=dict(pairs.provenance, kind="shadow-pairs-baseview"),
    )


def epsilon_from_pairs(
    pairs: PairedScoreMatrix,
    member_queries: np.ndarray,
    delta: float,
    confidence: float | None,
    threshold: float = 0.0,
    pooling: str = "class",
    class_labels: np.ndarray | None = None,
    cov_reg: float = 1e-6,
    min_fit: int = 3,
) -> tuple[EpsilonEstimate, np.ndarray]:
    """Per-example epsilon for the member queries, from leave-one-out trials.

    Queries that never appear under one of the two hypotheses across the
    pairs cannot be measured and are dropped; the returned index array names
    the queries actually measured.
    """
    member, nonmember = pairwise_decisions(
        pairs, threshold=threshold, pooling=pooling, class_labels=class_labels,
        cov_reg=cov_reg, min_fit=min_fit,
    )
    wanted = set(int(q) for q in member_queries)
    keep_member, keep_nonmember, measured = [], [], []
    for pos, q in enumerate(pairs.query_indices):
        if int(q) not in wanted:
            continue
        if member[pos].size == 0 or nonmember[pos].size == 0:
            continue
        keep_member.append(member[pos])
        keep_nonmember.append(nonmember[pos])
        measured.append(int(q))
    if not measured:
        raise BenchError("EMPTY_TRIALS", "no member query has trials under both hypotheses")
    est = estimate_epsilon(keep_member, keep_nonmember, delta=delta, confidence=confidence)
    return est, np.asarray(measured, dtype=np.int64)


def privacy_eval(
    store: ExperimentStore,
    data: ImageDataset,
    plan: SplitPlan,
    base: Checkpoint,
    unlearned: Checkpoint,
    algorithm: str,
    params: dict,
    train_cfg: TrainConfig,
    attack_cfg: dict,
    run_id: str,
) -> dict:
    """The full attack bundle against one unlearned model.

    Queries are the iteration-0 forget set (members) plus a size-matched
    seeded sample of test examples (nonmembers). Shadow singles feed offline
    LiRA; shadow pairs (for this algorithm and for retrain) feed the
    update-leak attack, the do-no-harm verdict and per-example epsilon.
    """
    forget = forget_set_for_iteration(plan, 0)
    nonmembers = nonmember_queries(plan, len(forget), attack_cfg["nonmember_seed"])
    queries = np.concatenate([forget, nonmembers])
    labels = np.r_[np.ones(len(forget), dtype=np.int64), np.zeros(len(nonmembers), dtype=np.int64)]
    pool = np.concatenate([plan.train_indices, nonmembers])
    delta = attack_cfg["delta"]
    if delta is None:
        delta = 1.0 / len(plan.train_indices)

    shadow_cfg = train_cfg
    if attack_cfg.get("shadow_epochs"):
        shadow_cfg = replace(train_cfg, epochs=attack_cfg["shadow_epochs"])

    results: dict[str, AttackResult] = {}
    bundle: dict = {"queries": queries.tolist(), "delta": delta}

    which = attack_cfg["which"]
    if "lr_mia" in which:
        results["lr_mia"] = lr_mia(
            loss_scores(unlearned, data, forget),
            loss_scores(unlearned, data, nonmembers),
            folds=attack_cfg["folds"],
            seed=attack_cfg["shadow_seed"],
            query_indices=queries,
        )
    if "lira_offline" in which:
        singles = shadow_matrix_cached(
            store, data, base.arch, shadow_cfg, attack_cfg["n_shadows"],
            attack_cfg["shadow_seed"], pool, queries,
        )
        results["lira_offline"] = lira_offline(
            phi_scores(unlearned, data, queries),
            singles.select_queries(queries),
            labels,
            sigma_min=attack_cfg["sigma_min"],
            shrink_below=attack_cfg["shrink_below"],
        )
    if "update_leak" in which:
        algos = {algorithm: params}
        if algorithm != "retrain":
            algos["retrain"] = {}
        pairs_by_algo = shadow_pairs_cached(
            store, data, base.arch, shadow_cfg, algos, attack_cfg["n_pairs"],
            attack_cfg["pair_seed"], pool, queries, forget_size=len(forget),
            proxy_indices=plan.val_indices,
        )
        pairs = pairs_by_algo[algorithm]
        retrain_pairs = pairs_by_algo.get("retrain", pairs)
        class_labels = data.labels[queries]
        phi_b = phi_scores(base, data, queries)
        phi_u = phi_scores(unlearned, data, queries)
        kwargs = dict(
            pooling=attack_cfg["pooling"],
            class_labels=class_labels,
            cov_reg=attack_cfg["cov_reg"],
            min_fit=attack_cfg["min_fit"],
        )
        results["update_leak"] = update_leak_attack(phi_b, phi_u, pairs, labels, **kwargs)
        results["base_update"] = update_leak_attack(phi_b, phi_b, base_view(pairs), labels, **kwargs)
        retrain_model, _ = run_unlearning(
            UnlearnRequest(
                base=base,
                retain_indices=retain_set_for_iteration(plan, 0),
                forget_indices=forget,
                algorithm="retrain",
                params={},
            ),
            data,
            train_cfg,
        )
        phi_r = phi_scores(retrain_model, data, queries)
        results["retrain_update"] = update_leak_attack(phi_b, phi_r, retrain_pairs, labels, **kwargs)
        bundle["verdict"] = do_no_harm_check(
            results["base_update"], results["update_leak"], results["retrain_update"],
            noise_band=attack_cfg["noise_band"],
        )
        est, measured = epsilon_from_pairs(
            pairs, forget, delta=delta, confidence=attack_cfg["confidence"],
            threshold=attack_cfg["decision_threshold"], pooling=attack_cfg["pooling"],
            class_labels=class_labels, cov_reg=attack_cfg["cov_reg"],
            min_fit=attack_cfg["min_fit"],
        )
        bundle["epsilon"] = {
            "delta": delta,
            "confidence": attack_cfg["confidence"],
            "queries_measured": measured.tolist(),
            "eps": est.eps.tolist(),
            "fpr_bounds": est.fpr_bounds.tolist(),
            "fnr_bounds": est.fnr_bounds.tolist(),
        }
        bundle["_epsilon_estimate"] = est

    for name, result in results.items():
        payload = {
            "attack_id": result.attack_id,
            "config_hash": result.config_hash,
            "query_indices": result.query_indices.tolist(),
            "scores": result.scores.tolist(),
            "labels": result.labels.tolist(),
            "summary": attack_summary_stats(result),
        }
        store.save_attack_result(run_id, name, payload)
    bundle["results"] = results
    return bundle


# ------------------------------------------------------------------- reports


@dataclass(frozen=True)
class ReportBundle:
    run_key: str
    out_dir: Path
    tables: dict[str, Path]
    plots: dict[str, Path]
    report: dict


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def emit_report(
    records: list[IterationRecord],
    attack_results: dict[str, AttackResult],
    eps: EpsilonEstimate | None,
    out_dir: str | Path,
    run_key: str,
    verdicts: dict | None = None,
    fpr_grid=(1e-3, 1e-2, 1e-1),
    eps_query_indices: np.ndarray | None = None,
) -> ReportBundle:
    """Write trajectory/cost/ROC/epsilon tables, plots, and report.json.

    Inputs are validated before any file is created, so an empty record list
    produces no partial output. CSV bytes depend only on the inputs.
    """
    if not records:
        raise BenchError("EMPTY_INPUT", "no iteration records to report")
    target = Path(out_dir) / run_key
    try:
        target.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise BenchError("IO_ERROR", f"cannot create report dir {target}: {exc}") from exc

    tables: dict[str, Path] = {}
    plots: dict[str, Path] = {}

    ordered = sorted(records, key=lambda r: (r.algorithm, r.iteration))
    trajectory = target / "trajectory.csv"
    write_csv(
        trajectory,
        ["algorithm", "iteration", "test_accuracy", "retain_accuracy", "forget_accuracy"],
        [
            [r.algorithm, r.iteration, r.test_accuracy, r.retain_accuracy, r.forget_accuracy]
            for r in ordered
        ],
    )
    tables["trajectory"] = trajectory

    cost = target / "cost.csv"
    write_csv(
        cost,
        ["algorithm", "iteration", "gradient_steps", "forward_passes", "peak_params_updated"],
        [
            [
                r.algorithm,
                r.iteration,
                r.cost.gradient_steps,
                r.cost.forward_passes,
                r.cost.peak_params_updated,
            ]
            for r in ordered
        ],
    )
    tables["cost"] = cost

    for name, result in sorted(attack_results.items()):
        curve = roc_from_scores(result.scores, result.labels)
        path = target / f"roc_{name}.csv"
        write_csv(
            path,
            ["fpr", "tpr", "threshold"],
            [[f, t, thr] for f, t, thr in zip(curve.fpr, curve.tpr, curve.thresholds)],
        )
        tables[f"roc_{name}"] = path

    if eps is not None:
        idx = (
            eps_query_indices
            if eps_query_indices is not None
            else np.arange(len(eps.eps), dtype=np.int64)
        )
        path = target / "epsilon.csv"
        write_csv(
            path,
            ["query_index", "eps", "fpr_bound", "fnr_bound"],
            [
                [int(q), e, fp, fn]
                for q, e, fp, fn in zip(idx, eps.eps, eps.fpr_bounds, eps.fnr_bounds)
            ],
        )
        tables["epsilon"] = path

    report = {
        "run_key": run_key,
        "wall_seconds_total": sum(r.cost.wall_seconds for r in records),
        "algorithms": sorted({r.algorithm for r in records}),
        "attacks": {},
    }
    for name, result in sorted(attack_results.items()):
        wc = worst_case_report([result], eps if name == "update_leak" else None, fpr_grid)
        report["attacks"][name] = {
            "auc": wc.auc,
            "tpr_at_fpr": {str(k): v for k, v in wc.tpr_at_fpr.items()},
            "max_eps": wc.max_eps,
            "eps_quantiles": wc.eps_quantiles,
        }
    if verdicts is not None:
        report["do_no_harm"] = verdicts
    report_path = target / "report.json"
    report_path.write_text(json.dumps(report, sort_keys=True, indent=1))
    tables["report"] = report_path

    plots["trajectory"] = _plot_trajectories(ordered, target / "trajectory.png")
    if attack_results:
        plots["roc"] = _plot_roc_loglog(attack_results, target / "roc_loglog.png")
    return ReportBundle(run_key=run_key, out_dir=target, tables=tables, plots=plots, report=report)


def _plot_trajectories(records: list[IterationRecord], path: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    by_algo: dict[str, list[IterationRecord]] = {}
    for r in records:
        by_algo.setdefault(r.algorithm, []).append(r)
    for algo, rs in sorted(by_algo.items()):
        rs = sorted(rs, key=lambda r: r.iteration)
        ax.plot([r.iteration + 1 for r in rs], [r.test_accuracy for r in rs], marker="o", label=algo)
    ax.set_xlabel("unlearning iteration")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _plot_roc_loglog(attack_results: dict[str, AttackResult], path: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.5, 5))
    for name, result in sorted(attack_results.items()):
        curve = roc_from_scores(result.scores, result.labels)
        ax.plot(np.maximum(curve.fpr, 1e-5), np.maximum(curve.tpr, 1e-5), label=name)
    ax.plot([1e-5, 1], [1e-5, 1], "k--", lw=0.8, label="chance")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
