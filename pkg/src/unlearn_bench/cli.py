"""Command-line interface.

Every subcommand reads one JSON config file (see config.DEFAULTS for the
schema) plus a few overrides, prints a single JSON object on success, and
exits nonzero with a machine-readable JSON error on failure. The store root
can be overridden with the BENCH_STORE environment variable.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import load_config
from .datasets import load_dataset
from .errors import BenchError
from .metrics import EpsilonEstimate
from .models import ArchitectureSpec
from .pipeline import (
    IterationRecord,
    TuneSpec,
    emit_report,
    make_lira_attack_fn,
    nonmember_queries,
    privacy_eval,
    run_id_for,
    run_iterative,
    shadow_matrix_cached,
    tune_hyperparams,
    write_csv,
)
from .splits import build_split_plan, forget_set_for_iteration, retain_set_for_iteration
from .store import ExperimentStore
from .training import TrainConfig, evaluate_accuracy, load, register, train_model
from .unlearn import CostReport, UnlearnRequest, run_unlearning, validate_params

from .attacks import AttackResult


def _context(args):
    overrides = {}
    if getattr(args, "store", None):
        overrides["store"] = args.store
    cfg = load_config(args.config, overrides)
    store = ExperimentStore(cfg["store"])
    data_cfg = cfg["data"]
    params = dict(data_cfg["params"])
    if data_cfg["dataset_id"]:
        params.setdefault("dataset_id", data_cfg["dataset_id"])
    data = load_dataset(data_cfg["loader"], params)
    plan = build_split_plan(
        data.dataset_id,
        data_cfg["n_train"],
        data_cfg["n_val"],
        data_cfg["n_test"],
        data_cfg["forget_fraction"],
        data_cfg["n_iterations"],
        data_cfg["seed"],
    )
    if len(data) < data_cfg["n_train"] + data_cfg["n_val"] + data_cfg["n_test"]:
        raise BenchError("BAD_SIZES", "dataset smaller than the configured splits")
    arch = ArchitectureSpec(
        family=cfg["model"]["arch"], input_shape=data.input_shape, n_classes=data.n_classes
    )
    model_cfg = {k: v for k, v in cfg["model"].items() if k != "arch"}
    train_cfg = TrainConfig(**model_cfg)
    return cfg, store, data, plan, arch, train_cfg


def _algo(cfg, args):
    algo = args.algo or cfg["unlearn"]["algo"]
    params = validate_params(algo, cfg["unlearn"]["params"] if algo == cfg["unlearn"]["algo"] else {})
    return algo, params


def _base_checkpoint(store, arch, tag):
    return load(store, store.get_tag(tag), arch)


def cmd_make_plan(args) -> dict:
    cfg, store, data, plan, _, _ = _context(args)
    plan_id = store.put_plan(plan)
    return {
        "plan_id": plan_id,
        "n_train": len(plan.train_indices),
        "n_val": len(plan.val_indices),
        "n_test": len(plan.test_indices),
        "forget_sets": plan.n_iterations,
        "forget_set_size": len(plan.forget_sequence[0]) if plan.n_iterations else 0,
    }


def cmd_train_base(args) -> dict:
    cfg, store, data, plan, arch, train_cfg = _context(args)
    store.put_plan(plan)
    ckpt = train_model(arch, data, plan.train_indices, train_cfg)
    cid = register(store, ckpt)
    store.set_tag(args.tag, cid)
    test = evaluate_accuracy(ckpt, data, plan.test_indices)
    return {"checkpoint_id": cid, "tag": args.tag, "test_accuracy": test["accuracy"]}


def cmd_unlearn(args) -> dict:
    cfg, store, data, plan, arch, train_cfg = _context(args)
    algo, params = _algo(cfg, args)
    base = _base_checkpoint(store, arch, args.base_tag)
    i = args.iteration
    req = UnlearnRequest(
        base=base,
        retain_indices=retain_set_for_iteration(plan, i),
        forget_indices=forget_set_for_iteration(plan, i),
        algorithm=algo,
        params=params,
    )
    ucfg = replace(train_cfg, seed=cfg["unlearn"]["seed"])
    model, cost = run_unlearning(req, data, ucfg, proxy_indices=plan.val_indices)
    cid = register(store, model)
    test = evaluate_accuracy(model, data, plan.test_indices)
    return {
        "checkpoint_id": cid,
        "algorithm": algo,
        "iteration": i,
        "test_accuracy": test["accuracy"],
        "cost": cost.to_dict(),
    }


def cmd_shadows(args) -> dict:
    cfg, store, data, plan, arch, train_cfg = _context(args)
    atk = cfg["attack"]
    forget = forget_set_for_iteration(plan, 0)
    nonmembers = nonmember_queries(plan, len(forget), atk["nonmember_seed"])
    queries = np.concatenate([forget, nonmembers])
    pool = np.concatenate([plan.train_indices, nonmembers])
    shadow_cfg = train_cfg
    if atk.get("shadow_epochs"):
        shadow_cfg = replace(train_cfg, epochs=atk["shadow_epochs"])
    matrix = shadow_matrix_cached(
        store, data, arch, shadow_cfg, atk["n_shadows"], atk["shadow_seed"], pool, queries
    )
    return {"n_shadows": matrix.n_shadows, "n_queries": len(matrix.query_indices)}


def cmd_attack(args) -> dict:
    cfg, store, data, plan, arch, train_cfg = _context(args)
    algo, params = _algo(cfg, args)
    base = _base_checkpoint(store, arch, args.base_tag)
    req = UnlearnRequest(
        base=base,
        retain_indices=retain_set_for_iteration(plan, 0),
        forget_indices=forget_set_for_iteration(plan, 0),
        algorithm=algo,
        params=params,
    )
    ucfg = replace(train_cfg, seed=cfg["unlearn"]["seed"])
    model, _ = run_unlearning(req, data, ucfg, proxy_indices=plan.val_indices)
    run_id = run_id_for(plan, algo, params, train_cfg.seed, cfg["unlearn"]["seed"])
    bundle = privacy_eval(
        store, data, plan, base, model, algo, params, train_cfg, cfg["attack"], run_id
    )
    meta = {"delta": bundle["delta"]}
    if "verdict" in bundle:
        meta["verdict"] = bundle["verdict"]
    if "epsilon" in bundle:
        meta["epsilon"] = bundle["epsilon"]
    store.save_attack_result(run_id, "meta", meta)
    out = {"run_id": run_id, "algorithm": algo, "attacks": {}}
    from .pipeline import attack_summary_stats

    for name, result in bundle["results"].items():
        out["attacks"][name] = attack_summary_stats(result)
    if "verdict" in bundle:
        out["do_no_harm"] = {
            "harm": bundle["verdict"]["harm"],
            "benefit": bundle["verdict"]["benefit"],
        }
    return out


def cmd_iterate(args) -> dict:
    cfg, store, data, plan, arch, train_cfg = _context(args)
    algo, params = _algo(cfg, args)
    base = _base_checkpoint(store, arch, args.base_tag)
    atk = cfg["attack"]
    attack_fn = None
    attack_every = 0 if args.no_attacks else atk["attack_every"]
    if attack_every > 0:
        forget0 = forget_set_for_iteration(plan, 0)
        nonmembers = nonmember_queries(plan, len(forget0), atk["nonmember_seed"])
        pool = np.concatenate([plan.train_indices, nonmembers])
        all_queries = np.concatenate([plan.train_indices, nonmembers])
        shadow_cfg = train_cfg
        if atk.get("shadow_epochs"):
            shadow_cfg = replace(train_cfg, epochs=atk["shadow_epochs"])
        shadows = shadow_matrix_cached(
            store, data, arch, shadow_cfg, atk["n_shadows"], atk["shadow_seed"], pool, all_queries
        )
        attack_fn = make_lira_attack_fn(
            data, plan, shadows, nonmembers, atk["sigma_min"], atk["shrink_below"]
        )
    run_id, records = run_iterative(
        store, data, plan, base, algo, params, train_cfg, cfg["unlearn"]["seed"],
        attack_every=attack_every, attack_fn=attack_fn,
    )
    manifest = store.get_manifest(run_id)
    return {
        "run_id": run_id,
        "algorithm": algo,
        "iterations": len(records),
        "status": manifest["status"],
        "final_test_accuracy": records[-1].test_accuracy if records else None,
    }


def cmd_tune(args) -> dict:
    cfg, store, data, plan, arch, train_cfg = _context(args)
    algo = args.algo or cfg["unlearn"]["algo"]
    base = _base_checkpoint(store, arch, args.base_tag)
    spec = TuneSpec(
        algorithm=algo,
        ranges=cfg["tune"]["ranges"],
        trials=args.trials or cfg["tune"]["trials"],
        weight=cfg["tune"]["weight"],
        seed=cfg["tune"]["seed"],
    )
    best, trials = tune_hyperparams(spec, store, data, plan, base, train_cfg, folds=cfg["attack"]["folds"])
    out_dir = Path(cfg["report"]["out_dir"]) / f"tune-{algo}"
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for row in trials:
        rows.append(
            [
                row["trial"],
                json.dumps(row["params"], sort_keys=True).replace(",", ";"),
                row.get("val_accuracy", ""),
                row.get("mia_accuracy", ""),
                row.get("objective", ""),
                row["status"],
            ]
        )
    write_csv(
        out_dir / "trials.csv",
        ["trial", "params", "val_accuracy", "mia_accuracy", "objective", "status"],
        rows,
    )
    (out_dir / "best.json").write_text(json.dumps({"algorithm": algo, "params": best}, sort_keys=True, indent=1))
    return {"algorithm": algo, "trials": len(trials), "best": best, "table": str(out_dir / "trials.csv")}


def cmd_report(args) -> dict:
    cfg, store, data, plan, arch, train_cfg = _context(args)
    run_ids = args.run
    if not run_ids:
        algo, params = _algo(cfg, args)
        run_ids = [run_id_for(plan, algo, params, train_cfg.seed, cfg["unlearn"]["seed"])]
    records: list[IterationRecord] = []
    attack_results: dict[str, AttackResult] = {}
    verdicts = None
    eps = None
    eps_idx = None
    for run_id in run_ids:
        manifest = store.get_manifest(run_id)
        for rec in manifest["iterations"]:
            records.append(
                IterationRecord(
                    iteration=rec["iteration"],
                    algorithm=rec["algorithm"],
                    test_accuracy=rec["test_accuracy"],
                    retain_accuracy=rec["retain_accuracy"],
                    forget_accuracy=rec["forget_accuracy"],
                    cost=CostReport(**rec["cost"]),
                    checkpoint_id=rec["checkpoint_id"],
                    attack_summary=rec.get("attack_summary"),
                )
            )
        stored = store.load_attack_results(run_id)
        for name, payload in stored.items():
            if name == "meta":
                verdicts = payload.get("verdict")
                if "epsilon" in payload:
                    e = payload["epsilon"]
                    eps = EpsilonEstimate(
                        eps=np.asarray(e["eps"]),
                        delta=e["delta"],
                        confidence=e["confidence"],
                        fpr_bounds=np.asarray(e["fpr_bounds"]),
                        fnr_bounds=np.asarray(e["fnr_bounds"]),
                    )
                    eps_idx = np.asarray(e["queries_measured"], dtype=np.int64)
                continue
            attack_results[name] = AttackResult(
                attack_id=payload["attack_id"],
                query_indices=np.asarray(payload["query_indices"], dtype=np.int64),
                scores=np.asarray(payload["scores"]),
                labels=np.asarray(payload["labels"], dtype=np.int64),
                config_hash=payload["config_hash"],
            )
    run_key = run_ids[0] if len(run_ids) == 1 else "multi-" + "-".join(r[-4:] for r in sorted(run_ids))
    bundle = emit_report(
        records,
        attack_results,
        eps,
        cfg["report"]["out_dir"],
        run_key,
        verdicts=verdicts,
        fpr_grid=tuple(cfg["report"]["fpr_grid"]),
        eps_query_indices=eps_idx,
    )
    return {
        "run_key": run_key,
        "out_dir": str(bundle.out_dir),
        "tables": {k: str(v) for k, v in bundle.tables.items()},
        "plots": {k: str(v) for k, v in bundle.plots.items()},
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unlearn-bench", description="machine unlearning benchmark pipeline"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, base_tag=True):
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--store", default=None, help="store root (overrides config and BENCH_STORE)")
        if base_tag:
            p.add_argument("--base-tag", default="base", help="tag of the base checkpoint")

    p = sub.add_parser("make-plan", help="build and store the split plan")
    common(p, base_tag=False)
    p.set_defaults(fn=cmd_make_plan)

    p = sub.add_parser("train-base", help="train and tag the base model")
    common(p, base_tag=False)
    p.add_argument("--tag", default="base")
    p.set_defaults(fn=cmd_train_base)

    p = sub.add_parser("unlearn", help="run one unlearning request")
    common(p)
    p.add_argument("--algo", default=None)
    p.add_argument("--iteration", type=int, default=0)
    p.set_defaults(fn=cmd_unlearn)

    p = sub.add_parser("shadows", help="train or reload the shadow population")
    common(p, base_tag=False)
    p.set_defaults(fn=cmd_shadows)

    p = sub.add_parser("attack", help="run the privacy attack bundle for one algorithm")
    common(p)
    p.add_argument("--algo", default=None)
    p.set_defaults(fn=cmd_attack)

    p = sub.add_parser("iterate", help="iterative unlearning down the forget sequence")
    common(p)
    p.add_argument("--algo", default=None)
    p.add_argument("--no-attacks", action="store_true")
    p.set_defaults(fn=cmd_iterate)

    p = sub.add_parser("tune", help="random hyperparameter search")
    common(p)
    p.add_argument("--algo", default=None)
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(fn=cmd_tune)

    p = sub.add_parser("report", help="emit tables and plots for stored runs")
    common(p)
    p.add_argument("--algo", default=None)
    p.add_argument("--run", action="append", default=None, help="run id (repeatable)")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        out = args.fn(args)
    except BenchError as exc:
        print(json.dumps({"error": {"code": exc.code, "message": str(exc)}}), file=sys.stderr)
        return 1
    print(json.dumps(out, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
