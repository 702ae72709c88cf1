"""Command-line interface: ``xcg <subcommand> ...``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from . import __version__
from .analysis import cohort_summary, write_stats
from .benchmark import METHODS, run_benchmark
from .cellgraph.io import input_hashes, load_dataset, write_tables
from .cellgraph.labels import SurvivalClass
from .cellgraph.synth import phenotype_names, synth_generate, synth_planted_cohort
from .gnn.optim import LR_GRID, TrainConfig
from .gnn.serialize import load_model, save_model
from .gridattr import (DEFAULT_INTERVALS, RELEVANCE_HEADER, GridSpec, grid_attribution, normalize,
                       raster, relevance_rows, write_pgm)
from .lrp import LrpConfig
from .plotting import benchmark_figure, fold_metrics_figure, phenotype_stats_figure
from .survival.cv import FoldPlan, make_folds
from .survival.metrics import auroc, concordance_index, stage_baseline_risk
from .survival.training import ensemble_predict, predict_scores, prepare_samples, train_ensemble

log = logging.getLogger("xcg")

PREDICTION_COLUMNS = "patient_id,fold,seed,risk\n"


class CliError(RuntimeError):
    pass


# -- helpers ------------------------------------------------------------------

def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _interval(text: str) -> tuple[float, float]:
    lo, hi = _float_list(text)
    return lo, hi


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out_dir: Path, args: argparse.Namespace, inputs: dict | None = None,
                   extra: dict | None = None) -> None:
    """Record config, seeds and input/output hashes for reproduction."""
    outputs = {str(p.relative_to(out_dir)): _sha256(p) for p in sorted(out_dir.rglob("*"))
               if p.is_file() and p.name != "manifest.json"}
    doc = {
        "xcg_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "command": args.command,
        "config": {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)},
        "inputs": inputs or {},
        "outputs": outputs,
    }
    doc.update(extra or {})
    digest = hashlib.sha256(json.dumps({k: doc[k] for k in ("config", "inputs", "outputs")},
                                       sort_keys=True, default=str).encode()).hexdigest()
    doc["content_hash"] = digest
    (out_dir / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=str))


def _load(args):
    ds, hit = load_dataset(args.data, k=args.k, use_cache=not getattr(args, "no_cache", False))
    log.info("dataset %s (%s)", args.data, "cache hit" if hit else "built")
    return ds


def _run_dir_models(run: Path) -> dict[tuple[int, int], Path]:
    out = {}
    for p in sorted((run / "models").glob("seed*/fold*.json")):
        out[(int(p.parent.name[4:]), int(p.stem[4:]))] = p
    if not out:
        raise CliError(f"no models found under {run / 'models'}")
    return out


def _read_run(run: Path) -> tuple[dict, FoldPlan]:
    meta = json.loads((run / "run.json").read_text())
    plan = FoldPlan.from_dict(json.loads((run / "plan.json").read_text()))
    return meta, plan


# -- subcommands --------------------------------------------------------------

def cmd_ingest(args) -> dict:
    ds, hit = load_dataset(args.data, k=args.k, use_cache=not args.no_cache)
    report = ds.report()
    report["cache"] = "hit" if hit else "built"
    report["content_hash"] = ds.content_hash
    print(json.dumps(report, indent=2))
    return report


def cmd_synth(args) -> None:
    out = Path(args.out)
    if args.kind == "planted":
        cells, patients = synth_planted_cohort(args.patients, args.signal, args.seed,
                                               n_phenotypes=args.phenotypes, cells_per_graph=args.cells,
                                               graphs_per_patient=args.graphs_per_patient)
        names = phenotype_names(args.phenotypes, args.signal)
    else:
        pts = synth_generate(args.cells, args.phenotypes, args.seed)
        cells = pd.DataFrame([("S0", "S0_g0", c.cell_id, c.x_mm, c.y_mm, c.phenotype_id) for c in pts],
                             columns=["patient_id", "graph_id", "cell_id", "x_mm", "y_mm", "phenotype_id"])
        patients = pd.DataFrame([("S0", 40.0, 0, "early")],
                                columns=["patient_id", "os_months", "event", "stage_group"])
        names = phenotype_names(args.phenotypes)
    write_tables(out, cells, patients, names)
    write_manifest(out, args)
    print(json.dumps({"out": str(out), "n_cells": len(cells), "n_patients": len(patients)}))


def cmd_train(args) -> None:
    ds = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = TrainConfig(learning_rate=args.lr_grid[0], lr_grid=tuple(args.lr_grid),
                         batch_size=args.batch_size, epochs=args.epochs)
    model_kwargs = {"hidden": args.hidden}
    if args.task == "regression":
        model_kwargs.update(embed_dim=args.embed_dim, n_blocks=args.blocks, pool_ratio=args.pool_ratio,
                            fuse_stage=args.fuse_stage)
    plan = make_folds(ds.bags, args.task, args.seed, n_outer=args.folds)
    samples = prepare_samples(ds.bags, ds.graphs)
    seeds = [args.seed + i for i in range(args.ensemble)]
    results = train_ensemble(samples, args.task, config, plan, seeds, model_kwargs, n_jobs=args.threads)

    (out / "plan.json").write_text(json.dumps(plan.to_dict(), indent=1, sort_keys=True))
    lines = [PREDICTION_COLUMNS]
    log_doc = []
    for s in seeds:
        for r in results[s]:
            mdir = out / "models" / f"seed{s}"
            mdir.mkdir(parents=True, exist_ok=True)
            save_model(r.model, mdir / f"fold{r.fold}.json")
            for pid, score in zip(r.test_ids, r.test_scores):
                lines.append(f"{pid},{r.fold},{s},{float(score)!r}\n")
            log_doc.append({"seed": s, "fold": r.fold, "best_lr": r.best_lr,
                            "inner_scores": {repr(k): v for k, v in r.inner_scores.items()},
                            "test_metric": r.metric, "train_loss": r.history})
    (out / "predictions.csv").write_text("".join(lines))
    (out / "train_log.json").write_text(json.dumps(log_doc, indent=1))
    (out / "run.json").write_text(json.dumps({"task": args.task, "seeds": seeds, "k": args.k,
                                              "fuse_stage": args.fuse_stage}, indent=1))
    write_manifest(out, args, inputs=input_hashes(args.data))
    print(json.dumps({"out": str(out), "folds": [
        {"seed": d["seed"], "fold": d["fold"], "best_lr": d["best_lr"], "metric": round(d["test_metric"], 4)}
        for d in log_doc]}, indent=1))


def _eval_metrics(task: str, preds: pd.DataFrame, plan: FoldPlan, ds) -> tuple[dict, pd.DataFrame]:
    bags = {b.patient_id: b for b in ds.bags}

    def metric(ids, scores):
        if task == "regression":
            return concordance_index(scores, [bags[i].os_months for i in ids], [bags[i].event for i in ids])
        return auroc(scores, [bags[i].survival_class is SurvivalClass.SHORT for i in ids])

    seeds = sorted(preds["seed"].unique())
    per = {}
    for (seed, fold), sub in preds.groupby(["seed", "fold"]):
        sub = sub.sort_values("patient_id")
        per[(int(seed), int(fold))] = metric(sub["patient_id"].tolist(), sub["risk"].to_numpy())
    folds = sorted({f for _, f in per})
    rows = []
    for f in folds:
        member = np.array([per[(s, f)] for s in seeds])
        sub = preds[preds["fold"] == f]
        ens = sub.groupby("patient_id")["risk"].mean().sort_index()
        ids = ens.index.tolist()
        base = None
        if task == "regression":
            try:
                base = metric(ids, stage_baseline_risk([bags[i].stage_group for i in ids]))
            except ValueError:
                base = None
        rows.append({"fold": f, "member_mean": member.mean(), "member_std": member.std(),
                     "ensemble": metric(ids, ens.to_numpy()), "baseline": base,
                     "members": {int(s): float(v) for s, v in zip(seeds, member)}})
    table = pd.DataFrame(rows)
    per_seed = np.array([np.mean([per[(s, f)] for f in folds]) for s in seeds])
    name = "c_index" if task == "regression" else "auroc"
    doc = {
        "task": task,
        "metric": name,
        "per_fold": rows,
        "members": {"per_seed_mean_over_folds": {int(s): float(v) for s, v in zip(seeds, per_seed)},
                    "mean": float(per_seed.mean()), "std_over_seeds": float(per_seed.std())},
        "ensemble": {"mean_over_folds": float(table["ensemble"].mean()),
                     "std_over_folds": float(table["ensemble"].std(ddof=0)),
                     "n_members": len(seeds)},
    }
    if task == "regression" and table["baseline"].notna().all():
        doc["stage_baseline"] = {"mean_over_folds": float(table["baseline"].mean()),
                                 "std_over_folds": float(table["baseline"].std(ddof=0))}
    return doc, table


def cmd_eval(args) -> dict:
    run = Path(args.run)
    meta, plan = _read_run(run)
    ds = _load(args)
    preds = pd.read_csv(run / "predictions.csv", dtype={"patient_id": str})
    doc, table = _eval_metrics(meta["task"], preds, plan, ds)
    out = Path(args.out) if args.out else run / "eval"
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    fold_metrics_figure(table, "C-index" if meta["task"] == "regression" else "AUROC", out / "metrics.png")
    write_manifest(out, args, inputs={**input_hashes(args.data),
                                      "predictions": _sha256(run / "predictions.csv")})
    print(json.dumps({k: doc[k] for k in doc if k != "per_fold"}, indent=2))
    return doc


def cmd_predict(args) -> None:
    run = Path(args.run)
    meta, _ = _read_run(run)
    ds = _load(args)
    models = _run_dir_models(run)
    chosen = [p for (s, f), p in sorted(models.items()) if args.fold == "all" or f == int(args.fold)]
    if not chosen:
        raise CliError(f"no models for fold {args.fold}")
    members = [load_model(p) for p in chosen]
    samples = prepare_samples(ds.bags, ds.graphs)
    fold_label = -1 if args.fold == "all" else int(args.fold)
    lines = [PREDICTION_COLUMNS]
    for pid in sorted(samples):
        s = samples[pid]
        if meta["task"] == "regression":
            risk = ensemble_predict(members, s.graphs, s.stage)
        else:
            risk = float(np.mean([predict_scores(m, "classification", [s])[0] for m in members]))
        lines.append(f"{pid},{fold_label},-1,{risk!r}\n")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "predictions.csv").write_text("".join(lines))
    write_manifest(out, args, inputs={**input_hashes(args.data),
                                      **{str(p.relative_to(run)): _sha256(p) for p in chosen}})
    print(json.dumps({"out": str(out / "predictions.csv"), "n_members": len(members),
                      "n_patients": len(samples)}))


def _explain_graph(model, graph, grid: GridSpec, config: LrpConfig, interval, maps_dir: Path):
    rmap = grid_attribution(model, graph, grid, config)
    iv = interval or DEFAULT_INTERVALS[rmap.target_class]
    norm = normalize(rmap.relevance, iv)
    write_pgm(maps_dir / f"{graph.graph_id}.pgm", raster(graph, norm, grid.stride))
    img_h, img_w = raster(graph, norm, grid.stride).shape
    (maps_dir / f"{graph.graph_id}.json").write_text(json.dumps({
        "graph_id": graph.graph_id, "target_class": rmap.target_class, "interval": list(iv),
        "tile_size_mm": grid.tile_size, "stride_mm": grid.stride, "gamma": config.gamma,
        "origin_mm": graph.xy.min(axis=0).tolist(), "width": img_w, "height": img_h,
        "pixel_mm": grid.stride, "row0": "max_y", "logits": rmap.meta["logits"]},
        indent=2, sort_keys=True))
    return relevance_rows(rmap, graph, norm)


def cmd_explain(args) -> None:
    run = Path(args.run)
    meta, plan = _read_run(run)
    if meta["task"] != "classification":
        raise CliError("explanations are only generated for the classification model")
    ds = _load(args)
    models = _run_dir_models(run)
    seed = args.seed if args.seed is not None else meta["seeds"][0]
    grid = GridSpec(args.tile, args.stride)
    config = LrpConfig(gamma=args.gamma, target_class=args.target_class)
    out = Path(args.out)
    maps_dir = out / "maps"
    maps_dir.mkdir(parents=True, exist_ok=True)

    jobs = []
    for fold in plan.folds:
        if (seed, fold.index) not in models:
            raise CliError(f"run has no model for seed {seed}, fold {fold.index}")
        model = load_model(models[(seed, fold.index)])
        for pid in fold.test:
            for gid in ds.bag(pid).graph_ids:
                jobs.append((gid, model))
    jobs.sort(key=lambda j: j[0])
    interval = _interval(args.interval) if args.interval else None
    if args.threads == 1:
        chunks = [_explain_graph(m, ds.graphs[g], grid, config, interval, maps_dir) for g, m in jobs]
    else:
        chunks = Parallel(n_jobs=args.threads)(
            delayed(_explain_graph)(m, ds.graphs[g], grid, config, interval, maps_dir) for g, m in jobs)
    (out / "relevance.csv").write_text(RELEVANCE_HEADER + "".join(chunks))
    write_manifest(out, args, inputs={**input_hashes(args.data),
                                      **{f"model_seed{seed}_fold{f}": _sha256(p)
                                         for (s, f), p in models.items() if s == seed}})
    print(json.dumps({"out": str(out / "relevance.csv"), "n_graphs": len(jobs)}))


def cmd_aggregate(args) -> None:
    ds = _load(args)
    table = pd.read_csv(args.relevance, dtype={"graph_id": str})
    summaries = cohort_summary(table, ds.bags, ds.phenotype_names, n_iter=args.n_iter, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stats = write_stats(summaries, out / "phenotype_stats.csv")
    phenotype_stats_figure(stats, out / "phenotype_stats.png")
    write_manifest(out, args, inputs={**input_hashes(args.data), "relevance": _sha256(Path(args.relevance))})
    print(stats.to_string(index=False))


def cmd_benchmark(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = run_benchmark(args.nodes, repetitions=args.reps, naive_cap=args.naive_cap,
                          n_phenotypes=args.phenotypes, hidden=args.hidden, k=args.k, seed=args.seed,
                          grid=GridSpec(args.tile, args.stride), methods=args.methods)
    table.to_csv(out / "benchmark.csv", index=False)
    benchmark_figure(table, out / "benchmark.png")
    write_manifest(out, args, extra={"timing_note": "wall-clock; hardware dependent"})
    print(table.to_string(index=False))


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xcg", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        if data:
            sp.add_argument("--data", required=True, help="directory with cells.csv, patients.csv[, phenotypes.csv]")
        sp.add_argument("--k", type=int, default=3, help="KNN neighbours per cell")
        sp.add_argument("--threads", type=int, default=1)
        return sp

    sp = common(sub.add_parser("ingest", help="validate inputs and build the dataset cache"))
    sp.add_argument("--no-cache", action="store_true")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("synth", help="write a synthetic dataset")
    sp.add_argument("--kind", choices=("planted", "circle"), default="planted")
    sp.add_argument("--patients", type=int, default=60)
    sp.add_argument("--signal", type=int, default=2)
    sp.add_argument("--phenotypes", type=int, default=6)
    sp.add_argument("--cells", type=int, default=100)
    sp.add_argument("--graphs-per-patient", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)

    sp = common(sub.add_parser("train", help="nested cross-validated training"))
    sp.add_argument("--task", choices=("regression", "classification"), required=True)
    sp.add_argument("--fuse-stage", action=argparse.BooleanOptionalAction, default=True)
    sp.add_argument("--ensemble", type=int, default=1, help="number of seeds per fold")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--folds", type=int, default=5)
    sp.add_argument("--epochs", type=int, default=50)
    sp.add_argument("--lr-grid", type=_float_list, default=list(LR_GRID))
    sp.add_argument("--batch-size", type=int, default=16)
    sp.add_argument("--hidden", type=int, default=64)
    sp.add_argument("--embed-dim", type=int, default=64)
    sp.add_argument("--blocks", type=int, default=3)
    sp.add_argument("--pool-ratio", type=float, default=0.5)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train)

    sp = common(sub.add_parser("predict", help="ensemble predictions from a run directory"))
    sp.add_argument("--run", required=True)
    sp.add_argument("--fold", default="all", help="fold index or 'all'")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_predict)

    sp = common(sub.add_parser("explain", help="grid LRP heatmaps for a classification run"))
    sp.add_argument("--run", required=True)
    sp.add_argument("--class", dest="target_class", choices=("short", "long", "predicted"), default="predicted")
    sp.add_argument("--tile", type=float, default=0.05)
    sp.add_argument("--stride", type=float, default=0.025)
    sp.add_argument("--gamma", type=float, default=0.1)
    sp.add_argument("--interval", help="lo,hi for normalization; default depends on the class")
    sp.add_argument("--seed", type=int, default=None, help="ensemble member to explain")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_explain)

    sp = common(sub.add_parser("aggregate", help="phenotype medians and permutation tests"))
    sp.add_argument("--relevance", required=True)
    sp.add_argument("--n-iter", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_aggregate)

    sp = common(sub.add_parser("eval", help="C-index / AUROC summary of a run"))
    sp.add_argument("--run", required=True)
    sp.add_argument("--out", help="default: RUN/eval")
    sp.set_defaults(func=cmd_eval)

    sp = common(sub.add_parser("benchmark", help="naive vs sparse LRP runtime sweep"), data=False)
    sp.add_argument("--nodes", type=_int_list, default=[8, 16, 24, 32, 64, 128, 256, 512, 1000, 2000])
    sp.add_argument("--reps", type=int, default=3)
    sp.add_argument("--naive-cap", type=int, default=64)
    sp.add_argument("--methods", type=lambda s: s.split(","), default=list(METHODS))
    sp.add_argument("--phenotypes", type=int, default=17)
    sp.add_argument("--hidden", type=int, default=64)
    sp.add_argument("--tile", type=float, default=0.05)
    sp.add_argument("--stride", type=float, default=0.025)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        json.dump({"error": type(exc).__name__, "message": str(exc), "subcommand": args.command},
                  sys.stderr)
        sys.stderr.write("\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
