"""Command-line entry point: search, train, eval, gradcheck, report."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import RunConfig, parse_config
from .errors import ConfigurationError, EdgenasError
from .gradcheck import check_all_ops
from .graphs import (load_edge_list, load_node_features, load_node_labels,
                     load_triples)
from .metrics import MetricsReport
from .pipelines import (TaskRun, load_graph_collection,
                        prepare_graph_classification, prepare_lp_homogeneous,
                        prepare_lp_kg, prepare_node_classification,
                        run_graph_classification, run_lp_homogeneous,
                        run_lp_kg, run_node_classification)
from .search import DerivedArchitecture, retrain
from .supernet import build_supernet

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "EDGENAS_OUTPUT_ROOT"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _output_root(cfg: RunConfig) -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, cfg.output_dir))


def _dataset_name(cfg: RunConfig) -> str:
    return Path(cfg.dataset).stem or cfg.dataset


def _load_nc_graph(cfg: RunConfig):
    graph = load_edge_list(cfg.dataset)
    if cfg.features is None or cfg.labels is None:
        raise ConfigurationError(
            "task 'nc' needs both 'features' and 'labels' paths")
    graph.features = load_node_features(cfg.features, graph.node_count)
    graph.labels = load_node_labels(cfg.labels, graph.node_count)
    return graph


def _load_kg(cfg: RunConfig):
    root = Path(cfg.dataset)
    if not root.is_dir():
        raise ConfigurationError(
            f"task 'kg' expects a directory with train/valid/test TSVs, "
            f"got {root}")
    train = load_triples(root / "train.txt")
    valid = load_triples(root / "valid.txt", train.entity_vocab,
                         train.relation_vocab)
    test = load_triples(root / "test.txt", train.entity_vocab,
                        train.relation_vocab)
    return train, valid.triples, test.triples


def _run_one_seed(cfg: RunConfig, seed: int) -> TaskRun:
    """Full pipeline (search + retrain + eval) for a single seed."""
    common = dict(dataset=_dataset_name(cfg), seed=seed, dims=cfg.dims,
                  layer_count=cfg.layer_count, search_epochs=cfg.search_epochs,
                  retrain_epochs=cfg.retrain_epochs, lr=cfg.lr,
                  dropout=cfg.dropout, tau0=cfg.tau0, tau_final=cfg.tau_final,
                  patience=cfg.patience, ablation=tuple(cfg.ablation))
    if cfg.task == "lp_homo":
        graph = load_edge_list(cfg.dataset)
        return run_lp_homogeneous(graph, batch_size=cfg.batch_size,
                                  hops=cfg.hops, d_max=cfg.d_max, **common)
    if cfg.task == "nc":
        return run_node_classification(_load_nc_graph(cfg), **common)
    if cfg.task == "gc":
        graphs, labels = load_graph_collection(cfg.dataset)
        return run_graph_classification(graphs, labels,
                                        batch_size=cfg.batch_size,
                                        degree_cap=cfg.degree_cap, **common)
    train, valid, test = _load_kg(cfg)
    return run_lp_kg(train, valid, test, batch_size=cfg.batch_size, **common)


def _prepare(cfg: RunConfig, seed: int):
    """Data and adapter for train/eval of an already derived architecture."""
    if cfg.task == "lp_homo":
        graph = load_edge_list(cfg.dataset)
        adapter, net_kw, _ = prepare_lp_homogeneous(
            graph, seed=seed, batch_size=cfg.batch_size, hops=cfg.hops,
            d_max=cfg.d_max)
        return adapter, net_kw
    if cfg.task == "nc":
        return prepare_node_classification(_load_nc_graph(cfg), seed=seed)
    if cfg.task == "gc":
        graphs, labels = load_graph_collection(cfg.dataset)
        return prepare_graph_classification(graphs, labels, seed=seed,
                                            batch_size=cfg.batch_size,
                                            degree_cap=cfg.degree_cap)
    train, valid, test = _load_kg(cfg)
    return prepare_lp_kg(train, valid, test, batch_size=cfg.batch_size)


def _metric_dict(value) -> dict[str, float]:
    if isinstance(value, dict):
        return {k: float(v) for k, v in value.items()}
    return {"score": float(value)}


def _write_seed_dir(root: Path, cfg: RunConfig, run: TaskRun) -> Path:
    seed_dir = root / f"seed_{run.seed}"
    seed_dir.mkdir(parents=True, exist_ok=True)
    (seed_dir / "config.toml").write_text(cfg.to_toml())
    (seed_dir / "search_log.jsonl").write_text(run.search_log.to_jsonl())
    (seed_dir / "architecture.json").write_text(run.derived.to_json())
    (seed_dir / "metrics.json").write_text(json.dumps(
        {"task": run.task, "dataset": run.dataset, "seed": run.seed,
         "metrics": run.metrics, "timings": run.timings},
        indent=2, sort_keys=True) + "\n")
    lines = ["epoch,val_metric"]
    lines += [f"{i},{v!r}" for i, v in enumerate(run.retrain_curve)]
    (seed_dir / "retrain_curve.csv").write_text("\n".join(lines) + "\n")
    return seed_dir


def _aggregate(root: Path, cfg: RunConfig, runs: list[TaskRun]) -> MetricsReport:
    report = MetricsReport(task=cfg.task, dataset=_dataset_name(cfg))
    for run in runs:
        for metric, value in run.metrics.items():
            report.record(metric, run.seed, value)
    (root / "report.json").write_text(report.to_json())
    (root / "report.csv").write_text(report.to_csv())
    return report


def cmd_search(args) -> int:
    cfg = _config_from_args(args)
    root = _output_root(cfg) / f"{cfg.task}_{_dataset_name(cfg)}"
    root.mkdir(parents=True, exist_ok=True)
    if cfg.workers > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            runs = list(pool.map(_run_one_seed, [cfg] * len(cfg.seeds),
                                 cfg.seeds))
    else:
        runs = [_run_one_seed(cfg, seed) for seed in cfg.seeds]
    for run in runs:
        seed_dir = _write_seed_dir(root, cfg, run)
        log.info("seed %d done: %s", run.seed, run.metrics)
        print(f"seed {run.seed}: " + " ".join(
            f"{k}={v:.4f}" for k, v in sorted(run.metrics.items())))
        print(f"  artifacts: {seed_dir}")
    report = _aggregate(root, cfg, runs)
    for metric in sorted({m for r in runs for m in r.metrics}):
        print(f"{metric}: mean={report.mean(metric):.4f} "
              f"std={report.std(metric):.4f} over {report.run_count(metric)} seeds")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    derived = DerivedArchitecture.from_json(
        _read_file(args.architecture, "architecture"))
    seed = cfg.seeds[0]
    adapter, net_kw = _prepare(cfg, seed)
    net = build_supernet(cfg.task, cfg.dims, cfg.layer_count,
                         tuple(cfg.ablation), seed=[seed, 8], **net_kw)
    curve, best_val = retrain(net, derived, adapter, epochs=cfg.retrain_epochs,
                              lr=cfg.lr, seed=seed, dropout=cfg.dropout,
                              patience=cfg.patience)
    out = Path(args.weights)
    out.parent.mkdir(parents=True, exist_ok=True)
    net.save_weights(out)
    metrics = _metric_dict(adapter.evaluate(net, derived.selection(net.slots)))
    print(f"best validation metric: {best_val:.4f} "
          f"after {len(curve)} epochs")
    for k, v in sorted(metrics.items()):
        print(f"{k}: {v:.4f}")
    print(f"weights: {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    derived = DerivedArchitecture.from_json(
        _read_file(args.architecture, "architecture"))
    seed = cfg.seeds[0]
    adapter, net_kw = _prepare(cfg, seed)
    net = build_supernet(cfg.task, cfg.dims, cfg.layer_count,
                         tuple(cfg.ablation), seed=[seed, 8], **net_kw)
    net.load_weights(args.weights)
    metrics = _metric_dict(adapter.evaluate(net, derived.selection(net.slots)))
    for k, v in sorted(metrics.items()):
        print(f"{k}: {v:.4f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    worst = check_all_ops(seed=args.seed, eps=1e-6)
    failed = {name: err for name, err in worst.items() if err > args.tol}
    for name in sorted(worst):
        status = "FAIL" if name in failed else "ok"
        print(f"{name:24s} {worst[name]:.3e}  {status}")
    overall = max(worst.values())
    print(f"max rel err {overall:.3e} "
          f"({'<=' if overall <= args.tol else '>'} {args.tol:g})")
    return EXIT_OK if not failed else EXIT_RUNTIME


def cmd_report(args) -> int:
    root = Path(args.run_dir)
    if not root.is_dir():
        raise ConfigurationError(f"run directory not found: {root}")
    seed_files = sorted(root.glob("seed_*/metrics.json"))
    if not seed_files:
        raise ConfigurationError(f"no seed_*/metrics.json under {root}")
    task = dataset = None
    report = None
    for path in seed_files:
        blob = json.loads(path.read_text())
        if report is None:
            task, dataset = blob["task"], blob["dataset"]
            report = MetricsReport(task=task, dataset=dataset)
        for metric, value in blob["metrics"].items():
            report.record(metric, blob["seed"], value)
    (root / "report.json").write_text(report.to_json())
    (root / "report.csv").write_text(report.to_csv())
    for metric in sorted(report.per_seed):
        print(f"{metric}: mean={report.mean(metric):.4f} "
              f"std={report.std(metric):.4f} over {report.run_count(metric)} seeds")
    return EXIT_OK


def _read_file(path, what: str) -> str:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"{what} file not found: {path}")
    return path.read_text()


def _config_from_args(args) -> RunConfig:
    overrides = {key: getattr(args, key, None)
                 for key in ("dims", "layer_count", "lr", "batch_size",
                             "dropout", "search_epochs", "retrain_epochs",
                             "workers", "output_dir")}
    if getattr(args, "seed", None) is not None:
        overrides["seeds"] = args.seed
    if getattr(args, "ablation", None) is not None:
        overrides["ablation"] = args.ablation
    return parse_config(args.config, overrides)


def _add_config_flags(sub):
    sub.add_argument("--config", required=True, help="TOML run configuration")
    sub.add_argument("--dims", type=int)
    sub.add_argument("--layer-count", dest="layer_count", type=int)
    sub.add_argument("--lr", type=float)
    sub.add_argument("--batch-size", dest="batch_size", type=int)
    sub.add_argument("--dropout", type=float)
    sub.add_argument("--search-epochs", dest="search_epochs", type=int)
    sub.add_argument("--retrain-epochs", dest="retrain_epochs", type=int)
    sub.add_argument("--workers", type=int)
    sub.add_argument("--output-dir", dest="output_dir")
    sub.add_argument("--seed", type=int, action="append",
                     help="replace the configured seed list (repeatable)")
    sub.add_argument("--ablation", action="append",
                     help="enable an ablation flag (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgenas",
        description="Differentiable architecture search for graph models")
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("search", help="search, retrain, and score per seed")
    _add_config_flags(p)
    p.set_defaults(func=cmd_search)

    p = subs.add_parser("train", help="retrain a derived architecture")
    _add_config_flags(p)
    p.add_argument("--architecture", required=True,
                   help="architecture JSON from a search run")
    p.add_argument("--weights", required=True, help="output weights path")
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("eval", help="score saved weights on the test split")
    _add_config_flags(p)
    p.add_argument("--architecture", required=True)
    p.add_argument("--weights", required=True, help="weights npz to load")
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("gradcheck",
                        help="finite-difference check of every operation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-3)
    p.set_defaults(func=cmd_gradcheck)

    p = subs.add_parser("report", help="aggregate per-seed metrics")
    p.add_argument("--run-dir", dest="run_dir", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EdgenasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
