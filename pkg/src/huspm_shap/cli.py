"""Command-line entry point: ``huspm-shap <command> [options]``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import ingest
from .active_learning import StrategyKind, comparison_table, run_experiment
from .attribution import AttributionMatrix, attribution_matrix, choose_explanation_class
from .classifier import RNNClassifier, initialize, train
from .config import ConfigError, RunConfig
from .evaluation import evaluate_probs, metrics_csv
from .huspm import mine_threshold, mine_topk, mining_report, pattern_utilities
from .sequences import Dataset, UtilityTable

log = logging.getLogger("huspm_shap")


class CLIError(Exception):
    pass


def _print(*args):
    print(*args, flush=True)


def _timestamp() -> str:
    return datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")


def _write_new(path: Path, text: str) -> None:
    """Create ``path``; never overwrite an existing report."""
    with open(path, "x", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_utility_table(path) -> UtilityTable:
    values = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].strip().lower() == "symbol":
                continue
            try:
                values[int(row[0])] = float(row[1].strip().lstrip("$"))
            except (ValueError, IndexError):
                raise CLIError(f"{path}: line {lineno}: expected 'symbol,utility'") from None
    try:
        return UtilityTable(values)
    except ValueError as exc:
        raise CLIError(f"{path}: {exc}") from None


def _seeded_subset(dataset: Dataset, size: int, seed: int) -> Dataset:
    if size >= len(dataset):
        return dataset
    rng = np.random.default_rng(seed)
    return dataset.subset(np.sort(rng.choice(len(dataset), size=size, replace=False)))


def _explained_class(cfg: RunConfig, model, dataset: Dataset) -> int:
    if cfg.explained_class != "auto":
        return int(cfg.explained_class)
    report = evaluate_probs(model.predict_proba(dataset.symbol_matrix()), dataset.labels)
    return choose_explanation_class(report.per_class_f1).explained_class


def _attributions(cfg: RunConfig, model, dataset: Dataset, background_path=None):
    subset = _seeded_subset(dataset, cfg.shap_subset_size, cfg.attribution_seed)
    if background_path:
        background = list(ingest.read_dataset(background_path))
    else:
        background = list(_seeded_subset(dataset, cfg.background_size, cfg.attribution_seed + 1))
    cls = _explained_class(cfg, model, dataset)
    method = cfg.shap_method if cfg.shap_method != "auto" else ("exact" if dataset.window_length <= 10 else "sampled")
    matrix = attribution_matrix(model, list(subset), background, cls, method, cfg.shap_permutations,
                                seed=cfg.attribution_seed, threads=cfg.threads)
    return subset, matrix


# -- commands ------------------------------------------------------------------

def cmd_ingest(args, cfg: RunConfig) -> int:
    try:
        sessions = ingest.read_sessions(args.input)
        instances, stats = ingest.window_sessions(sessions, cfg.window_length)
    except ingest.UnknownActionError as exc:
        raise CLIError(str(exc)) from None
    except ValueError as exc:
        raise CLIError(str(exc)) from None
    if not instances:
        raise CLIError(f"no session is at least {cfg.window_length} actions long")
    ingest.write_dataset(Dataset(tuple(instances)), args.output)
    _print(f"accepted={stats.accepted} rejected_short={stats.rejected_short} "
           f"positives={stats.positives} positive_ratio={stats.positive_ratio:.4f}")
    return 0


def cmd_synth(args, cfg: RunConfig) -> int:
    synth = cfg.synth_config()
    dataset = ingest.generate_synthetic(synth, cfg.data_seed)
    ingest.write_dataset(dataset, args.output)
    stats = ingest.planted_pattern_stats(dataset, synth.planted_pattern)
    _print(" ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in stats.items()))
    if args.sessions_out:
        ingest.write_sessions(ingest.generate_sessions(synth, args.raw_sessions, cfg.data_seed), args.sessions_out)
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    dataset = ingest.read_dataset(args.dataset)
    if dataset.window_length != cfg.window_length:
        raise CLIError(f"dataset window {dataset.window_length} differs from window_length {cfg.window_length}")
    model = initialize(cfg.arch_config(), cfg.init_seed)
    model, history = train(model, list(dataset), cfg.train_config())
    model.save(args.model_out)
    _print(f"trained on {len(dataset)} instances: loss {history[0]:.4f} -> {history[-1]:.4f}")
    if args.test:
        test = ingest.read_dataset(args.test)
        report = evaluate_probs(model.predict_proba(test.symbol_matrix()), test.labels)
        _print(" ".join(f"{k}={v:.4f}" for k, v in report.as_dict().items() if k != "degenerate"))
    return 0


def cmd_explain(args, cfg: RunConfig) -> int:
    model = RNNClassifier.load(args.model)
    dataset = ingest.read_dataset(args.dataset)
    subset, matrix = _attributions(cfg, model, dataset, args.background)
    Path(args.output).write_text(matrix.to_csv(), encoding="utf-8")
    _print(f"explained {len(subset)} instances for class {matrix.explained_class}")
    return 0


def cmd_mine(args, cfg: RunConfig) -> int:
    dataset = ingest.read_dataset(args.dataset)
    mining = cfg.mining_config()
    table = matrix = None
    db = list(dataset)
    if mining.utility_mode == "static":
        if not args.utility_table:
            raise CLIError("static utility mode needs --utility-table")
        table = read_utility_table(args.utility_table)
    elif args.attributions:
        matrix = AttributionMatrix.from_csv(Path(args.attributions).read_text(encoding="utf-8"))
        by_id = {inst.id: inst for inst in dataset}
        missing = [i for i in matrix.ids if i not in by_id]
        if missing:
            raise CLIError(f"attribution ids not found in dataset: {missing[:5]}")
        db = [by_id[i] for i in matrix.ids]
    elif args.model:
        subset, matrix = _attributions(cfg, RNNClassifier.load(args.model), dataset)
        db = list(subset)
    else:
        raise CLIError("shap utility mode needs --attributions or --model")

    if mining.threshold is not None:
        found = mine_threshold(db, table, mining.threshold, mining, matrix=matrix)
        ranked = mine_topk(found, len(found)) if found else []
    else:
        ranked = mine_topk(pattern_utilities(db, mining, table=table, matrix=matrix), mining.k)
    text = mining_report(ranked)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_run(args, cfg: RunConfig) -> int:
    strategies = [s.value for s in StrategyKind] if args.all_strategies else [cfg.strategy]
    exp_cfgs = [cfg.experiment_config(s) for s in strategies]
    if args.dataset:
        dataset = ingest.read_dataset(args.dataset)
        if cfg.resample:
            dataset = ingest.resample_imbalance(list(dataset), cfg.purchase_ratio, cfg.dataset_size, cfg.data_seed)
    else:
        dataset = ingest.generate_synthetic(cfg.synth_config(), cfg.data_seed)
    for e in exp_cfgs:
        try:
            e.validate(len(dataset), dataset.window_length)
        except ValueError as exc:
            raise CLIError(str(exc)) from None

    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{cfg.digest()}-{_timestamp()}"
    reports = []
    for e in exp_cfgs:
        report = run_experiment(e, dataset)
        report.config = {"run": cfg.as_dict(), "experiment": report.config}
        reports.append(report)
        history = [(r.iteration, r.metrics) for r in report.records]
        _write_new(out_dir / f"{report.strategy}-{stem}.json", report.to_json())
        _write_new(out_dir / f"{report.strategy}-{stem}.metrics.csv", metrics_csv(history))
        best = report.best_of_run()
        _print(f"{report.strategy}: best f1={best['f1']:.4f} mcc={best['mcc']:.4f} "
               f"(iteration {best['best_f1_iteration']})")
    if len(reports) > 1:
        _write_new(out_dir / f"comparison-{stem}.csv", comparison_table(reports))
    _print(f"reports written to {out_dir} with suffix {stem}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="huspm-shap", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="sessions (JSON lines) -> windowed dataset CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic windowed dataset")
    p.add_argument("--output", required=True)
    p.add_argument("--sessions-out", help="also write raw sessions as JSON lines")
    p.add_argument("--raw-sessions", type=int, default=1000, help="number of raw sessions for --sessions-out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train the reference classifier")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--test")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", parents=[common], help="export positional Shapley values")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--background")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("mine", parents=[common], help="mine high-utility patterns")
    p.add_argument("--dataset", required=True)
    p.add_argument("--utility-table")
    p.add_argument("--attributions")
    p.add_argument("--model")
    p.add_argument("--output")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("run", parents=[common], help="run active-learning experiments")
    p.add_argument("--dataset")
    p.add_argument("--all-strategies", action="store_true")
    p.add_argument("--output-dir", default="reports")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config, args.set)
        return args.func(args, cfg)
    except (CLIError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
