"""Pool-based active learning with four query strategies.

Strategies only ever see an :class:`UnlabeledPool`, which carries ids and
symbols but no labels. Labels live in the :class:`SimulatedOracle` and are
revealed only for the instances a strategy selected.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .attribution import attribution_matrix, choose_explanation_class, sampled_shapley
from .classifier import ArchitectureConfig, TrainConfig, initialize, train
from .evaluation import METRIC_NAMES, MetricsReport, confusion, metrics, predict_labels
from .huspm import MiningConfig, RankedPattern, mine_topk, pattern_utilities
from .ingest import partition
from .sequences import Dataset, WindowedInstance, find_occurrences

log = logging.getLogger(__name__)


class StrategyKind(str, Enum):
    RANDOM = "random"
    UNCERTAINTY = "uncertainty"
    SHAP_MAX = "shap_max"
    HUSPM_SHAP = "huspm_shap"


class PoolExhaustedError(ValueError):
    pass


class UnlabeledPool:
    """Ids and symbols of the not-yet-labeled instances, in a fixed order."""

    def __init__(self, ids: Sequence[str], symbols: np.ndarray):
        self._ids = list(ids)
        self._symbols = np.asarray(symbols, dtype=np.int64).reshape(len(self._ids), -1)
        self._index = {id_: i for i, id_ in enumerate(self._ids)}

    @classmethod
    def from_instances(cls, instances: Sequence[WindowedInstance]) -> "UnlabeledPool":
        return cls([i.id for i in instances], np.array([i.symbols for i in instances], dtype=np.int64))

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(self._ids)

    @property
    def symbols(self) -> np.ndarray:
        view = self._symbols.view()
        view.flags.writeable = False
        return view

    def symbols_of(self, id_: str) -> tuple[int, ...]:
        return tuple(int(s) for s in self._symbols[self._index[id_]])

    def remove(self, ids: Sequence[str]) -> None:
        drop = set(ids)
        missing = drop - set(self._index)
        if missing:
            raise KeyError(f"ids not in pool: {sorted(missing)[:5]}")
        keep = [i for i, id_ in enumerate(self._ids) if id_ not in drop]
        self._ids = [self._ids[i] for i in keep]
        self._symbols = self._symbols[keep]
        self._index = {id_: i for i, id_ in enumerate(self._ids)}


class SimulatedOracle:
    """Holds the concealed pool labels and hands them out on request."""

    def __init__(self, labels: dict[str, int]):
        self._labels = dict(labels)
        self.revealed: list[str] = []

    def reveal(self, ids: Sequence[str]) -> list[int]:
        out = []
        for id_ in ids:
            if id_ in self.revealed:
                raise ValueError(f"instance {id_!r} was already labeled")
            out.append(self._labels[id_])
            self.revealed.append(id_)
        return out


@dataclass
class Selection:
    ids: list[str]
    provenance: list[str]
    fill_count: int = 0


def _check_budget(pool: UnlabeledPool, b: int) -> None:
    if b < 0:
        raise ValueError("batch size must be >= 0")
    if b > len(pool):
        raise PoolExhaustedError(f"pool holds {len(pool)} instances, {b} requested")


def score_random(pool: UnlabeledPool, b: int, seed: int) -> Selection:
    _check_budget(pool, b)
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(pool), size=b, replace=False) if b else np.zeros(0, dtype=np.int64)
    ids = [pool.ids[i] for i in picked]
    return Selection(ids, ["random"] * b)


def _top_by_score(pool: UnlabeledPool, keys: np.ndarray, b: int) -> list[str]:
    """Ids of the b smallest keys, ties by id ascending."""
    order = sorted(range(len(pool)), key=lambda i: (keys[i], pool.ids[i]))
    return [pool.ids[i] for i in order[:b]]


def score_uncertainty(model, pool: UnlabeledPool, b: int) -> Selection:
    """Least confident first: smallest |p1 - 0.5|."""
    _check_budget(pool, b)
    if b == 0:
        return Selection([], [])
    p1 = model.predict_proba(pool.symbols)[:, 1]
    return Selection(_top_by_score(pool, np.abs(p1 - 0.5), b), ["uncertainty"] * b)


def shap_max_scores(model, pool: UnlabeledPool, cls: int, background, num_permutations: int = 64,
                    seed: int = 0, absolute: bool = False, threads: int = 1) -> np.ndarray:
    """Per pool instance, the largest (signed, or absolute) sampled Shapley value."""
    symbols = pool.symbols

    def one(i):
        phi = sampled_shapley(model, symbols[i], background, cls, num_permutations, seed=seed + i).values
        return float(np.abs(phi).max() if absolute else phi.max())

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return np.array(list(ex.map(one, range(len(pool)))))
    return np.array([one(i) for i in range(len(pool))])


def score_shap_max(model, pool: UnlabeledPool, b: int, cls: int, background, num_permutations: int = 64,
                   seed: int = 0, absolute: bool = False, threads: int = 1,
                   scores: np.ndarray | None = None) -> Selection:
    _check_budget(pool, b)
    if b == 0:
        return Selection([], [])
    if scores is None:
        scores = shap_max_scores(model, pool, cls, background, num_permutations, seed, absolute, threads)
    return Selection(_top_by_score(pool, -np.asarray(scores, dtype=float), b), ["shap_max"] * b)


def select_huspm_shap(pool: UnlabeledPool, topk: Sequence[RankedPattern], b: int, seed: int = 0) -> Selection:
    """Take instances matching the rank-1 pattern first, then rank 2, and so on.

    Within a rank, instances with more occurrences come first (then by id).
    Any shortfall is filled at random from what is left.
    """
    if not topk:
        raise ValueError("need at least one ranked pattern")
    _check_budget(pool, b)
    chosen: list[str] = []
    provenance: list[str] = []
    taken: set[str] = set()
    for rp in sorted(topk, key=lambda r: r.rank):
        if len(chosen) >= b:
            break
        matches = []
        for i, id_ in enumerate(pool.ids):
            if id_ in taken:
                continue
            count = len(find_occurrences(pool.symbols[i].tolist(), rp.pattern))
            if count:
                matches.append((-count, id_))
        for _, id_ in sorted(matches)[:b - len(chosen)]:
            chosen.append(id_)
            provenance.append(f"rank{rp.rank}:{rp.pattern}")
            taken.add(id_)
    fill = b - len(chosen)
    if fill:
        rest = [id_ for id_ in pool.ids if id_ not in taken]
        rng = np.random.default_rng(seed)
        for i in rng.choice(len(rest), size=fill, replace=False):
            chosen.append(rest[i])
            provenance.append("fill")
    return Selection(chosen, provenance, fill)


# -- experiment loop ---------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    strategy: StrategyKind = StrategyKind.HUSPM_SHAP
    iterations: int = 6
    batch_size: int = 1000
    train_size: int = 2000
    test_size: int = 1000
    pool_size: int = 7000
    arch: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    mining: MiningConfig = field(default_factory=MiningConfig)
    shap_subset_size: int = 200
    background_size: int = 16
    shap_method: str = "auto"
    shap_permutations: int = 64
    shap_max_absolute: bool = False
    class_metric: str = "f1"
    refresh_patterns: bool = True
    init_seed: int = 0
    split_seed: int = 0
    strategy_seed: int = 0
    threads: int = 1

    def validate(self, dataset_size: int | None = None, window_length: int | None = None) -> None:
        StrategyKind(self.strategy)
        if self.iterations < 0 or self.batch_size < 0:
            raise ValueError("iterations and batch_size must be >= 0")
        if self.iterations * self.batch_size > self.pool_size:
            raise ValueError(f"iterations x batch_size = {self.iterations * self.batch_size} "
                             f"exceeds the pool size {self.pool_size}")
        if dataset_size is not None and self.train_size + self.test_size + self.pool_size != dataset_size:
            raise ValueError(f"train+test+pool = {self.train_size + self.test_size + self.pool_size} "
                             f"but the dataset has {dataset_size} instances")
        W = window_length if window_length is not None else self.arch.window_length
        if W < self.mining.max_pattern_length:
            raise ValueError(f"window length {W} is shorter than max_pattern_length {self.mining.max_pattern_length}")
        if self.shap_method not in ("auto", "exact", "sampled"):
            raise ValueError("shap_method must be auto, exact or sampled")
        if self.class_metric not in ("f1", "recall"):
            raise ValueError("class_metric must be f1 or recall")
        if self.shap_subset_size < 1 or self.background_size < 1 or self.shap_permutations < 1:
            raise ValueError("shap_subset_size, background_size and shap_permutations must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class IterationRecord:
    iteration: int
    train_size: int
    pool_size: int
    metrics: MetricsReport
    explained_class: int | None = None
    topk: list[RankedPattern] | None = None
    selection: Selection | None = None


@dataclass
class ExperimentReport:
    config: dict
    records: list[IterationRecord]

    @property
    def strategy(self) -> str:
        return self.config.get("experiment", self.config)["strategy"]

    def best_of_run(self) -> dict:
        """Per-metric best over the AL iterations (the initial model if there were none)."""
        pool = [r for r in self.records if r.iteration > 0] or self.records[:1]
        best = {name: max(getattr(r.metrics, name) for r in pool) for name in METRIC_NAMES}
        best_f1 = max(pool, key=lambda r: (r.metrics.f1, -r.iteration))
        best["best_f1_iteration"] = best_f1.iteration
        return best

    def to_dict(self) -> dict:
        iterations = []
        for r in self.records:
            entry = {"iteration": r.iteration, "train_size": r.train_size, "pool_size": r.pool_size,
                     "metrics": r.metrics.as_dict()}
            if r.explained_class is not None:
                entry["explained_class"] = r.explained_class
            if r.topk is not None:
                entry["topk"] = [{"rank": p.rank, "pattern": str(p.pattern), "utility": p.utility} for p in r.topk]
            if r.selection is not None:
                entry["fill_count"] = r.selection.fill_count
                entry["selection"] = [[i, why] for i, why in zip(r.selection.ids, r.selection.provenance)]
            iterations.append(entry)
        return {"config": self.config, "iterations": iterations, "best_of_run": self.best_of_run()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


def _config_echo(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["strategy"] = StrategyKind(cfg.strategy).value
    return d


def _evaluate(model, x_test, y_test) -> MetricsReport:
    return metrics(confusion(predict_labels(model.predict_proba(x_test)), y_test))


def _fit(cfg: ExperimentConfig, arch: ArchitectureConfig, x, y, iteration: int):
    # Retrain from scratch: fresh parameters every round, same seeds for every strategy.
    model = initialize(arch, cfg.init_seed + iteration)
    model, _ = train(model, (x, y), replace(cfg.training, seed=cfg.training.seed + iteration))
    return model


def _attribution_method(cfg: ExperimentConfig, W: int) -> str:
    if cfg.shap_method != "auto":
        return cfg.shap_method
    return "exact" if W <= 10 else "sampled"


def run_experiment(cfg: ExperimentConfig, dataset: Dataset) -> ExperimentReport:
    W = dataset.window_length
    cfg.validate(len(dataset), W)
    strategy = StrategyKind(cfg.strategy)
    arch = replace(cfg.arch, window_length=W)
    split = partition(dataset, {"train": cfg.train_size, "test": cfg.test_size, "pool": cfg.pool_size},
                      cfg.split_seed)
    insts = dataset.instances
    train_set = [insts[i] for i in split.train]
    x_test = np.array([insts[i].symbols for i in split.test], dtype=np.int64)
    y_test = np.array([insts[i].label for i in split.test], dtype=np.int64)
    pool = UnlabeledPool.from_instances([insts[i] for i in split.pool])
    oracle = SimulatedOracle({insts[i].id: insts[i].label for i in split.pool})
    test_ids = {insts[i].id for i in split.test}

    def arrays():
        return (np.array([i.symbols for i in train_set], dtype=np.int64),
                np.array([i.label for i in train_set], dtype=np.int64))

    model = _fit(cfg, arch, *arrays(), iteration=0)
    current = _evaluate(model, x_test, y_test)
    records = [IterationRecord(0, len(train_set), len(pool), current)]
    static_topk = None

    for it in range(1, cfg.iterations + 1):
        rng = np.random.default_rng([cfg.strategy_seed, it])
        explained = None
        topk = None
        if strategy in (StrategyKind.HUSPM_SHAP, StrategyKind.SHAP_MAX):
            scores = current.per_class_f1 if cfg.class_metric == "f1" else _per_class_recall(model, x_test, y_test)
            explained = choose_explanation_class(scores).explained_class
            bg_idx = rng.choice(len(train_set), size=min(cfg.background_size, len(train_set)), replace=False)
            background = [train_set[i] for i in np.sort(bg_idx)]
        seed_i = int(rng.integers(2 ** 31))

        if strategy is StrategyKind.RANDOM:
            sel = score_random(pool, cfg.batch_size, seed_i)
        elif strategy is StrategyKind.UNCERTAINTY:
            sel = score_uncertainty(model, pool, cfg.batch_size)
        elif strategy is StrategyKind.SHAP_MAX:
            sel = score_shap_max(model, pool, cfg.batch_size, explained, background, cfg.shap_permutations,
                                 seed=seed_i, absolute=cfg.shap_max_absolute, threads=cfg.threads)
        else:
            if cfg.refresh_patterns or static_topk is None:
                sub_idx = np.sort(rng.choice(len(train_set), size=min(cfg.shap_subset_size, len(train_set)),
                                             replace=False))
                subset = [train_set[i] for i in sub_idx]
                matrix = attribution_matrix(model, subset, background, explained, _attribution_method(cfg, W),
                                            cfg.shap_permutations, seed=seed_i, threads=cfg.threads)
                utilities = pattern_utilities(subset, replace(cfg.mining, utility_mode="shap"), matrix=matrix)
                static_topk = mine_topk(utilities, cfg.mining.k)
            topk = static_topk
            sel = select_huspm_shap(pool, topk, cfg.batch_size, seed=seed_i)
            if sel.fill_count:
                log.info("iteration %d: %d of %d picks were random fills", it, sel.fill_count, cfg.batch_size)

        assert not test_ids.intersection(sel.ids)
        labels = oracle.reveal(sel.ids)
        new = [WindowedInstance(id_, pool.symbols_of(id_), y) for id_, y in zip(sel.ids, labels)]
        pool.remove(sel.ids)
        train_set.extend(new)

        model = _fit(cfg, arch, *arrays(), iteration=it)
        current = _evaluate(model, x_test, y_test)
        records.append(IterationRecord(it, len(train_set), len(pool), current, explained, topk, sel))
        log.info("%s iteration %d: train=%d pool=%d f1=%.4f mcc=%.4f", strategy.value, it, len(train_set),
                 len(pool), current.f1, current.mcc)

    return ExperimentReport(_config_echo(cfg), records)


def _per_class_recall(model, x_test, y_test) -> tuple[float, float]:
    cm = confusion(predict_labels(model.predict_proba(x_test)), y_test)
    return metrics(cm.swapped()).recall, metrics(cm).recall


def comparison_table(reports: Sequence[ExperimentReport]) -> str:
    """Best-of-run metrics, one row per metric and one column per strategy."""
    lines = ["metric," + ",".join(r.strategy for r in reports)]
    bests = [r.best_of_run() for r in reports]
    for name in METRIC_NAMES:
        lines.append(name + "," + ",".join(f"{b[name]:.6f}" for b in bests))
    return "\n".join(lines) + "\n"
