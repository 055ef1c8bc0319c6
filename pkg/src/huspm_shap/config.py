"""Flat run configuration shared by every CLI command.

A config file is ``key = value`` text grouped in sections; the sections are
for readability only and all keys live in one namespace. Command-line
``--set key=value`` pairs override file values.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, fields

from .active_learning import ExperimentConfig, StrategyKind
from .classifier import ArchitectureConfig, TrainConfig
from .huspm import MiningConfig
from .ingest import DEFAULT_INITIAL, DEFAULT_TRANSITIONS, SynthConfig
from .sequences import Pattern

SECTIONS = {
    "data": ("window_length", "purchase_ratio", "dataset_size", "resample", "data_seed"),
    "synth": ("synth_min_length", "synth_max_length", "synth_base_rate", "synth_lift", "synth_pattern",
              "synth_transitions", "synth_initial"),
    "model": ("embedding_dim", "hidden_dim", "init_seed"),
    "train": ("epochs", "batch_size", "learning_rate", "momentum", "train_seed", "class_weighting"),
    "mining": ("max_pattern_length", "k", "threshold", "utility_mode", "occurrence_mode", "threshold_scope",
               "inclusive_threshold"),
    "attribution": ("shap_subset_size", "background_size", "shap_method", "shap_permutations",
                    "shap_max_absolute", "class_metric", "explained_class", "attribution_seed"),
    "experiment": ("strategy", "iterations", "query_batch_size", "train_size", "test_size", "pool_size",
                   "split_seed", "strategy_seed", "refresh_patterns", "threads"),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # data
    window_length: int = 5
    purchase_ratio: float = 0.10
    dataset_size: int = 10_000
    resample: bool = True
    data_seed: int = 0
    # synthetic generator
    synth_min_length: int = 3
    synth_max_length: int = 20
    synth_base_rate: float = 0.01
    synth_lift: float = 0.9
    synth_pattern: str = "2-3"
    synth_transitions: str = ""   # rows split by ';', entries by ','; empty = built-in chain
    synth_initial: str = ""
    # classifier
    embedding_dim: int = 8
    hidden_dim: int = 16
    init_seed: int = 0
    epochs: int = 40
    batch_size: int = 32
    learning_rate: float = 0.3
    momentum: float = 0.0
    train_seed: int = 0
    class_weighting: typing.Optional[float] = None
    # mining
    max_pattern_length: int = 3
    k: int = 5
    threshold: typing.Optional[float] = None
    utility_mode: str = "shap"
    occurrence_mode: str = "all"
    threshold_scope: str = "per-sequence-max"
    inclusive_threshold: bool = False
    # attribution
    shap_subset_size: int = 200
    background_size: int = 16
    shap_method: str = "auto"
    shap_permutations: int = 64
    shap_max_absolute: bool = False
    class_metric: str = "f1"
    explained_class: str = "auto"
    attribution_seed: int = 0
    # experiment
    strategy: str = "huspm_shap"
    iterations: int = 6
    query_batch_size: int = 1000
    train_size: int = 2000
    test_size: int = 1000
    pool_size: int = 7000
    split_seed: int = 0
    strategy_seed: int = 0
    refresh_patterns: bool = True
    threads: int = 1

    # -- construction --------------------------------------------------------
    @classmethod
    def from_mapping(cls, values: typing.Mapping[str, str | object]) -> "RunConfig":
        hints = typing.get_type_hints(cls)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        parsed = {k: _coerce(k, v, hints[k]) for k, v in values.items()}
        cfg = cls(**parsed)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path=None, overrides: typing.Sequence[str] = ()) -> "RunConfig":
        values: dict[str, str] = {}
        if path is not None:
            values.update(read_config_file(path))
        for item in overrides:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"override {item!r} is not key=value")
            values[key.strip()] = value.strip()
        return cls.from_mapping(values)

    def replace(self, **changes) -> "RunConfig":
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def to_text(self) -> str:
        d = self.as_dict()
        out = []
        for section, keys in SECTIONS.items():
            out.append(f"[{section}]")
            for k in keys:
                v = d[k]
                out.append(f"{k} = {'none' if v is None else str(v).lower() if isinstance(v, bool) else v}")
            out.append("")
        return "\n".join(out)

    # -- validation ----------------------------------------------------------
    def validate(self) -> None:
        try:
            self.mining_config()
            self.arch_config()
            self.train_config()
            self.synth_config().validate()
            StrategyKind(self.strategy)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.explained_class not in ("auto", "0", "1"):
            raise ConfigError("explained_class must be auto, 0 or 1")
        if not 0.0 < self.purchase_ratio < 1.0:
            raise ConfigError("purchase_ratio must lie in (0, 1)")
        if self.window_length < self.max_pattern_length:
            raise ConfigError(f"window_length {self.window_length} < max_pattern_length {self.max_pattern_length}")
        if self.iterations * self.query_batch_size > self.pool_size:
            raise ConfigError(f"iterations x query_batch_size = {self.iterations * self.query_batch_size} "
                              f"exceeds pool_size {self.pool_size}")
        if self.train_size + self.test_size + self.pool_size != self.dataset_size:
            raise ConfigError(f"train_size + test_size + pool_size = "
                              f"{self.train_size + self.test_size + self.pool_size}, dataset_size is {self.dataset_size}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        try:
            self.experiment_config().validate(self.dataset_size, self.window_length)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    # -- views onto module configs ------------------------------------------
    def arch_config(self) -> ArchitectureConfig:
        return ArchitectureConfig(self.embedding_dim, self.hidden_dim, self.window_length)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.epochs, self.batch_size, self.learning_rate, self.momentum, self.train_seed,
                           self.class_weighting)

    def mining_config(self) -> MiningConfig:
        return MiningConfig(self.max_pattern_length, self.k, self.threshold, self.utility_mode,
                            self.occurrence_mode, self.threshold_scope, self.inclusive_threshold)

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            transitions=_matrix(self.synth_transitions) if self.synth_transitions else DEFAULT_TRANSITIONS,
            initial=tuple(float(v) for v in self.synth_initial.split(",")) if self.synth_initial else DEFAULT_INITIAL,
            min_length=self.synth_min_length,
            max_length=self.synth_max_length,
            base_rate=self.synth_base_rate,
            lift=self.synth_lift,
            planted_pattern=tuple(Pattern.parse(self.synth_pattern)),
            window_length=self.window_length,
            purchase_ratio=self.purchase_ratio,
            dataset_size=self.dataset_size,
        )

    def experiment_config(self, strategy: str | None = None) -> ExperimentConfig:
        return ExperimentConfig(
            strategy=StrategyKind(strategy or self.strategy),
            iterations=self.iterations,
            batch_size=self.query_batch_size,
            train_size=self.train_size,
            test_size=self.test_size,
            pool_size=self.pool_size,
            arch=self.arch_config(),
            training=self.train_config(),
            mining=self.mining_config(),
            shap_subset_size=self.shap_subset_size,
            background_size=self.background_size,
            shap_method=self.shap_method,
            shap_permutations=self.shap_permutations,
            shap_max_absolute=self.shap_max_absolute,
            class_metric=self.class_metric,
            refresh_patterns=self.refresh_patterns,
            init_seed=self.init_seed,
            split_seed=self.split_seed,
            strategy_seed=self.strategy_seed,
            threads=self.threads,
        )


def read_config_file(path) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        if not text.lstrip().startswith("["):
            text = "[run]\n" + text
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    values: dict[str, str] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            if key in values:
                raise ConfigError(f"{path}: key {key!r} set in more than one section")
            values[key] = value
    return values


def _coerce(key: str, value, kind):
    if not isinstance(value, str):
        return value
    text = value.strip()
    optional = typing.get_origin(kind) is typing.Union and type(None) in typing.get_args(kind)
    if optional:
        if text.lower() in ("none", "null", ""):
            return None
        kind = next(a for a in typing.get_args(kind) if a is not type(None))
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text.replace("_", ""))
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot read {value!r} as {kind.__name__}") from None


def _matrix(text: str) -> tuple:
    return tuple(tuple(float(v) for v in row.split(",")) for row in text.split(";") if row.strip())
