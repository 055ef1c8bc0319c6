"""Session parsing, windowing, class rebalancing, splitting and synthetic data."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .sequences import ALPHABET, Dataset, DatasetSplit, Pattern, WindowedInstance, contains

log = logging.getLogger(__name__)

DEFAULT_RULES: dict[str, int] = {
    "view": 1,
    "page_view": 1,
    "pageview": 1,
    "detail": 2,
    "product_detail": 2,
    "add": 3,
    "add_to_cart": 3,
    "remove": 4,
    "remove_from_cart": 4,
}
PURCHASE_ACTIONS = frozenset({"purchase", "buy"})


class UnknownActionError(ValueError):
    def __init__(self, action):
        super().__init__(f"unknown action {action!r}")
        self.action = action


class InsufficientClassError(ValueError):
    pass


@dataclass(frozen=True)
class RawSession:
    session_id: str
    events: tuple
    has_purchase: bool = False

    def __post_init__(self):
        if not self.events:
            raise ValueError(f"session {self.session_id!r} has no events")
        object.__setattr__(self, "events", tuple(self.events))


@dataclass(frozen=True)
class IngestConfig:
    window_length: int = 5
    purchase_ratio: float = 0.10
    dataset_size: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.window_length < 1:
            raise ValueError("window_length must be >= 1")
        if not 0.0 < self.purchase_ratio < 1.0:
            raise ValueError("purchase_ratio must lie in (0, 1)")
        if self.dataset_size < 10:
            raise ValueError("dataset_size must be >= 10")


def symbolize(raw: RawSession, rules: Mapping[str, int] = DEFAULT_RULES) -> tuple[tuple[int, ...], int]:
    """Map events to symbols, dropping purchases; label is 1 iff any purchase occurred."""
    lookup = {k.lower(): v for k, v in rules.items()}
    symbols = []
    label = int(bool(raw.has_purchase))
    for event in raw.events:
        if isinstance(event, (int, np.integer)) and not isinstance(event, bool):
            if int(event) not in ALPHABET:
                raise UnknownActionError(event)
            symbols.append(int(event))
            continue
        if not isinstance(event, str):
            raise UnknownActionError(event)
        name = event.strip().lower()
        if name in PURCHASE_ACTIONS:
            label = 1
        elif name in lookup:
            symbols.append(lookup[name])
        else:
            raise UnknownActionError(event)
    return tuple(symbols), label


def normalize_window(session_id: str, symbols: Sequence[int], label: int, window_length: int) -> WindowedInstance | None:
    """First ``window_length`` symbols of a session, or None when it is too short."""
    if window_length < 1:
        raise ValueError("window_length must be >= 1")
    if len(symbols) < window_length:
        return None
    return WindowedInstance(session_id, tuple(symbols[:window_length]), label)


@dataclass
class WindowingStats:
    accepted: int = 0
    rejected_short: int = 0
    positives: int = 0

    @property
    def positive_ratio(self) -> float:
        return self.positives / self.accepted if self.accepted else 0.0


def window_sessions(sessions: Iterable[RawSession], window_length: int,
                    rules: Mapping[str, int] = DEFAULT_RULES) -> tuple[list[WindowedInstance], WindowingStats]:
    stats = WindowingStats()
    out = []
    for raw in sessions:
        symbols, label = symbolize(raw, rules)
        inst = normalize_window(raw.session_id, symbols, label, window_length)
        if inst is None:
            stats.rejected_short += 1
            continue
        stats.accepted += 1
        stats.positives += inst.label
        out.append(inst)
    return out, stats


def resample_imbalance(instances: Sequence[WindowedInstance], ratio: float, size: int, seed: int) -> Dataset:
    """Draw exactly ``size`` instances, ``floor(ratio * size)`` of them positive, without replacement."""
    n_pos = int(np.floor(ratio * size + 1e-9))
    n_neg = size - n_pos
    pos = [i for i, inst in enumerate(instances) if inst.label == 1]
    neg = [i for i, inst in enumerate(instances) if inst.label == 0]
    if len(pos) < n_pos:
        raise InsufficientClassError(f"insufficient positives: need {n_pos}, have {len(pos)}")
    if len(neg) < n_neg:
        raise InsufficientClassError(f"insufficient negatives: need {n_neg}, have {len(neg)}")
    rng = np.random.default_rng(seed)
    chosen = np.concatenate([rng.choice(pos, size=n_pos, replace=False),
                             rng.choice(neg, size=n_neg, replace=False)]).astype(np.int64)
    chosen = rng.permutation(chosen)
    return Dataset(tuple(instances[i] for i in chosen))


def partition(dataset: Dataset, sizes: Mapping[str, int], seed: int) -> DatasetSplit:
    """Stratified, seed-deterministic train/test/pool split.

    Positives are spread over the parts by largest remainder, so each part's
    positive count is within one of its proportional share.
    """
    try:
        want = {k: int(sizes[k]) for k in ("train", "test", "pool")}
    except KeyError as exc:
        raise ValueError(f"missing split size {exc}") from None
    if any(v < 0 for v in want.values()):
        raise ValueError("split sizes must be non-negative")
    total = len(dataset)
    if sum(want.values()) != total:
        raise ValueError(f"split sizes sum to {sum(want.values())}, dataset has {total} instances")

    labels = dataset.labels
    rng = np.random.default_rng(seed)
    pos = rng.permutation(np.flatnonzero(labels == 1))
    neg = rng.permutation(np.flatnonzero(labels == 0))

    names = ("train", "test", "pool")
    share = {k: want[k] * len(pos) / total if total else 0.0 for k in names}
    n_pos = {k: int(np.floor(share[k])) for k in names}
    leftover = len(pos) - sum(n_pos.values())
    # Largest fractional remainder first; name order breaks ties deterministically.
    for k in sorted(names, key=lambda k: (-(share[k] - n_pos[k]), names.index(k)))[:leftover]:
        n_pos[k] += 1

    parts = {}
    p_at = n_at = 0
    for k in names:
        k_pos = n_pos[k]
        k_neg = want[k] - k_pos
        idx = np.concatenate([pos[p_at:p_at + k_pos], neg[n_at:n_at + k_neg]])
        p_at += k_pos
        n_at += k_neg
        parts[k] = tuple(int(i) for i in np.sort(idx))
    return DatasetSplit(dataset, parts["train"], parts["test"], parts["pool"])


# -- synthetic corpora -------------------------------------------------------

DEFAULT_TRANSITIONS = (
    (0.40, 0.30, 0.20, 0.10),
    (0.30, 0.25, 0.30, 0.15),
    (0.40, 0.30, 0.15, 0.15),
    (0.50, 0.30, 0.15, 0.05),
)
DEFAULT_INITIAL = (0.55, 0.30, 0.10, 0.05)


@dataclass(frozen=True)
class SynthConfig:
    """Markov-chain clickstream generator settings.

    A session's purchase probability is ``base_rate``, raised by ``lift`` when
    the planted pattern occurs within its first ``window_length`` actions.
    """

    transitions: tuple = DEFAULT_TRANSITIONS
    initial: tuple = DEFAULT_INITIAL
    min_length: int = 3
    max_length: int = 20
    base_rate: float = 0.01
    lift: float = 0.9
    planted_pattern: tuple = (2, 3)
    window_length: int = 5
    purchase_ratio: float = 0.10
    dataset_size: int = 10_000
    chunk_size: int = 1000
    max_sessions: int = 2_000_000

    def validate(self):
        t = np.asarray(self.transitions, dtype=float)
        if t.shape != (len(ALPHABET), len(ALPHABET)):
            raise ValueError(f"transition matrix must be {len(ALPHABET)}x{len(ALPHABET)}")
        if np.any(t < 0) or np.any(np.abs(t.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("degenerate transition matrix: rows must be non-negative and sum to 1")
        init = np.asarray(self.initial, dtype=float)
        if init.shape != (len(ALPHABET),) or np.any(init < 0) or abs(init.sum() - 1.0) > 1e-9:
            raise ValueError("initial distribution must be non-negative and sum to 1")
        if not 1 <= self.min_length <= self.max_length:
            raise ValueError("need 1 <= min_length <= max_length")
        if not 0.0 <= self.base_rate <= 1.0 or self.lift < 0:
            raise ValueError("base_rate must lie in [0, 1] and lift must be >= 0")
        if self.dataset_size < 1:
            raise ValueError("dataset_size must be >= 1")
        Pattern(self.planted_pattern)


def generate_sessions(cfg: SynthConfig, n: int, seed: int | np.random.Generator) -> list[RawSession]:
    cfg.validate()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return _generate(cfg, n, rng, start=0)


def _generate(cfg: SynthConfig, n: int, rng: np.random.Generator, start: int) -> list[RawSession]:
    cum_t = np.cumsum(np.asarray(cfg.transitions, dtype=float), axis=1)
    cum_0 = np.cumsum(np.asarray(cfg.initial, dtype=float))
    pattern = tuple(cfg.planted_pattern)
    p_hit = min(1.0, cfg.base_rate + cfg.lift)
    sessions = []
    for i in range(n):
        length = int(rng.integers(cfg.min_length, cfg.max_length + 1))
        u = rng.random(length)
        state = min(int(np.searchsorted(cum_0, u[0], side="right")), 3)
        symbols = [state + 1]
        for t in range(1, length):
            state = min(int(np.searchsorted(cum_t[state], u[t], side="right")), 3)
            symbols.append(state + 1)
        p = p_hit if contains(symbols[:cfg.window_length], pattern) else cfg.base_rate
        sessions.append(RawSession(f"s{start + i:08d}", tuple(symbols), bool(rng.random() < p)))
    return sessions


def generate_synthetic(cfg: SynthConfig, seed: int) -> Dataset:
    """Generate sessions until both classes can fill the requested ratio, then resample."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    n_pos = int(np.floor(cfg.purchase_ratio * cfg.dataset_size + 1e-9))
    n_neg = cfg.dataset_size - n_pos
    instances: list[WindowedInstance] = []
    pos = neg = produced = 0
    while pos < n_pos or neg < n_neg:
        if produced >= cfg.max_sessions:
            raise InsufficientClassError(
                f"generator produced {produced} sessions without reaching {n_pos} positives and {n_neg} negatives")
        batch = _generate(cfg, cfg.chunk_size, rng, start=produced)
        produced += len(batch)
        windowed, stats = window_sessions(batch, cfg.window_length)
        instances.extend(windowed)
        pos += stats.positives
        neg += stats.accepted - stats.positives
    return resample_imbalance(instances, cfg.purchase_ratio, cfg.dataset_size, seed)


def planted_pattern_stats(dataset: Dataset, pattern: Sequence[int]) -> dict:
    hit = np.array([contains(inst.symbols, pattern) for inst in dataset], dtype=bool)
    labels = dataset.labels
    return {
        "pattern": "-".join(map(str, pattern)),
        "instances": len(dataset),
        "with_pattern": int(hit.sum()),
        "purchase_rate_with": float(labels[hit].mean()) if hit.any() else 0.0,
        "purchase_rate_without": float(labels[~hit].mean()) if (~hit).any() else 0.0,
        "purchase_rate": float(labels.mean()) if len(labels) else 0.0,
    }


# -- file formats ------------------------------------------------------------

def parse_session_line(line: str, lineno: int) -> RawSession:
    try:
        rec = json.loads(line)
        events = rec["events"]
        if not isinstance(events, list) or not events:
            raise ValueError("events must be a non-empty list")
        purchase = rec.get("purchase", False)
        if not isinstance(purchase, bool):
            raise ValueError("purchase must be a boolean")
        return RawSession(str(rec["session_id"]), tuple(events), purchase)
    except (ValueError, KeyError, TypeError) as exc:
        raise ValueError(f"line {lineno}: malformed session record ({exc})") from None


def read_sessions(path) -> list[RawSession]:
    sessions = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                sessions.append(parse_session_line(line, lineno))
    if not sessions:
        raise ValueError(f"{path}: no sessions found")
    return sessions


def write_sessions(sessions: Iterable[RawSession], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sessions:
            fh.write(json.dumps({"session_id": s.session_id, "events": list(s.events),
                                 "purchase": s.has_purchase}) + "\n")


def dataset_to_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for inst in dataset:
        w.writerow([inst.id, inst.label, *inst.symbols])
    return buf.getvalue()


def write_dataset(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(dataset_to_csv(dataset))


def read_dataset(path) -> Dataset:
    """Read ``id,label,s1..sW`` rows; a leading ``id,label,...`` header is skipped."""
    instances = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (lineno == 1 and row[0].strip().lower() == "id"):
                continue
            try:
                instances.append(WindowedInstance(row[0], tuple(int(x) for x in row[2:]), int(row[1])))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    if not instances:
        raise ValueError(f"{path}: empty dataset")
    return Dataset(tuple(instances))
