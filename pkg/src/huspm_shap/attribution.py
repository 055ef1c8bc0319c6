"""Positional Shapley values for the purchase classifier and their aggregation.

The value of a coalition S of positions is the mean, over a background set,
of the explained-class probability of a hybrid sequence that takes the
instance's symbols at S and the background symbols everywhere else. No
padding symbol is ever introduced.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .sequences import Pattern, WindowedInstance, find_occurrences

MAX_EXACT_WINDOW = 16


@dataclass(frozen=True)
class AttributionVector:
    values: np.ndarray
    baseline: float
    explained_class: int
    instance_id: str = ""
    std_error: np.ndarray | None = None

    @property
    def total(self) -> float:
        return float(self.baseline + self.values.sum())


@dataclass(frozen=True)
class AttributionMatrix:
    ids: tuple[str, ...]
    values: np.ndarray          # (n, W)
    baselines: np.ndarray       # (n,)
    explained_class: int

    def __post_init__(self):
        if self.values.ndim != 2 or len(self.ids) != self.values.shape[0] or len(self.baselines) != len(self.ids):
            raise ValueError("attribution matrix rows, ids and baselines must align")

    @classmethod
    def from_vectors(cls, vectors: Sequence[AttributionVector]) -> "AttributionMatrix":
        classes = {v.explained_class for v in vectors}
        if len(classes) > 1:
            raise ValueError("attribution rows explain different classes")
        if not vectors:
            raise ValueError("no attribution rows")
        return cls(tuple(v.instance_id for v in vectors), np.vstack([v.values for v in vectors]),
                   np.array([v.baseline for v in vectors]), classes.pop())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for i, row in enumerate(self.values):
            w.writerow([self.ids[i], self.explained_class, repr(float(self.baselines[i])),
                        *(repr(float(v)) for v in row)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "AttributionMatrix":
        ids, classes, base, rows = [], set(), [], []
        for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
            if not row:
                continue
            try:
                ids.append(row[0])
                classes.add(int(row[1]))
                base.append(float(row[2]))
                rows.append([float(v) for v in row[3:]])
            except (ValueError, IndexError) as exc:
                raise ValueError(f"attribution line {lineno}: {exc}") from None
        if not rows:
            raise ValueError("empty attribution file")
        if len(classes) != 1:
            raise ValueError("attribution file mixes explained classes")
        return cls(tuple(ids), np.array(rows, dtype=float), np.array(base), classes.pop())


@dataclass(frozen=True)
class ClassChoice:
    explained_class: int
    per_class_scores: tuple[float, float]


def _background_matrix(background) -> np.ndarray:
    bg = np.array([b.symbols if isinstance(b, WindowedInstance) else tuple(b) for b in background], dtype=np.int64)
    if bg.size == 0:
        raise ValueError("background set is empty")
    return bg


def _symbols(instance) -> np.ndarray:
    return np.asarray(instance.symbols if isinstance(instance, WindowedInstance) else instance, dtype=np.int64)


def baseline_value(model, background, cls: int) -> float:
    """Mean explained-class probability over the background set."""
    bg = _background_matrix(background)
    return float(model.predict_proba(bg)[:, cls].mean())


def coalition_values(model, x: np.ndarray, bg: np.ndarray, masks: np.ndarray, cls: int) -> np.ndarray:
    """v(S) for every boolean row of ``masks`` (shape (m, W))."""
    m, W = masks.shape
    hybrid = np.where(masks[:, None, :], x[None, None, :], bg[None, :, :])  # (m, B, W)
    probs = model.predict_proba(hybrid.reshape(-1, W))[:, cls]
    return probs.reshape(m, len(bg)).mean(axis=1)


def exact_shapley(model, instance, background, cls: int) -> AttributionVector:
    """Shapley values by enumerating every coalition of positions (2^W coalition values)."""
    x = _symbols(instance)
    W = len(x)
    if W > MAX_EXACT_WINDOW:
        raise ValueError(f"window {W} is too long for exact enumeration (max {MAX_EXACT_WINDOW}); "
                         "use sampled_shapley instead")
    bg = _background_matrix(background)
    codes = np.arange(2 ** W)
    masks = ((codes[:, None] >> np.arange(W)[None, :]) & 1).astype(bool)
    v = coalition_values(model, x, bg, masks, cls)
    sizes = masks.sum(axis=1)
    weight = np.array([math.factorial(s) * math.factorial(W - s - 1) / math.factorial(W) if s < W else 0.0
                       for s in range(W + 1)])
    phi = np.zeros(W)
    for j in range(W):
        without = codes[~masks[:, j]]
        phi[j] = np.sum(weight[sizes[without]] * (v[without | (1 << j)] - v[without]))
    return AttributionVector(phi, float(v[0]), cls, getattr(instance, "id", ""))


def sampled_shapley(model, instance, background, cls: int, num_permutations: int = 64,
                    seed: int = 0, exhaustive: bool = False) -> AttributionVector:
    """Monte-Carlo permutation estimate of the Shapley values.

    Each permutation adds positions one at a time and credits each position
    with its marginal change in coalition value. ``exhaustive=True`` walks all
    W! orderings instead, which reproduces the exact values.
    """
    x = _symbols(instance)
    W = len(x)
    bg = _background_matrix(background)
    if exhaustive:
        perms = np.array(list(itertools.permutations(range(W))), dtype=np.int64)
    else:
        if num_permutations < 1:
            raise ValueError("num_permutations must be >= 1")
        rng = np.random.default_rng(seed)
        perms = np.array([rng.permutation(W) for _ in range(num_permutations)], dtype=np.int64)
    m = len(perms)
    # Row r*(W+1)+k holds the first k positions of permutation r.
    masks = np.zeros((m, W + 1, W), dtype=bool)
    for k in range(1, W + 1):
        masks[np.arange(m), k:, perms[:, k - 1]] = True
    v = coalition_values(model, x, bg, masks.reshape(-1, W), cls).reshape(m, W + 1)
    marginals = np.zeros((m, W))
    marginals[np.arange(m)[:, None], perms] = np.diff(v, axis=1)
    phi = marginals.mean(axis=0)
    se = marginals.std(axis=0, ddof=1) / math.sqrt(m) if m > 1 else np.full(W, np.nan)
    return AttributionVector(phi, float(v[0, 0]), cls, getattr(instance, "id", ""), se)


def attribution_matrix(model, instances: Sequence[WindowedInstance], background, cls: int,
                       method: str = "exact", num_permutations: int = 64, seed: int = 0,
                       threads: int = 1) -> AttributionMatrix:
    """Attribute every instance; rows come back in input order regardless of ``threads``."""
    if method not in ("exact", "sampled"):
        raise ValueError(f"unknown attribution method {method!r}")

    def one(i):
        inst = instances[i]
        if method == "exact":
            return exact_shapley(model, inst, background, cls)
        return sampled_shapley(model, inst, background, cls, num_permutations, seed=seed + i)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vectors = list(pool.map(one, range(len(instances))))
    else:
        vectors = [one(i) for i in range(len(instances))]
    return AttributionMatrix.from_vectors(vectors)


def choose_explanation_class(per_class_scores: tuple[float, float]) -> ClassChoice:
    """Explain the worse-performing class; a tie goes to class 1."""
    s0, s1 = (float(s) for s in per_class_scores)
    for s in (s0, s1):
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"per-class score {s} outside [0, 1]")
    return ClassChoice(1 if s1 <= s0 else 0, (s0, s1))


def _rows(matrix, instances):
    values = matrix.values if isinstance(matrix, AttributionMatrix) else np.atleast_2d(np.asarray(matrix, dtype=float))
    seqs = [tuple(inst.symbols) if isinstance(inst, WindowedInstance) else tuple(inst) for inst in instances]
    if len(seqs) != len(values):
        raise ValueError("attribution rows do not align with instances")
    for s, row in zip(seqs, values):
        if len(s) != len(row):
            raise ValueError("attribution row length differs from its sequence length")
    return values, seqs


def aggregate_element(matrix, instances, symbol: int) -> float:
    """Sum of attributions over every position holding ``symbol`` (correctly rounded)."""
    values, seqs = _rows(matrix, instances)
    return math.fsum(float(row[j]) for s, row in zip(seqs, values) for j, t in enumerate(s) if t == symbol)


def aggregate_subsequence(matrix, instances, pattern, occurrence_mode: str = "all") -> float:
    """Sum of attributions over the positions covered by each occurrence of ``pattern``.

    ``all`` counts every (possibly overlapping) occurrence; ``unique`` keeps
    only the best-scoring occurrence in each instance.
    """
    pattern = Pattern(pattern)
    if occurrence_mode not in ("all", "unique"):
        raise ValueError(f"unknown occurrence mode {occurrence_mode!r}")
    values, seqs = _rows(matrix, instances)
    n = len(pattern)
    terms = []
    for s, row in zip(seqs, values):
        windows = [[float(v) for v in row[q - 1:q - 1 + n]] for q in find_occurrences(s, pattern)]
        if not windows:
            continue
        if occurrence_mode == "unique":
            terms.append(max(math.fsum(w) for w in windows))
        else:
            terms.extend(v for w in windows for v in w)
    return math.fsum(terms)
