"""High-utility sequential pattern mining over contiguous, repeat-free patterns.

Two utility sources are supported: a static per-symbol table (dollars) and
aggregated positional SHAP values. The pattern space is tiny (at most
4 + 12 + 36 candidates at length 3), so candidates are enumerated directly
from the observed sequences and scored one by one.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .attribution import AttributionMatrix, aggregate_subsequence
from .sequences import Pattern, UtilityTable, WindowedInstance, find_occurrences

OCCURRENCE_MODES = ("all", "unique")
THRESHOLD_SCOPES = ("per-sequence-max", "database-sum")
UTILITY_MODES = ("static", "shap")


@dataclass(frozen=True)
class MiningConfig:
    max_pattern_length: int = 3
    k: int = 5
    threshold: float | None = None
    utility_mode: str = "shap"
    occurrence_mode: str = "all"
    threshold_scope: str = "per-sequence-max"
    inclusive_threshold: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_pattern_length < 1:
            raise ValueError("max_pattern_length must be >= 1")
        if self.utility_mode not in UTILITY_MODES:
            raise ValueError(f"utility_mode must be one of {UTILITY_MODES}")
        if self.occurrence_mode not in OCCURRENCE_MODES:
            raise ValueError(f"occurrence_mode must be one of {OCCURRENCE_MODES}")
        if self.threshold_scope not in THRESHOLD_SCOPES:
            raise ValueError(f"threshold_scope must be one of {THRESHOLD_SCOPES}")


@dataclass(frozen=True)
class RankedPattern:
    rank: int
    pattern: Pattern
    utility: float


def _seqs(db) -> list[tuple[int, ...]]:
    return [tuple(s.symbols) if isinstance(s, WindowedInstance) else tuple(s) for s in db]


def enumerate_candidates(db, max_length: int) -> set[Pattern]:
    """Every distinct contiguous, repeat-free sub-sequence of length 1..max_length that occurs."""
    if max_length < 1:
        raise ValueError("max_length must be >= 1")
    found: set[Pattern] = set()
    for s in _seqs(db):
        for start in range(len(s)):
            for end in range(start + 1, min(len(s), start + max_length) + 1):
                if end - start > 1 and s[end - 1] == s[end - 2]:
                    break  # every longer window from this start repeats too
                found.add(Pattern(s[start:end]))
    return found


def pattern_utility_static(pattern, db, table: UtilityTable | Mapping[int, float],
                           occurrence_mode: str = "unique", scope: str = "per-sequence-max") -> float:
    """Table-driven utility of ``pattern`` over a sequence database.

    Each occurrence is worth the summed utility of its elements. Per sequence
    the occurrences are summed (``all``) or counted once (``unique``); the
    database value is then the best sequence or the sum over sequences.
    """
    pattern = Pattern(pattern)
    if occurrence_mode not in OCCURRENCE_MODES:
        raise ValueError(f"unknown occurrence mode {occurrence_mode!r}")
    if scope not in THRESHOLD_SCOPES:
        raise ValueError(f"unknown threshold scope {scope!r}")
    unit = float(sum(table[t] for t in pattern))
    per_seq = []
    for s in _seqs(db):
        hits = len(find_occurrences(s, pattern))
        if hits:
            per_seq.append(unit if occurrence_mode == "unique" else unit * hits)
    if not per_seq:
        return 0.0
    return max(per_seq) if scope == "per-sequence-max" else float(sum(per_seq))


def pattern_utility_shap(pattern, matrix: AttributionMatrix, instances, occurrence_mode: str = "all") -> float:
    """Summed positional SHAP over the pattern's occurrences in the explained subset."""
    return aggregate_subsequence(matrix, instances, pattern, occurrence_mode)


def pattern_utilities(db, cfg: MiningConfig, table=None, matrix: AttributionMatrix | None = None) -> dict[Pattern, float]:
    candidates = enumerate_candidates(db, cfg.max_pattern_length)
    if cfg.utility_mode == "static":
        if table is None:
            raise ValueError("static utility mode needs a utility table")
        return {p: pattern_utility_static(p, db, table, cfg.occurrence_mode, cfg.threshold_scope)
                for p in candidates}
    if matrix is None:
        raise ValueError("shap utility mode needs an attribution matrix")
    return {p: pattern_utility_shap(p, matrix, db, cfg.occurrence_mode) for p in candidates}


def _order_key(item):
    pattern, utility = item
    return (-utility, len(pattern), tuple(pattern))


def mine_topk(utilities: Mapping, k: int) -> list[RankedPattern]:
    """The k best patterns; ties go to the shorter, then lexicographically smaller, pattern."""
    if k < 1:
        raise ValueError("k must be >= 1")
    items = sorted(((Pattern(p), float(u)) for p, u in utilities.items()), key=_order_key)
    return [RankedPattern(rank, p, u) for rank, (p, u) in enumerate(items[:k], start=1)]


def mine_threshold(db, table, threshold: float, cfg: MiningConfig | None = None,
                   matrix: AttributionMatrix | None = None) -> dict[Pattern, float]:
    """Patterns whose utility exceeds ``threshold`` (or meets it, with ``inclusive_threshold``)."""
    if threshold is None:
        raise ValueError("threshold mining needs a threshold")
    if cfg is None:
        cfg = MiningConfig(utility_mode="static", occurrence_mode="unique")
    utilities = pattern_utilities(db, cfg, table=table, matrix=matrix)
    if cfg.inclusive_threshold:
        return {p: u for p, u in utilities.items() if u >= threshold}
    return {p: u for p, u in utilities.items() if u > threshold}


def mining_report(ranked: Iterable[RankedPattern]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "pattern", "utility"])
    for r in ranked:
        w.writerow([r.rank, str(r.pattern), repr(float(r.utility))])
    return buf.getvalue()
