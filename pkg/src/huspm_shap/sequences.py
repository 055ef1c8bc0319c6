"""Core domain types for symbolized clickstream data.

Every event of a session is one action symbol drawn from a four-letter
alphabet. Purchases are never symbols; they are the label.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Mapping, Sequence

import numpy as np


class ActionSymbol(IntEnum):
    PAGE_VIEW = 1
    PRODUCT_DETAIL = 2
    ADD_TO_CART = 3
    REMOVE_FROM_CART = 4


ALPHABET: tuple[int, ...] = tuple(int(s) for s in ActionSymbol)


def check_symbols(symbols: Iterable[int]) -> tuple[int, ...]:
    out = tuple(int(s) for s in symbols)
    for s in out:
        if s not in ALPHABET:
            raise ValueError(f"symbol {s!r} is outside the alphabet {ALPHABET}")
    return out


@dataclass(frozen=True)
class WindowedInstance:
    """A session cut to its first ``window_length`` actions, plus its label."""

    id: str
    symbols: tuple[int, ...]
    label: int

    def __post_init__(self):
        symbols = check_symbols(self.symbols)
        if not symbols:
            raise ValueError("an instance needs at least one symbol")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        object.__setattr__(self, "symbols", symbols)

    @property
    def window_length(self) -> int:
        return len(self.symbols)


class Pattern(tuple):
    """Contiguous run of symbols with no immediate repetition.

    Behaves as a plain tuple, so patterns hash, compare and sort like tuples.
    """

    def __new__(cls, elements: Iterable[int], max_length: int | None = None):
        elements = check_symbols(elements)
        n = len(elements)
        if n < 1:
            raise ValueError("a pattern needs at least one element")
        if max_length is not None and n > max_length:
            raise ValueError(f"pattern length {n} exceeds maximum {max_length}")
        for a, b in zip(elements, elements[1:]):
            if a == b:
                raise ValueError(f"pattern {elements} repeats symbol {a} in adjacent positions")
        return super().__new__(cls, elements)

    @classmethod
    def parse(cls, text: str) -> "Pattern":
        """Parse the dash-joined form used in reports, e.g. ``"2-1-3"``."""
        return cls(int(part) for part in text.strip().split("-"))

    def __str__(self) -> str:
        return "-".join(str(s) for s in self)

    def __repr__(self) -> str:
        return f"Pattern({str(self)})"


@dataclass(frozen=True)
class UtilityTable:
    values: Mapping[int, float]

    def __post_init__(self):
        missing = [s for s in ALPHABET if s not in self.values]
        if missing:
            raise ValueError(f"utility table has no entry for symbols {missing}")
        object.__setattr__(self, "values", {int(k): float(v) for k, v in self.values.items()})

    def __getitem__(self, symbol: int) -> float:
        return self.values[int(symbol)]


@dataclass(frozen=True)
class Dataset:
    instances: tuple[WindowedInstance, ...]

    def __post_init__(self):
        instances = tuple(self.instances)
        object.__setattr__(self, "instances", instances)
        lengths = {inst.window_length for inst in instances}
        if len(lengths) > 1:
            raise ValueError(f"instances have mixed window lengths {sorted(lengths)}")
        ids = [inst.id for inst in instances]
        if len(set(ids)) != len(ids):
            raise ValueError("instance ids must be unique")

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def __getitem__(self, i):
        return self.instances[i]

    @property
    def window_length(self) -> int:
        return self.instances[0].window_length if self.instances else 0

    @property
    def labels(self) -> np.ndarray:
        return np.array([inst.label for inst in self.instances], dtype=np.int64)

    def symbol_matrix(self) -> np.ndarray:
        return symbol_matrix(self.instances)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.instances[i] for i in indices))


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/test/pool index sets over one dataset."""

    dataset: Dataset
    train: tuple[int, ...]
    test: tuple[int, ...]
    pool: tuple[int, ...]

    def __post_init__(self):
        parts = [set(self.train), set(self.test), set(self.pool)]
        if parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2]:
            raise ValueError("split parts overlap")
        if set().union(*parts) != set(range(len(self.dataset))):
            raise ValueError("split parts do not cover the dataset")


def symbol_matrix(instances: Sequence[WindowedInstance]) -> np.ndarray:
    if not instances:
        return np.zeros((0, 0), dtype=np.int64)
    return np.array([inst.symbols for inst in instances], dtype=np.int64)


def find_occurrences(seq: Sequence[int], pattern: Sequence[int]) -> list[int]:
    """1-based start positions of every contiguous match of ``pattern`` in ``seq``.

    Overlapping matches are all reported, in ascending order.
    """
    seq = tuple(seq)
    pattern = tuple(pattern)
    n = len(pattern)
    if n == 0:
        return []
    return [q + 1 for q in range(len(seq) - n + 1) if seq[q:q + n] == pattern]


def contains(seq: Sequence[int], pattern: Sequence[int]) -> bool:
    return bool(find_occurrences(seq, pattern))
