import itertools

import pytest
from hypothesis import given, strategies as st

from huspm_shap.sequences import Dataset, DatasetSplit, Pattern, UtilityTable, WindowedInstance, find_occurrences

symbols = st.integers(min_value=1, max_value=4)


def naive_occurrences(seq, pattern):
    out = []
    for q in range(len(seq)):
        ok = q + len(pattern) <= len(seq)
        for k in range(len(pattern)):
            if not ok:
                break
            ok = seq[q + k] == pattern[k]
        if ok:
            out.append(q + 1)
    return out


@pytest.mark.parametrize("seq, pattern, expected", [
    ((2, 3, 4, 1, 2), (2, 3), [1]),
    ((1, 2, 1, 2), (1, 2), [1, 3]),
    ((1, 1, 1), (1, 2), []),
])
def test_find_occurrences_examples(seq, pattern, expected):
    assert find_occurrences(seq, Pattern(pattern)) == expected


@given(st.lists(symbols, min_size=1, max_size=12), st.lists(symbols, min_size=1, max_size=4))
def test_occurrences_rescan(seq, pattern):
    for q in find_occurrences(seq, pattern):
        assert all(seq[q + k - 2] == pattern[k - 1] for k in range(1, len(pattern) + 1))  # 1-based q, k


def test_find_occurrences_matches_naive_exhaustively():
    patterns = [p for n in (1, 2, 3) for p in itertools.product(range(1, 5), repeat=n)
                if all(a != b for a, b in zip(p, p[1:]))]
    for length in range(1, 8):
        for seq in itertools.product(range(1, 5), repeat=length):
            for p in patterns:
                assert find_occurrences(seq, p) == naive_occurrences(seq, p)


@given(st.lists(symbols, min_size=9, max_size=10), st.lists(symbols, min_size=1, max_size=3))
def test_find_occurrences_matches_naive_long(seq, pattern):
    assert find_occurrences(seq, pattern) == naive_occurrences(seq, pattern)


def test_pattern_invariants():
    assert Pattern([2, 1, 3]) == (2, 1, 3)
    assert str(Pattern.parse("2-1-3")) == "2-1-3"
    with pytest.raises(ValueError):
        Pattern([1, 1])
    with pytest.raises(ValueError):
        Pattern([])
    with pytest.raises(ValueError):
        Pattern([5])
    with pytest.raises(ValueError):
        Pattern([1, 2, 3, 4], max_length=3)


def test_instance_and_table_invariants():
    inst = WindowedInstance("a", (1, 2, 3), 1)
    assert inst.window_length == 3
    with pytest.raises(ValueError):
        WindowedInstance("a", (1, 2, 5), 0)
    with pytest.raises(ValueError):
        WindowedInstance("a", (1,), 2)
    with pytest.raises(ValueError):
        UtilityTable({1: 1.0, 2: 2.0, 3: 3.0})


def test_dataset_rejects_mixed_windows_and_duplicate_ids():
    with pytest.raises(ValueError):
        Dataset((WindowedInstance("a", (1, 2), 0), WindowedInstance("b", (1, 2, 3), 0)))
    with pytest.raises(ValueError):
        Dataset((WindowedInstance("a", (1, 2), 0), WindowedInstance("a", (2, 1), 0)))


def test_split_must_be_disjoint_and_cover():
    ds = Dataset(tuple(WindowedInstance(str(i), (1, 2), 0) for i in range(4)))
    DatasetSplit(ds, (0,), (1,), (2, 3))
    with pytest.raises(ValueError):
        DatasetSplit(ds, (0, 1), (1,), (2, 3))
    with pytest.raises(ValueError):
        DatasetSplit(ds, (0,), (1,), (2,))
