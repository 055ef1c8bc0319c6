import json
import math

import numpy as np
import pytest

from huspm_shap import ingest
from huspm_shap.ingest import (
    DEFAULT_RULES, InsufficientClassError, RawSession, SynthConfig, UnknownActionError,
    generate_sessions, generate_synthetic, normalize_window, partition, resample_imbalance, symbolize,
)
from huspm_shap.sequences import Dataset, WindowedInstance, contains


def _instances(n_pos, n_neg, window=(1, 2, 3)):
    out = [WindowedInstance(f"p{i:04d}", window, 1) for i in range(n_pos)]
    out += [WindowedInstance(f"n{i:04d}", window, 0) for i in range(n_neg)]
    return out


def test_symbolize_examples():
    assert symbolize(RawSession("s", ("view", "detail", "add", "BUY"))) == ((1, 2, 3), 1)
    assert symbolize(RawSession("s", ("view", "view"))) == ((1, 1), 0)
    with pytest.raises(UnknownActionError, match="UNKNOWN"):
        symbolize(RawSession("s", ("remove", "view", "UNKNOWN")))


def test_symbolize_codes_and_purchase_flag():
    assert symbolize(RawSession("s", (4, 1, 2), has_purchase=True)) == ((4, 1, 2), 1)
    with pytest.raises(UnknownActionError):
        symbolize(RawSession("s", (1, 7)))


def test_symbolize_order_preserving_roundtrip():
    names = ["view", "detail", "add", "remove", "purchase", "view", "add"]
    symbols, label = symbolize(RawSession("s", tuple(names)))
    canonical = {1: "view", 2: "detail", 3: "add", 4: "remove"}
    assert [canonical[s] for s in symbols] == [n for n in names if n != "purchase"]
    assert label == 1


def test_label_counts_purchase_after_window():
    symbols, label = symbolize(RawSession("s", ("view",) * 6 + ("purchase",)))
    inst = normalize_window("s", symbols, label, 5)
    assert inst.symbols == (1,) * 5 and inst.label == 1


@pytest.mark.parametrize("seq, W, expected", [
    ((1, 2, 3, 1, 2, 3, 1), 5, (1, 2, 3, 1, 2)),
    ((1, 2), 5, None),
    ((2, 3, 4, 1, 2), 5, (2, 3, 4, 1, 2)),
])
def test_normalize_window(seq, W, expected):
    inst = normalize_window("x", seq, 0, W)
    assert (inst.symbols if inst else None) == expected


def test_resample_counts_and_determinism():
    pool = _instances(2000, 12000)
    ds = resample_imbalance(pool, 0.10, 10_000, seed=3)
    assert len(ds) == 10_000 and ds.labels.sum() == 1000
    assert len({i.id for i in ds}) == 10_000
    again = resample_imbalance(pool, 0.10, 10_000, seed=3)
    assert [i.id for i in ds] == [i.id for i in again]


def test_resample_exact_fit_and_deficiency():
    ds = resample_imbalance(_instances(2, 2), 0.5, 4, seed=0)
    assert sorted(i.id for i in ds) == ["n0000", "n0001", "p0000", "p0001"]
    with pytest.raises(InsufficientClassError, match="positives"):
        resample_imbalance(_instances(10, 1000), 0.9, 100, seed=0)


def test_partition_default_sizes_are_disjoint_covering_and_stratified():
    ds = resample_imbalance(_instances(1500, 9500), 0.10, 10_000, seed=1)
    split = partition(ds, {"train": 2000, "test": 1000, "pool": 7000}, seed=5)
    train, test, pool = set(split.train), set(split.test), set(split.pool)
    assert len(train) == 2000 and len(test) == 1000 and len(pool) == 7000
    assert not (train & test or train & pool or test & pool)
    assert train | test | pool == set(range(10_000))
    whole = ds.labels.mean()
    for part in (split.train, split.test, split.pool):
        assert abs(ds.labels[list(part)].mean() - whole) <= 1 / len(part)
    again = partition(ds, {"train": 2000, "test": 1000, "pool": 7000}, seed=5)
    assert again.train == split.train and again.pool == split.pool


def test_partition_stratified_on_awkward_sizes():
    rng = np.random.default_rng(0)
    for trial in range(30):
        n = int(rng.integers(10, 60))
        labels = rng.random(n) < rng.uniform(0.05, 0.5)
        ds = Dataset(tuple(WindowedInstance(f"i{j}", (1, 2), int(l)) for j, l in enumerate(labels)))
        a = int(rng.integers(1, n - 2))
        b = int(rng.integers(1, n - a))
        split = partition(ds, {"train": a, "test": b, "pool": n - a - b}, seed=trial)
        for part in (split.train, split.test, split.pool):
            if part:
                assert abs(ds.labels[list(part)].mean() - ds.labels.mean()) <= 1 / len(part) + 1e-12


def test_partition_size_mismatch():
    ds = resample_imbalance(_instances(1500, 9500), 0.10, 10_000, seed=1)
    with pytest.raises(ValueError):
        partition(ds, {"train": 2000, "test": 1000, "pool": 6999}, seed=0)


def test_synthetic_null_effect_within_binomial_noise():
    cfg = SynthConfig(lift=0.0, base_rate=0.2)
    sessions = generate_sessions(cfg, 5000, seed=11)
    rate = np.mean([s.has_purchase for s in sessions])
    sigma = math.sqrt(0.2 * 0.8 / 5000)
    assert abs(rate - 0.2) <= 3 * sigma


def test_synthetic_planted_pattern_raises_purchase_rate():
    ds = generate_synthetic(SynthConfig(lift=0.8, base_rate=0.05, dataset_size=3000), seed=2)
    hit = np.array([contains(i.symbols, (2, 3)) for i in ds])
    assert ds.labels[hit].mean() > ds.labels[~hit].mean()
    assert ds.labels.sum() == 300 and ds.window_length == 5


def test_synthetic_is_byte_identical_per_seed():
    cfg = SynthConfig(dataset_size=500)
    assert ingest.dataset_to_csv(generate_synthetic(cfg, 4)) == ingest.dataset_to_csv(generate_synthetic(cfg, 4))
    assert ingest.dataset_to_csv(generate_synthetic(cfg, 4)) != ingest.dataset_to_csv(generate_synthetic(cfg, 5))


def test_synthetic_rejects_degenerate_transitions():
    bad = ((0.5, 0.5, 0.0, 0.0),) * 3 + ((0.5, 0.5, 0.1, 0.0),)
    with pytest.raises(ValueError, match="degenerate"):
        generate_sessions(SynthConfig(transitions=bad), 10, seed=0)
    nearly = ((0.25, 0.25, 0.25, 0.25 + 1e-8),) + ((0.25,) * 4,) * 3
    with pytest.raises(ValueError):
        generate_sessions(SynthConfig(transitions=nearly), 10, seed=0)


def test_session_file_roundtrip_and_errors(tmp_path):
    path = tmp_path / "s.jsonl"
    sessions = [RawSession("a", ("view", 2, "add"), True), RawSession("b", (1, 1), False)]
    ingest.write_sessions(sessions, path)
    assert ingest.read_sessions(path) == sessions
    path.write_text('{"session_id": "a", "events": [1], "purchase": false}\n{"session_id": 3}\n')
    with pytest.raises(ValueError, match="line 2"):
        ingest.read_sessions(path)
    path.write_text("")
    with pytest.raises(ValueError):
        ingest.read_sessions(path)


def test_dataset_csv_roundtrip(tmp_path):
    ds = generate_synthetic(SynthConfig(dataset_size=50), 0)
    path = tmp_path / "d.csv"
    ingest.write_dataset(ds, path)
    assert ingest.read_dataset(path) == ds
    first = path.read_text().splitlines()[0].split(",")
    assert len(first) == 2 + 5
