import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import ConstantModel, CountModel, LastPositionModel
from oracles import brute_force_shapley, naive_element
from huspm_shap.attribution import (
    AttributionMatrix, AttributionVector, aggregate_element, aggregate_subsequence, attribution_matrix,
    baseline_value, choose_explanation_class, exact_shapley, sampled_shapley,
)
from huspm_shap.classifier import ArchitectureConfig, initialize


def rng_seqs(rng, n, W):
    return rng.integers(1, 5, size=(n, W))


def test_baseline_value_examples():
    m = LastPositionModel(3)
    assert baseline_value(m, [(1, 1, 3)], 1) == pytest.approx(0.8)
    # last symbols 1 and 3 give p1 = 0.1 and 0.8 -> probabilities for class 0 are 0.9 and 0.2
    assert baseline_value(m, [(2, 2, 1), (2, 2, 3)], 0) == pytest.approx(0.55)
    assert baseline_value(ConstantModel(3), [(1, 2, 3), (4, 4, 4)], 1) == pytest.approx(0.37)
    with pytest.raises(ValueError):
        baseline_value(m, [], 1)


def test_two_background_mean():
    class Two:
        window_length = 1

        def predict_proba(self, x):
            p = np.where(np.asarray(x)[:, 0] == 1, 0.2, 0.8)
            return np.stack([1 - p, p], axis=1)

    assert baseline_value(Two(), [(1,), (2,)], 1) == pytest.approx(0.5)


def test_null_player():
    rng = np.random.default_rng(0)
    m = LastPositionModel(6)
    for _ in range(5):
        phi = exact_shapley(m, rng.integers(1, 5, 6), rng_seqs(rng, 4, 6), 1).values
        assert np.all(phi[:-1] == 0.0)


def test_symmetry():
    m = CountModel(5)
    bg = [(1, 1, 1, 1, 1), (2, 4, 2, 4, 2)]
    phi = exact_shapley(m, (3, 1, 3, 2, 4), bg, 1).values
    assert phi[0] == pytest.approx(phi[2], abs=1e-12)
    swapped = exact_shapley(m, (1, 3, 3, 2, 4), bg, 1).values
    np.testing.assert_allclose(sorted(phi), sorted(swapped), atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_exact_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    model = initialize(ArchitectureConfig(window_length=6), seed)
    x = rng.integers(1, 5, 6)
    bg = rng_seqs(rng, 4, 6)
    got = exact_shapley(model, x, bg, seed % 2)
    want, base = brute_force_shapley(model, x.tolist(), bg.tolist(), seed % 2)
    np.testing.assert_allclose(got.values, want, atol=1e-9, rtol=0)
    assert got.baseline == pytest.approx(base, abs=1e-12)


def test_efficiency():
    rng = np.random.default_rng(1)
    model = initialize(ArchitectureConfig(window_length=7), 1)
    x = rng.integers(1, 5, 7)
    for cls in (0, 1):
        a = exact_shapley(model, x, rng_seqs(rng, 5, 7), cls)
        assert abs(a.total - model.forward(x)[cls]) <= 1e-9


def test_exact_rejects_long_windows():
    with pytest.raises(ValueError, match="sampled_shapley"):
        exact_shapley(ConstantModel(17), [1] * 17, [[1] * 17], 1)


def test_sampled_exhaustive_equals_exact():
    rng = np.random.default_rng(2)
    model = initialize(ArchitectureConfig(window_length=3), 2)
    x, bg = rng.integers(1, 5, 3), rng_seqs(rng, 6, 3)
    exact = exact_shapley(model, x, bg, 1)
    samp = sampled_shapley(model, x, bg, 1, exhaustive=True)
    np.testing.assert_allclose(samp.values, exact.values, atol=1e-9, rtol=0)


def test_sampled_close_to_exact_on_w8():
    rng = np.random.default_rng(3)
    model = initialize(ArchitectureConfig(window_length=8), 3)
    x, bg = rng.integers(1, 5, 8), rng_seqs(rng, 4, 8)
    exact = exact_shapley(model, x, bg, 1)
    samp = sampled_shapley(model, x, bg, 1, 2000, seed=0)
    assert np.max(np.abs(samp.values - exact.values)) <= 0.02
    assert samp.std_error.shape == (8,)
    assert abs(samp.total - model.forward(x)[1]) <= 1e-9  # telescoping per permutation


def test_sampled_is_seed_deterministic():
    model = initialize(ArchitectureConfig(window_length=5), 0)
    a = sampled_shapley(model, (1, 2, 3, 4, 1), [(2, 2, 2, 2, 2)], 1, 30, seed=9)
    b = sampled_shapley(model, (1, 2, 3, 4, 1), [(2, 2, 2, 2, 2)], 1, 30, seed=9)
    np.testing.assert_array_equal(a.values, b.values)
    with pytest.raises(ValueError):
        sampled_shapley(model, (1, 2, 3, 4, 1), [(2, 2, 2, 2, 2)], 1, 0)


def test_attribution_matrix_is_thread_count_invariant():
    rng = np.random.default_rng(4)
    model = initialize(ArchitectureConfig(window_length=5), 4)
    from huspm_shap.sequences import WindowedInstance
    insts = [WindowedInstance(f"i{k}", tuple(rng.integers(1, 5, 5)), 0) for k in range(12)]
    bg = rng_seqs(rng, 4, 5)
    for method in ("exact", "sampled"):
        one = attribution_matrix(model, insts, bg, 1, method, 16, seed=1, threads=1)
        four = attribution_matrix(model, insts, bg, 1, method, 16, seed=1, threads=4)
        assert one.to_csv() == four.to_csv()
        assert one.ids == tuple(i.id for i in insts)


def test_attribution_csv_roundtrip():
    m = AttributionMatrix(("a", "b"), np.array([[0.1, -0.25], [1 / 3, 2.0]]), np.array([0.5, 0.4]), 1)
    back = AttributionMatrix.from_csv(m.to_csv())
    assert back.ids == m.ids and back.explained_class == 1
    np.testing.assert_array_equal(back.values, m.values)
    assert m.to_csv().splitlines()[0].split(",")[:3] == ["a", "1", "0.5"]


@pytest.mark.parametrize("scores, expected", [((0.9, 0.6), 1), ((0.4, 0.8), 0), ((0.7, 0.7), 1)])
def test_choose_explanation_class(scores, expected):
    assert choose_explanation_class(scores).explained_class == expected


def test_aggregate_element_examples():
    assert aggregate_element(np.array([[0.3, -0.1]]), [(1, 2)], 1) == pytest.approx(0.3)
    assert aggregate_element(np.array([[0.3, -0.1]]), [(1, 2)], 2) == pytest.approx(-0.1)
    assert aggregate_element(np.array([[0.2, 0.5]]), [(3, 3)], 3) == pytest.approx(0.7)
    assert aggregate_element(np.array([[0.2, 0.5]]), [(3, 3)], 4) == 0.0


def test_aggregate_subsequence_examples():
    phi = np.array([[0.1, 0.2, 0.3, 0.4]])
    assert aggregate_subsequence(phi, [(1, 2, 1, 2)], (1, 2), "all") == pytest.approx(1.0)
    assert aggregate_subsequence(phi, [(1, 2, 1, 2)], (1, 2), "unique") == pytest.approx(0.7)
    assert aggregate_subsequence(phi, [(1, 2, 1, 2)], (3, 4), "all") == 0.0
    with pytest.raises(ValueError):
        aggregate_subsequence(phi, [(1, 2, 1, 2)], (2, 2), "all")


matrices = st.integers(1, 10).flatmap(lambda W: st.tuples(
    st.lists(st.lists(st.integers(1, 4), min_size=W, max_size=W), min_size=1, max_size=6),
    st.lists(st.lists(st.floats(-1, 1), min_size=W, max_size=W), min_size=6, max_size=6),
))


@settings(max_examples=100, deadline=None)
@given(matrices)
def test_singleton_subsequence_equals_element(data):
    seqs, rows = data
    values = np.array(rows[:len(seqs)])
    for t in range(1, 5):
        e = aggregate_element(values, seqs, t)
        assert aggregate_subsequence(values, seqs, (t,), "all") == pytest.approx(e, abs=1e-12)
        assert e == pytest.approx(naive_element(values, seqs, t), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(matrices, st.integers(0, 5))
def test_aggregation_is_linear_over_disjoint_sets(data, cut):
    seqs, rows = data
    values = np.array(rows[:len(seqs)])
    cut = min(cut, len(seqs))
    for p in [(1,), (1, 2), (2, 3, 1)]:
        whole = aggregate_subsequence(values, seqs, p, "all")
        parts = (aggregate_subsequence(values[:cut], seqs[:cut], p, "all") if cut else 0.0) + \
                (aggregate_subsequence(values[cut:], seqs[cut:], p, "all") if cut < len(seqs) else 0.0)
        assert whole == pytest.approx(parts, abs=1e-12)
