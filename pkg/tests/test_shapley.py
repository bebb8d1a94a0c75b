"""Interventional Shapley attributions."""

from __future__ import annotations

import numpy as np
import pytest

from critproc.errors import (DimensionMismatch, InvalidConfig, NonFiniteInput,
                             TooManyFeatures)
from critproc.shapley import (default_background, global_ranking, shap_exact,
                              shap_many, shap_sampled)

from oracles import linear_shap, shap_subset_enum


def poly_model(rows: np.ndarray) -> np.ndarray:
    return (rows[:, 0] * rows[:, 1] + 2.0 * rows[:, 2]
            - rows[:, 3] ** 2 + 0.5 * rows[:, 4])


# -- exact mode ----------------------------------------------------------------

def test_constant_model_gets_zero_attributions():
    bg = np.random.default_rng(50).normal(size=(6, 4))
    res = shap_exact(lambda rows: np.full(rows.shape[0], 3.7),
                     np.zeros(4), bg)
    assert np.array_equal(res.phi, np.zeros(4))
    assert res.base_value == pytest.approx(3.7, abs=1e-12)


def test_linear_model_matches_closed_form():
    rng = np.random.default_rng(51)
    w = np.array([1.5, -2.0, 0.0, 3.25])
    bg = rng.normal(size=(9, 4))
    x = rng.normal(size=4)
    res = shap_exact(lambda rows: rows @ w, x, bg)
    want = linear_shap(w, x, bg)
    assert np.max(np.abs(res.phi - want)) < 1e-9
    assert abs(res.base_value - bg.mean(axis=0) @ w) < 1e-12


def test_stump_touches_only_its_split_feature():
    def stump(rows):
        return np.where(rows[:, 0] <= 1.0, -1.0, 2.0)

    rng = np.random.default_rng(52)
    res = shap_exact(stump, rng.normal(size=5), rng.normal(size=(7, 5)))
    assert np.array_equal(res.phi[1:], np.zeros(4))


def test_exact_matches_subset_enumeration_oracle():
    rng = np.random.default_rng(53)
    bg = rng.normal(size=(6, 5))
    x = rng.normal(size=5)
    res = shap_exact(poly_model, x, bg)
    groups = [(f"x{j}", [j]) for j in range(5)]
    want = shap_subset_enum(poly_model, x, bg, groups)
    assert np.max(np.abs(res.phi - want)) < 1e-9


def test_exact_efficiency():
    rng = np.random.default_rng(54)
    for trial in range(5):
        bg = rng.normal(size=(8, 5))
        x = rng.normal(size=5)
        res = shap_exact(poly_model, x, bg)
        fx = float(poly_model(x[None, :])[0])
        assert abs(res.base_value + res.phi.sum() - fx) < 1e-9


def test_symmetric_features_get_equal_attributions():
    # Model and data are exchangeable in columns 0 and 1.
    def f(rows):
        return rows[:, 0] + rows[:, 1]

    bg = np.array([[0.3, 0.9, 5.0], [0.9, 0.3, -1.0], [0.5, 0.5, 2.0]])
    x = np.array([2.0, 2.0, 7.0])
    res = shap_exact(f, x, bg)
    assert abs(res.phi[0] - res.phi[1]) < 1e-12
    assert abs(res.phi[2]) < 1e-12


def test_attributions_are_linear_in_the_model():
    rng = np.random.default_rng(55)
    bg = rng.normal(size=(7, 4))
    x = rng.normal(size=4)

    def f(rows):
        return rows[:, 0] * rows[:, 1]

    def g(rows):
        return np.abs(rows[:, 2]) - rows[:, 3]

    both = shap_exact(lambda rows: f(rows) + g(rows), x, bg)
    fi = shap_exact(f, x, bg)
    gi = shap_exact(g, x, bg)
    assert np.max(np.abs(both.phi - (fi.phi + gi.phi))) < 1e-9


def test_grouped_columns_move_as_one_feature():
    # f depends on columns 1 and 2 only through their sum, so collapsing
    # the pair into a single precomputed column must give the same split
    # of credit between column 0 and the pair.
    def f(rows):
        s = rows[:, 1] + rows[:, 2]
        return rows[:, 0] + s * s

    rng = np.random.default_rng(56)
    bg = rng.normal(size=(6, 3))
    x = rng.normal(size=3)
    grouped = shap_exact(f, x, bg, groups=[("solo", [0]), ("pair", [1, 2])])

    def reduced(rows):
        return rows[:, 0] + rows[:, 1] ** 2

    bg2 = np.column_stack([bg[:, 0], bg[:, 1] + bg[:, 2]])
    x2 = np.array([x[0], x[1] + x[2]])
    flat = shap_exact(reduced, x2, bg2)
    assert np.max(np.abs(grouped.phi - flat.phi)) < 1e-12
    assert grouped.group_names == ["solo", "pair"]

    oracle = shap_subset_enum(f, x, bg, [("solo", [0]), ("pair", [1, 2])])
    assert np.max(np.abs(grouped.phi - oracle)) < 1e-9


def test_exact_mode_caps_group_count():
    rng = np.random.default_rng(57)
    bg = rng.normal(size=(3, 16))
    x = rng.normal(size=16)
    with pytest.raises(TooManyFeatures):
        shap_exact(lambda rows: rows.sum(axis=1), x, bg)
    res = shap_sampled(lambda rows: rows.sum(axis=1), x, bg,
                       n_permutations=5, seed=0)
    assert res.phi.shape == (16,)


def test_group_validation():
    rng = np.random.default_rng(58)
    bg = rng.normal(size=(3, 4))
    x = rng.normal(size=4)
    fn = lambda rows: rows.sum(axis=1)
    with pytest.raises(InvalidConfig):
        shap_exact(fn, x, bg, groups=[("a", [])])
    with pytest.raises(InvalidConfig):
        shap_exact(fn, x, bg, groups=[("a", [0, 9])])
    with pytest.raises(InvalidConfig):
        shap_exact(fn, x, bg, groups=[("a", [0, 1]), ("b", [1, 2])])


def test_input_validation():
    fn = lambda rows: rows.sum(axis=1)
    with pytest.raises(DimensionMismatch):
        shap_exact(fn, np.zeros((2, 2)), np.zeros((3, 2)))
    with pytest.raises(DimensionMismatch):
        shap_exact(fn, np.zeros(2), np.zeros((3, 5)))
    with pytest.raises(InvalidConfig):
        shap_exact(fn, np.zeros(2), np.zeros((0, 2)))
    with pytest.raises(NonFiniteInput):
        shap_exact(fn, np.array([np.nan, 0.0]), np.zeros((2, 2)))


# -- sampled mode ----------------------------------------------------------------

def test_sampled_agrees_with_exact_within_four_se():
    rng = np.random.default_rng(59)
    bg = rng.normal(size=(8, 5))
    x = rng.normal(size=5)
    exact = shap_exact(poly_model, x, bg)
    sampled = shap_sampled(poly_model, x, bg, n_permutations=4000, seed=1)
    # Linear terms have deterministic gains (true SE 0), so leave room
    # for plain float accumulation error on top of the Monte Carlo band.
    assert np.all(np.abs(sampled.phi - exact.phi)
                  <= 4.0 * sampled.stderr + 1e-9)
    assert abs(sampled.base_value - exact.base_value) < 1e-9


def test_single_permutation_is_deterministic():
    rng = np.random.default_rng(60)
    bg = rng.normal(size=(4, 3))
    x = rng.normal(size=3)
    a = shap_sampled(poly_model_3, x, bg, n_permutations=1, seed=7)
    b = shap_sampled(poly_model_3, x, bg, n_permutations=1, seed=7)
    assert np.array_equal(a.phi, b.phi)
    assert np.all(np.isinf(a.stderr))
    c = shap_sampled(poly_model_3, x, bg, n_permutations=1, seed=8)
    assert not np.array_equal(a.phi, c.phi)


def poly_model_3(rows: np.ndarray) -> np.ndarray:
    return rows[:, 0] * rows[:, 1] - rows[:, 2] ** 2


def test_sampled_requires_at_least_one_permutation():
    with pytest.raises(InvalidConfig):
        shap_sampled(poly_model_3, np.zeros(3), np.zeros((2, 3)),
                     n_permutations=0)


def test_every_permutation_satisfies_efficiency():
    # Each permutation's gains telescope to f(x) - base, so the mean does too.
    rng = np.random.default_rng(61)
    bg = rng.normal(size=(5, 3))
    x = rng.normal(size=3)
    res = shap_sampled(poly_model_3, x, bg, n_permutations=37, seed=2)
    fx = float(poly_model_3(x[None, :])[0])
    assert abs(res.base_value + res.phi.sum() - fx) < 1e-9


def test_shap_many_threads_do_not_change_results(monkeypatch):
    rng = np.random.default_rng(62)
    bg = rng.normal(size=(5, 3))
    X = rng.normal(size=(6, 3))
    monkeypatch.setenv("CRITPROC_THREADS", "1")
    serial = shap_many(poly_model_3, X, bg, mode="sampled",
                       n_permutations=20, seed=3)
    monkeypatch.setenv("CRITPROC_THREADS", "3")
    threaded = shap_many(poly_model_3, X, bg, mode="sampled",
                         n_permutations=20, seed=3)
    for a, b in zip(serial, threaded):
        assert np.array_equal(a.phi, b.phi)
        assert np.array_equal(a.stderr, b.stderr)


def test_shap_many_instances_use_distinct_streams():
    rng = np.random.default_rng(63)
    bg = rng.normal(size=(5, 3))
    x = rng.normal(size=3)
    X = np.vstack([x, x])
    out = shap_many(poly_model_3, X, bg, mode="sampled",
                    n_permutations=3, seed=4)
    # Same instance, different stream: estimates differ, target agrees.
    assert not np.array_equal(out[0].phi, out[1].phi)


def test_shap_many_exact_and_mode_check():
    rng = np.random.default_rng(64)
    bg = rng.normal(size=(5, 3))
    X = rng.normal(size=(2, 3))
    out = shap_many(poly_model_3, X, bg, mode="exact")
    direct = shap_exact(poly_model_3, X[1], bg)
    assert np.array_equal(out[1].phi, direct.phi)
    with pytest.raises(InvalidConfig):
        shap_many(poly_model_3, X, bg, mode="guess")


# -- background and ranking -----------------------------------------------------

def test_default_background_cap():
    rng = np.random.default_rng(65)
    X = rng.normal(size=(30, 3))
    assert np.array_equal(default_background(X, cap=50), X)
    sub = default_background(X, cap=10, seed=5)
    assert sub.shape == (10, 3)
    rows = {tuple(r) for r in X}
    assert all(tuple(r) in rows for r in sub)
    again = default_background(X, cap=10, seed=5)
    assert np.array_equal(sub, again)


def test_ranking_sorts_by_mean_abs():
    res = shap_many(poly_model_3, np.array([[3.0, 0.5, 1.0]]),
                    np.zeros((4, 3)), mode="exact")
    ranking = global_ranking(res)
    values = [v for _, v in ranking]
    assert values == sorted(values, reverse=True)
    assert {n for n, _ in ranking} == {"x0", "x1", "x2"}


def test_unused_feature_ranks_last_with_zero_mass():
    def f(rows):
        return rows[:, 0] * 2.0

    rng = np.random.default_rng(66)
    res = shap_many(f, rng.normal(size=(5, 2)), rng.normal(size=(6, 2)),
                    mode="exact")
    ranking = global_ranking(res)
    assert ranking[-1] == ("x1", 0.0)
    assert ranking[0][0] == "x0" and ranking[0][1] > 0.0


def test_ranking_breaks_ties_by_name():
    res = shap_many(lambda rows: np.zeros(rows.shape[0]),
                    np.ones((2, 3)), np.zeros((3, 3)), mode="exact")
    ranking = global_ranking(res)
    assert ranking == [("x0", 0.0), ("x1", 0.0), ("x2", 0.0)]
    with pytest.raises(InvalidConfig):
        global_ranking([])
