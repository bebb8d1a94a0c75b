"""Surface-area feature derivation."""

from __future__ import annotations

import math

import numpy as np
import pytest

from critproc.data_core import ColumnSpec, RunTable, Schema
from critproc.errors import (ColumnAlreadyPresent, EmptyDiskList,
                             MissingSourceColumn, NonFiniteInput)
from critproc.feature_engineering import (DIFF_COL, STD_COL, TOTAL_COL,
                                          augment, engineer)


def test_equal_disks_give_zero_std_and_diff():
    f = engineer([100.0, 100.0, 100.0], nominal_area=300.0)
    assert (f.total, f.std, f.diff) == (300.0, 0.0, 0.0)


def test_single_zero_disk():
    f = engineer([0.0], nominal_area=5000.0)
    assert (f.total, f.std, f.diff) == (0.0, 0.0, 5000.0)


def test_worked_fixture():
    f = engineer([900.0, 1100.0, 1000.0, 1000.0], nominal_area=4500.0)
    assert f.total == 4000.0
    # Population std of the four areas: sqrt(5000).
    assert abs(f.std - math.sqrt(5000.0)) < 1e-12
    assert f.diff == 500.0


def test_std_is_population_not_sample():
    # ddof=1 would give sqrt(20000/3) ~ 81.65 on the worked fixture.
    f = engineer([900.0, 1100.0, 1000.0, 1000.0], nominal_area=4500.0)
    assert f.std < 75.0


def test_diff_is_absolute():
    below = engineer([600.0], nominal_area=500.0)
    assert below.diff == 100.0


def test_scaling_homogeneity():
    rng = np.random.default_rng(0)
    for _ in range(20):
        areas = rng.uniform(10.0, 2000.0, size=rng.integers(1, 30))
        nominal = rng.uniform(100.0, 50000.0)
        c = rng.uniform(0.1, 10.0)
        base = engineer(areas, nominal)
        scaled = engineer(areas * c, nominal * c)
        assert abs(scaled.total - c * base.total) < 1e-9 * max(1.0, base.total)
        assert abs(scaled.std - c * base.std) < 1e-9 * max(1.0, base.std)
        assert abs(scaled.diff - c * base.diff) < 1e-9 * max(1.0, base.diff)


def test_permutation_invariance():
    rng = np.random.default_rng(1)
    areas = rng.uniform(100.0, 1500.0, size=12)
    base = engineer(areas, 9000.0)
    for _ in range(10):
        shuffled = rng.permutation(areas)
        f = engineer(shuffled, 9000.0)
        assert abs(f.total - base.total) < 1e-9
        assert abs(f.std - base.std) < 1e-9
        assert abs(f.diff - base.diff) < 1e-9


def test_engineer_input_guards():
    with pytest.raises(EmptyDiskList):
        engineer([], 100.0)
    with pytest.raises(NonFiniteInput):
        engineer([1.0, float("nan")], 100.0)
    with pytest.raises(NonFiniteInput):
        engineer([1.0], float("inf"))


# -- table augmentation --------------------------------------------------

def disk_table(n: int = 4) -> RunTable:
    schema = Schema((
        ColumnSpec("nominal_area", "numeric", "input"),
        ColumnSpec("disk_areas", "numeric_vector", "input", length=3),
        ColumnSpec("thick", "numeric", "output"),
    ))
    rng = np.random.default_rng(7)
    return RunTable(schema, {
        "nominal_area": np.full(n, 3000.0),
        "disk_areas": rng.uniform(800.0, 1200.0, size=(n, 3)),
        "thick": rng.normal(15.0, 1.0, size=n),
    }, n)


def test_augment_appends_three_named_columns():
    t = augment(disk_table())
    names = t.schema.names()
    assert names[-3:] == [TOTAL_COL, STD_COL, DIFF_COL]
    for name in (TOTAL_COL, STD_COL, DIFF_COL):
        assert t.schema.column(name).role == "input"
        assert t.schema.column(name).kind == "numeric"
    expect = t.column("disk_areas").sum(axis=1)
    assert np.allclose(t.column(TOTAL_COL), expect, atol=1e-12)


def test_augment_matches_engineer_rowwise():
    t = augment(disk_table(6))
    for i in range(6):
        f = engineer(t.column("disk_areas")[i], t.column("nominal_area")[i])
        assert abs(t.column(TOTAL_COL)[i] - f.total) < 1e-12
        assert abs(t.column(STD_COL)[i] - f.std) < 1e-12
        assert abs(t.column(DIFF_COL)[i] - f.diff) < 1e-12


def test_reaugment_rejected():
    t = augment(disk_table())
    with pytest.raises(ColumnAlreadyPresent):
        augment(t)


def test_augment_requires_source_columns():
    schema = Schema((ColumnSpec("thick", "numeric", "output"),))
    bare = RunTable(schema, {"thick": np.ones(2)}, 2)
    with pytest.raises(MissingSourceColumn):
        augment(bare)


def test_augment_ignores_zero_padded_slots():
    schema = Schema((
        ColumnSpec("nominal_area", "numeric", "input"),
        ColumnSpec("disk_areas", "numeric_vector", "input", length=4),
        ColumnSpec("thick", "numeric", "output"),
    ))
    t = RunTable(schema, {
        "nominal_area": np.array([4500.0]),
        "disk_areas": np.array([[900.0, 1100.0, 1000.0, 0.0]]),
        "thick": np.array([15.0]),
    }, 1)
    a = augment(t)
    # Spread over the three loaded slots, not the padded width.
    assert abs(a.column(TOTAL_COL)[0] - 3000.0) < 1e-12
    assert abs(a.column(STD_COL)[0] - np.std([900.0, 1100.0, 1000.0])) < 1e-12
    assert abs(a.column(DIFF_COL)[0] - 1500.0) < 1e-12
