import time
from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, strategies as st

from crimelab import schema
from crimelab.dataset import (CellKey, Grid, assemble_matrix, build_grid, make_folds, undersample,
                              validation_split)
from crimelab.features import MonthWindow, build_region_features, month_index

from conftest import TinyCity, crime_at, square
from oracles import region_of

CELLS_PER_REGION_YEAR = 12 * 7 * 8


def test_grid_size_for_599_regions_three_years():
    # [DERIVED] 599 * 3 * 12 * 7 * 8
    regions = [square(f"D{k:04d}", 44.0, -63.0 + 0.01 * k) for k in range(599)]
    t0 = time.perf_counter()
    grid = build_grid([], regions, [2012, 2013, 2014], assignment=[])
    elapsed = time.perf_counter() - t0
    assert len(grid) == 1_207_584
    assert elapsed < 30
    assert grid.labels.sum() == 0


def test_grid_keys_sorted_and_unique():
    grid = build_grid([], [square("B", 0, 0), square("A", 1, 1)], [2013, 2012], assignment=[])
    keys = [grid.key(i) for i in range(len(grid))]
    assert keys == sorted(keys)
    assert len(set(keys)) == len(keys) == 2 * 2 * CELLS_PER_REGION_YEAR
    assert keys[0] == CellKey("A", 2012, 1, 0, 0)
    assert grid[-1].key == CellKey("B", 2013, 12, 6, 7)


def test_grid_counts_match_naive_recount():
    city = TinyCity(3, n_crimes=400)
    regions = sorted(city.regions, key=lambda r: r.id)
    assign = [region_of(c.location, regions) for c in city.crimes]
    grid = build_grid(city.crimes, city.regions, city.years, assign)
    expected: dict[CellKey, int] = {}
    for c, rid in zip(city.crimes, assign):
        if rid is not None:
            k = CellKey(rid, c.year, c.month, c.weekday, c.interval)
            expected[k] = expected.get(k, 0) + 1
    got = {grid.key(i): int(grid.crime_count[i]) for i in np.flatnonzero(grid.crime_count)}
    assert got == expected
    assert grid.labels.sum() == len(expected)
    assert grid.crime_count.sum() == sum(r is not None for r in assign)


def test_build_grid_from_key_tuples_and_errors():
    regions = [square("A", 0, 0)]
    grid = build_grid([("A", 2012, 3, 2, 5), ("A", 2012, 3, 2, 5), ("A", 1999, 1, 0, 0)],
                      regions, [2012])
    i = np.flatnonzero(grid.crime_count)
    assert len(i) == 1 and grid[int(i[0])].crime_count == 2
    with pytest.raises(ValueError):
        build_grid([("Z", 2012, 1, 0, 0)], regions, [2012])
    with pytest.raises(ValueError):
        build_grid([], regions, [])


def test_grid_csv_round_trip(tmp_path):
    c = crime_at(0.005, 0.005, datetime(2012, 5, 5, 13, 0))
    grid = build_grid([c], [square("A", 0, 0)], [2012], ["A"])
    grid.to_csv(tmp_path / "g.csv")
    back = Grid.from_csv(tmp_path / "g.csv")
    assert back.region_ids == grid.region_ids and back.years == grid.years
    assert np.array_equal(back.crime_count, grid.crime_count)


def test_in_window_rows():
    grid = build_grid([], [square("A", 0, 0)], [2012, 2013], assignment=[])
    rows = grid.in_window(MonthWindow.from_months(2012, 12, 2))
    assert len(rows) == 2 * 7 * 8
    assert set(zip(grid.year[rows].tolist(), grid.month[rows].tolist())) == {(2012, 12), (2013, 1)}


def test_make_folds_windows():
    folds = make_folds()
    assert len(folds) == 10
    f0, f1 = folds[0], folds[1]
    assert (f0.train_window.start, f0.train_window.end) == (month_index(2012, 1),
                                                            month_index(2013, 1))
    assert f0.train_window.label() == "2012-01..2012-12"
    assert f1.train_window.label() == "2012-02..2013-01"
    assert f0.test_window.label() == "2013-01..2013-12"
    assert folds[-1].test_window.label() == "2013-10..2014-09"
    for f in folds:
        assert f.train_window.end <= f.test_window.start
        assert f.train_window.n_months == f.test_window.n_months == 12


def test_make_folds_rejects_short_history():
    with pytest.raises(ValueError):
        make_folds(months_available=32)
    assert len(make_folds(months_available=33)) == 10


def test_folds_train_rows_precede_test_rows():
    grid = build_grid([], [square("A", 0, 0)], [2012, 2013, 2014], assignment=[])
    for f in make_folds():
        tr, te = grid.in_window(f.train_window), grid.in_window(f.test_window)
        assert grid.month_abs[tr].max() < grid.month_abs[te].min()
        assert len(np.intersect1d(tr, te)) == 0


def test_validation_split_holds_out_last_months():
    grid = build_grid([], [square("A", 0, 0)], [2012], assignment=[])
    w = MonthWindow.from_months(2012, 1, 12)
    fit, val = validation_split(grid, grid.in_window(w), w, 2)
    assert set(grid.month[val].tolist()) == {11, 12}
    assert len(fit) + len(val) == len(grid)


@given(st.integers(1, 60), st.integers(0, 300), st.floats(1.0, 4.0), st.integers(0, 2**32))
def test_undersample_properties(n_pos, extra_neg, ratio, seed):
    rng = np.random.default_rng(seed)
    n_neg = n_pos + extra_neg
    labels = rng.permutation(np.r_[np.ones(n_pos, int), np.zeros(n_neg, int)])
    kept = undersample(labels, ratio, seed)
    assert np.all(np.diff(kept) > 0)
    assert set(np.flatnonzero(labels == 1)) <= set(kept.tolist())
    assert (labels[kept] == 0).sum() == min(int(np.floor(ratio * n_pos)), n_neg)
    assert np.array_equal(kept, undersample(labels, ratio, seed))


def test_undersample_ratio_one_is_balanced_and_keeps_crimes():
    labels = np.zeros(10_000, int)
    labels[::37] = 1
    kept = undersample(labels, 1.0, 7)
    assert (labels[kept] == 1).sum() == (labels[kept] == 0).sum() == labels.sum()
    assert not np.array_equal(kept, undersample(labels, 1.0, 8))


def test_undersample_subset_rows_and_errors():
    labels = np.array([1, 0, 0, 1, 0, 0, 0, 1])
    kept = undersample(labels, 1.0, 0, rows=np.array([0, 1, 2, 4]))
    assert kept.tolist()[0] == 0 and len(kept) == 2
    with pytest.raises(ValueError):
        undersample(labels, 0.5)
    with pytest.raises(ValueError):
        undersample(np.zeros(4, int))


@pytest.fixture(scope="module")
def small_world():
    city = TinyCity(9, n_crimes=200)
    regions = sorted(city.regions, key=lambda r: r.id)
    grid = build_grid(city.crimes, regions, city.years,
                      [region_of(c.location, regions) for c in city.crimes])
    table = build_region_features(city.regions, city.crimes, city.lights, city.pois,
                                  city.checkins, city.demographics, None)
    return grid, table


def test_assemble_matrix_full_mask(small_world):
    grid, table = small_world
    rows = np.arange(0, len(grid), 97)
    fm = assemble_matrix(grid, rows, table, schema.GROUPS)
    assert fm.X.shape == (len(rows), 65)
    assert fm.columns == [c.name for c in table.schema]
    assert np.array_equal(fm.y, grid.labels[rows])
    sl = fm.group_slices()
    assert {g: len(v) for g, v in sl.items()} == {"R": 8, "D": 32, "S": 2, "F": 4, "P": 19}
    # spot-check the season and interval lookups row by row
    ci = fm.columns.index("crime_density_season")
    fi = fm.columns.index("checkins_interval")
    seasons = ["winter", "winter", "spring", "spring", "spring", "summer", "summer", "summer",
               "fall", "fall", "fall", "winter"]
    for k, i in enumerate(rows[:50]):
        key = grid.key(int(i))
        row = table.row(key.region_id)
        assert fm.X[k, ci] == row[f"crime_share_{seasons[key.month - 1]}"]
        assert fm.X[k, fi] == row[f"checkins_t{key.interval}"]
        assert fm.X[k, fm.columns.index("month")] == key.month


@pytest.mark.parametrize("mask,width", [("R", 8), ("RD", 40), ("RS", 10), ("RF", 12), ("RP", 27),
                                        ("RFP", 31), ("RDSFP", 65)])
def test_assemble_matrix_mask_widths(small_world, mask, width):
    grid, table = small_world
    fm = assemble_matrix(grid, np.arange(50), table, mask)
    assert fm.X.shape == (50, width)
    assert set(fm.groups) == set(mask)


def test_assemble_matrix_rejects_bad_masks(small_world):
    grid, table = small_world
    for mask in ("", "D", "RX"):
        with pytest.raises(ValueError):
            assemble_matrix(grid, np.arange(5), table, mask)
