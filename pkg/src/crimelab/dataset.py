"""Labeled region x time grid, under-sampling, folds and model matrices."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import schema
from .features import (SEASON_CODE, DEFAULT_SEASON_MAP, MonthWindow, RegionFeatureTable,
                       month_index, month_of)
from .geodata import Region

N_MONTHS, N_WEEKDAYS, N_INTERVALS = 12, 7, schema.N_INTERVALS


class CellKey(NamedTuple):
    region_id: str
    year: int
    month: int
    weekday: int
    interval: int


class GridCell(NamedTuple):
    key: CellKey
    label: int
    crime_count: int


class Grid:
    """Every (region, year, month, weekday, interval) cell, sorted by CellKey.

    Stored column-wise; indexing or iterating yields GridCell views.
    """

    def __init__(self, region_ids: Sequence[str], years: Sequence[int], crime_count: np.ndarray):
        self.region_ids = list(region_ids)
        self.years = list(years)
        shape = (len(self.region_ids), len(self.years), N_MONTHS, N_WEEKDAYS, N_INTERVALS)
        n = int(np.prod(shape))
        crime_count = np.asarray(crime_count, dtype=np.int64)
        if crime_count.shape != (n,):
            raise ValueError("crime_count does not match grid shape")
        self.crime_count = crime_count
        r, y, m, wd, iv = np.unravel_index(np.arange(n), shape)
        self.region_idx = r.astype(np.int32)
        self.year = np.asarray(self.years, dtype=np.int32)[y]
        self.month = (m + 1).astype(np.int8)
        self.weekday = wd.astype(np.int8)
        self.interval = iv.astype(np.int8)
        self.month_abs = (self.year.astype(np.int64) * 12 + m).astype(np.int32)

    def __len__(self) -> int:
        return len(self.crime_count)

    @property
    def labels(self) -> np.ndarray:
        return (self.crime_count > 0).astype(np.int8)

    def key(self, i: int) -> CellKey:
        return CellKey(self.region_ids[self.region_idx[i]], int(self.year[i]),
                       int(self.month[i]), int(self.weekday[i]), int(self.interval[i]))

    def __getitem__(self, i: int) -> GridCell:
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        c = int(self.crime_count[i])
        return GridCell(self.key(i), int(c > 0), c)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def in_window(self, window: MonthWindow) -> np.ndarray:
        """Sorted row indices whose (year, month) lies in the window."""
        return np.flatnonzero((self.month_abs >= window.start) & (self.month_abs < window.end))

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["region_id", "year", "month", "weekday", "interval", "label", "crime_count"])
            for i in range(len(self)):
                c = int(self.crime_count[i])
                w.writerow([self.region_ids[self.region_idx[i]], int(self.year[i]),
                            int(self.month[i]), int(self.weekday[i]), int(self.interval[i]),
                            int(c > 0), c])

    @classmethod
    def from_csv(cls, path: str | Path) -> "Grid":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        region_ids = list(dict.fromkeys(r["region_id"] for r in rows))
        years = sorted({int(r["year"]) for r in rows})
        grid = cls(region_ids, years, np.array([int(r["crime_count"]) for r in rows]))
        if len(grid) != len(rows):
            raise ValueError(f"{path}: incomplete grid")
        return grid


def build_grid(crimes, regions: Sequence[Region], years: Sequence[int],
               assignment: Sequence[str | None] | None = None) -> Grid:
    """Count crimes per cell; cells with no crime are labeled 0.

    ``crimes`` is either a sequence of CrimeRecord (with ``assignment`` giving
    each record's region id, None = unassigned and skipped) or an iterable of
    (region_id, year, month, weekday, interval) tuples.
    """
    if not years:
        raise ValueError("build_grid needs at least one year")
    region_ids = sorted(r.id for r in regions)
    years = sorted(set(years))
    r_pos = {rid: k for k, rid in enumerate(region_ids)}
    y_pos = {y: k for k, y in enumerate(years)}
    shape = (len(region_ids), len(years), N_MONTHS, N_WEEKDAYS, N_INTERVALS)

    if assignment is not None:
        keys = ((rid, c.year, c.month, c.weekday, c.interval)
                for c, rid in zip(crimes, assignment) if rid is not None)
    else:
        keys = crimes
    rows = list(keys)
    unknown = {k[0] for k in rows} - r_pos.keys()
    if unknown:
        raise ValueError(f"crime assigned to unknown region {min(unknown)!r}")
    rows = [k for k in rows if k[1] in y_pos]
    n = int(np.prod(shape))
    if rows:
        rid, y, m, wd, iv = zip(*rows)
        idx = np.ravel_multi_index((np.array([r_pos[r] for r in rid]), np.array([y_pos[v] for v in y]),
                                    np.asarray(m) - 1, np.asarray(wd), np.asarray(iv)), shape)
    else:
        idx = np.zeros(0, dtype=np.int64)
    counts = np.bincount(idx, minlength=n)
    return Grid(region_ids, years, counts)


def undersample(labels: np.ndarray, ratio: float = 1.0, seed: int = 0,
                rows: np.ndarray | None = None) -> np.ndarray:
    """Keep every crime row and a random ⌊ratio·n_crime⌋ of the no-crime rows.

    Returns the retained row indices (into ``labels``, or a subset of ``rows``)
    in ascending order. Sampling is without replacement and depends only on
    ``seed``.
    """
    labels = np.asarray(labels)
    rows = np.arange(len(labels)) if rows is None else np.asarray(rows)
    if ratio < 1:
        raise ValueError("undersampling ratio must be >= 1")
    lab = labels[rows]
    pos = rows[lab == 1]
    neg = rows[lab == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("undersampling needs both classes present")
    n_keep = min(int(np.floor(ratio * len(pos))), len(neg))
    rng = np.random.default_rng(seed)
    kept = rng.choice(neg, size=n_keep, replace=False)
    return np.sort(np.concatenate([pos, kept]))


@dataclass(frozen=True)
class FoldSpec:
    fold_index: int
    train_window: MonthWindow
    test_window: MonthWindow

    def __post_init__(self):
        if self.train_window.end != self.test_window.start:
            raise ValueError("train and test windows must be adjacent")


def make_folds(months_available: int = 36, n_folds: int = 10, start: tuple[int, int] = (2012, 1),
               train_months: int = 12, test_months: int = 12) -> list[FoldSpec]:
    """Sliding one-month-step folds: train on 12 months, test on the next 12."""
    if months_available < n_folds - 1 + train_months + test_months:
        raise ValueError(
            f"{months_available} months cannot hold {n_folds} folds of "
            f"{train_months}+{test_months} months")
    s0 = month_index(*start)
    return [FoldSpec(i,
                     MonthWindow(s0 + i, s0 + i + train_months),
                     MonthWindow(s0 + i + train_months, s0 + i + train_months + test_months))
            for i in range(n_folds)]


def validation_split(grid: Grid, rows: np.ndarray, window: MonthWindow, n_months: int = 2
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Split training rows into (fit, validation) with the last months held out."""
    cut = window.end - n_months
    m = grid.month_abs[rows]
    return rows[m < cut], rows[m >= cut]


@dataclass
class FeatureMatrix:
    X: np.ndarray
    y: np.ndarray
    columns: list[str]
    groups: list[str]
    rows: np.ndarray  # grid row indices

    def group_slices(self) -> dict[str, np.ndarray]:
        g = np.array(self.groups)
        return {t: np.flatnonzero(g == t) for t in schema.GROUPS if (g == t).any()}

    def to_csv(self, path: str | Path, grid: Grid) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["region_id", "year", "month", "weekday", "interval", *self.columns, "label"])
            for k, i in enumerate(self.rows.tolist()):
                w.writerow([*grid.key(i), *map(repr, self.X[k].tolist()), int(self.y[k])])


def _season_codes(season_map=None) -> np.ndarray:
    season_map = season_map or DEFAULT_SEASON_MAP
    return np.array([SEASON_CODE[season_map[m]] for m in range(1, 13)], dtype=np.int8)


def assemble_matrix(grid: Grid, rows: np.ndarray, table: RegionFeatureTable,
                    mask: Iterable[str], season_map=None) -> FeatureMatrix:
    """Join region features onto grid cells, keeping only the masked groups."""
    mask = set(mask)
    if not mask:
        raise ValueError("feature mask is empty")
    if "R" not in mask:
        raise ValueError("feature mask must include R")
    if mask - set(schema.GROUPS):
        raise ValueError(f"unknown feature groups {sorted(mask - set(schema.GROUPS))}")
    if table.region_ids != grid.region_ids:
        raise ValueError("feature table regions do not match the grid")
    rows = np.asarray(rows, dtype=np.int64)
    reg = grid.region_idx[rows]
    season = _season_codes(season_map)[grid.month[rows] - 1]
    cell = {"month": grid.month[rows], "weekday": grid.weekday[rows],
            "interval": grid.interval[rows], "season": season}
    col_pos = {c: k for k, c in enumerate(table.columns)}
    cols, names, groups = [], [], []
    for fc in table.schema:
        if fc.group not in mask:
            continue
        if fc.source == "cell":
            v = cell[fc.name]
        elif fc.source == "region":
            v = table.values[reg, col_pos[fc.table_columns[0]]]
        elif fc.source in ("season", "interval"):
            pick = season if fc.source == "season" else cell["interval"]
            idx = np.array([col_pos[c] for c in fc.table_columns])
            v = table.values[reg, idx[pick]]
        else:
            raise ValueError(f"unknown column source {fc.source!r}")
        cols.append(np.asarray(v, dtype=float))
        names.append(fc.name)
        groups.append(fc.group)
    X = np.column_stack(cols) if cols else np.zeros((len(rows), 0))
    y = (grid.crime_count[rows] > 0).astype(np.int8)
    return FeatureMatrix(X, y, names, groups, rows)


def month_label(index: int) -> str:
    y, m = month_of(index)
    return f"{y:04d}-{m:02d}"
