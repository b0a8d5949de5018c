"""Per-region feature groups.

R  temporal encodings and crime history
D  demographics
S  streetlights
P  POI counts and category shares
F  check-in dynamics per three-hour interval

Every ratio with a zero denominator is 0.
"""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import TYPE_CHECKING, Mapping, Sequence
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

import numpy as np

from . import schema
from .geodata import Region, assign_events, nearest_distances_km

if TYPE_CHECKING:
    from .ingest import CheckinRecord, CrimeRecord, DemographicProfile, PoiVenue, StreetlightPole

DEFAULT_SEASON_MAP = {
    12: "winter", 1: "winter", 2: "winter",
    3: "spring", 4: "spring", 5: "spring",
    6: "summer", 7: "summer", 8: "summer",
    9: "fall", 10: "fall", 11: "fall",
}
SEASON_CODE = {s: i for i, s in enumerate(schema.SEASONS)}


@dataclass(frozen=True)
class TimeBinning:
    timezone: str = "America/Halifax"
    season_map: Mapping[int, str] = field(default_factory=lambda: dict(DEFAULT_SEASON_MAP))

    def __post_init__(self):
        if sorted(self.season_map) != list(range(1, 13)):
            raise ValueError("season_map must cover months 1-12")
        bad = set(self.season_map.values()) - set(schema.SEASONS)
        if bad:
            raise ValueError(f"unknown seasons {sorted(bad)}")
        try:
            ZoneInfo(self.timezone)
        except (ZoneInfoNotFoundError, ValueError):
            raise ValueError(f"unknown timezone {self.timezone!r}") from None

    @property
    def interval_bounds(self) -> list[tuple[int, int]]:
        return [(3 * i, 3 * i + 3) for i in range(schema.N_INTERVALS)]

    def season_of(self, month: int) -> str:
        return self.season_map[month]


def bin_timestamp(ts: datetime, binning: TimeBinning | None = None
                  ) -> tuple[int, int, int, int, str]:
    """(year, month, weekday, interval, season) of a local timestamp.

    Aware timestamps are converted to the binning timezone first; naive
    ones are taken as already local.
    """
    binning = binning or TimeBinning()
    if ts.tzinfo is not None:
        ts = ts.astimezone(ZoneInfo(binning.timezone))
    return ts.year, ts.month, ts.weekday(), ts.hour // 3, binning.season_of(ts.month)


@dataclass(frozen=True)
class MonthWindow:
    """Half-open range of calendar months [start, end) as absolute month indices."""

    start: int
    end: int

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError("empty month window")

    @classmethod
    def from_months(cls, year: int, month: int, n_months: int) -> "MonthWindow":
        s = month_index(year, month)
        return cls(s, s + n_months)

    def contains(self, year: int, month: int) -> bool:
        return self.start <= month_index(year, month) < self.end

    @property
    def n_months(self) -> int:
        return self.end - self.start

    def label(self) -> str:
        (y0, m0), (y1, m1) = month_of(self.start), month_of(self.end - 1)
        return f"{y0:04d}-{m0:02d}..{y1:04d}-{m1:02d}"


def month_index(year: int, month: int) -> int:
    return year * 12 + (month - 1)


def month_of(index: int) -> tuple[int, int]:
    return index // 12, index % 12 + 1


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    num = np.asarray(num, dtype=float)
    den = np.broadcast_to(np.asarray(den, dtype=float), num.shape)
    out = np.zeros(num.shape)
    np.divide(num, den, out=out, where=den != 0)
    return out


def _region_lookup(regions: Sequence[Region]) -> dict[str, int]:
    return {r.id: k for k, r in enumerate(regions)}


def crime_history_features(crimes: Sequence["CrimeRecord"], regions: Sequence[Region],
                           window: MonthWindow, binning: TimeBinning | None = None,
                           assignment: Sequence[str | None] | None = None) -> dict[str, np.ndarray]:
    """Crime counts and densities per region over a month window.

    Returns arrays aligned with ``regions`` for every CRIME_REGION_COLUMNS name.
    """
    binning = binning or TimeBinning()
    if assignment is None:
        assignment, _ = assign_events([c.location for c in crimes], regions)
    lookup = _region_lookup(regions)
    counts = np.zeros(len(regions), dtype=np.int64)
    seasonal = np.zeros((len(regions), len(schema.SEASONS)), dtype=np.int64)
    for c, rid in zip(crimes, assignment):
        if rid is None or not window.contains(c.year, c.month):
            continue
        k = lookup[rid]
        counts[k] += 1
        seasonal[k, SEASON_CODE[binning.season_of(c.month)]] += 1
    pop = np.array([r.population for r in regions], dtype=float)
    area = np.array([r.area_km2 for r in regions], dtype=float)
    out = {
        "crime_frequency": counts.astype(float),
        "crime_density_pop": _ratio(counts, pop),
        "crime_density_area": _ratio(counts, area),
    }
    for s, name in enumerate(schema.SEASONS):
        out[f"crime_share_{name}"] = _ratio(seasonal[:, s], counts)
    return out


def streetlight_features(lights: Sequence["StreetlightPole"], crimes: Sequence["CrimeRecord"],
                         regions: Sequence[Region], window: MonthWindow | None = None,
                         with_distance: bool = False,
                         light_assignment: Sequence[str | None] | None = None,
                         crime_assignment: Sequence[str | None] | None = None
                         ) -> dict[str, np.ndarray]:
    lookup = _region_lookup(regions)
    if light_assignment is None:
        light_assignment, _ = assign_events([p.location for p in lights], regions)
    counts = np.zeros(len(regions))
    for rid in light_assignment:
        if rid is not None:
            counts[lookup[rid]] += 1
    area = np.array([r.area_km2 for r in regions], dtype=float)
    out = {"streetlight_count": counts, "streetlight_density": _ratio(counts, area)}
    if with_distance:
        if crime_assignment is None:
            crime_assignment, _ = assign_events([c.location for c in crimes], regions)
        dist = np.zeros(len(regions))
        if lights:
            by_region: dict[int, list] = defaultdict(list)
            for c, rid in zip(crimes, crime_assignment):
                if rid is not None and (window is None or window.contains(c.year, c.month)):
                    by_region[lookup[rid]].append(c.location)
            targets = [p.location for p in lights]
            for k, pts in by_region.items():
                dist[k] = float(np.mean(nearest_distances_km(pts, targets)))
        out[schema.LIGHT_DISTANCE_COLUMN] = dist
    return out


def poi_features(pois: Sequence["PoiVenue"], regions: Sequence[Region],
                 assignment: Sequence[str | None] | None = None) -> dict[str, np.ndarray]:
    """POI totals, per-category counts, category shares and per-area densities.

    The ``poi_area_density_*`` entries are computed but not part of the
    selected model columns.
    """
    lookup = _region_lookup(regions)
    if assignment is None:
        assignment, _ = assign_events([p.location for p in pois], regions)
    cats = schema.REPORTED_POI_CATEGORIES
    cat_idx = {c: i for i, c in enumerate(cats)}
    counts = np.zeros((len(regions), len(cats)))
    for p, rid in zip(pois, assignment):
        if rid is not None:
            counts[lookup[rid], cat_idx[schema.POI_REPORT_MAP[p.category]]] += 1
    total = counts.sum(axis=1)
    area = np.array([r.area_km2 for r in regions], dtype=float)
    out = {"poi_total": total}
    for i, c in enumerate(cats):
        out[f"poi_count_{c}"] = counts[:, i]
    for i, c in enumerate(cats):
        out[f"poi_density_{c}"] = _ratio(counts[:, i], total)
    for i, c in enumerate(cats):
        out[f"poi_area_density_{c}"] = _ratio(counts[:, i], area)
    return out


def dynamic_features(checkins: Sequence["CheckinRecord"], pois: Sequence["PoiVenue"],
                     regions: Sequence[Region], binning: TimeBinning | None = None,
                     window: MonthWindow | None = None,
                     poi_assignment: Sequence[str | None] | None = None) -> dict[str, np.ndarray]:
    """Check-in activity per region and three-hour interval.

    Each returned array has shape (n_regions, 8). Keys: ``checkins`` (count),
    ``checkin_density`` (share of the region's check-ins), ``checkin_area_density``
    (per km^2, unselected), ``visitors`` (distinct users) and ``popularity``
    (share of all check-ins in that interval).
    """
    binning = binning or TimeBinning()
    tz = ZoneInfo(binning.timezone)
    lookup = _region_lookup(regions)
    if poi_assignment is None:
        poi_assignment, _ = assign_events([p.location for p in pois], regions)
    venue_region = {p.id: rid for p, rid in zip(pois, poi_assignment)}
    T = schema.N_INTERVALS
    ck = np.zeros((len(regions), T))
    users: dict[tuple[int, int], set] = defaultdict(set)
    for c in checkins:
        rid = venue_region.get(c.venue_id)
        if rid is None:
            continue
        local = c.timestamp.astimezone(tz)
        if window is not None and not window.contains(local.year, local.month):
            continue
        k, t = lookup[rid], local.hour // 3
        ck[k, t] += 1
        users[(k, t)].add(c.user_id)
    visitors = np.zeros_like(ck)
    for (k, t), s in users.items():
        visitors[k, t] = len(s)
    per_region = ck.sum(axis=1, keepdims=True)
    per_interval = ck.sum(axis=0, keepdims=True)
    area = np.array([r.area_km2 for r in regions], dtype=float)[:, None]
    return {
        "checkins": ck,
        "checkin_density": _ratio(ck, per_region),
        "checkin_area_density": _ratio(ck, area),
        "visitors": visitors,
        "popularity": _ratio(ck, per_interval),
    }


@dataclass(frozen=True)
class FeatureColumn:
    """A model-facing column and where its value comes from.

    source is one of: ``cell`` (temporal encoding of the grid cell),
    ``region`` (one region-table column), ``season`` (region-table column
    chosen by the cell's season) or ``interval`` (chosen by the cell's interval).
    """

    name: str
    group: str
    source: str
    table_columns: tuple[str, ...] = ()


def selected_columns(with_light_distance: bool = False) -> list[FeatureColumn]:
    cols = [FeatureColumn(c, "R", "cell") for c in schema.TEMPORAL_COLUMNS]
    cols += [FeatureColumn(c, "R", "region", (c,)) for c in schema.CRIME_REGION_COLUMNS[:3]]
    cols.append(FeatureColumn("crime_density_season", "R", "season",
                              tuple(f"crime_share_{s}" for s in schema.SEASONS)))
    cols += [FeatureColumn(c, "D", "region", (c,)) for c in schema.DEMOGRAPHIC_COLUMNS]
    cols += [FeatureColumn(c, "S", "region", (c,)) for c in schema.STREETLIGHT_COLUMNS]
    if with_light_distance:
        cols.append(FeatureColumn(schema.LIGHT_DISTANCE_COLUMN, "S", "region",
                                  (schema.LIGHT_DISTANCE_COLUMN,)))
    cols += [FeatureColumn(c, "P", "region", (c,)) for c in schema.POI_COLUMNS]
    for base, name in zip(schema.DYNAMIC_BASES,
                          ("checkins_interval", "checkin_density", "visitor_count",
                           "region_popularity")):
        cols.append(FeatureColumn(name, "F", "interval",
                                  tuple(f"{base}_t{t}" for t in range(schema.N_INTERVALS))))
    return cols


@dataclass
class RegionFeatureTable:
    """Wide per-region feature table plus the model-facing column schema."""

    region_ids: list[str]
    columns: list[str]
    groups: list[str]
    values: np.ndarray  # (n_regions, n_columns)
    schema: list[FeatureColumn]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def row(self, region_id: str) -> dict[str, float]:
        k = self.region_ids.index(region_id)
        return dict(zip(self.columns, self.values[k].tolist()))

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["region_id", *self.columns])
            for rid, row in zip(self.region_ids, self.values.tolist()):
                w.writerow([rid, *map(repr, row)])
        sidecar = {
            "columns": [{"name": c, "group": g} for c, g in zip(self.columns, self.groups)],
            "selected": [{"name": c.name, "group": c.group, "source": c.source,
                          "table_columns": list(c.table_columns)} for c in self.schema],
        }
        path.with_suffix(".schema.json").write_text(json.dumps(sidecar, indent=2) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "RegionFeatureTable":
        path = Path(path)
        side = json.loads(path.with_suffix(".schema.json").read_text())
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header = rows[0]
        cols = [c["name"] for c in side["columns"]]
        if header[1:] != cols:
            raise ValueError(f"{path}: header does not match its schema sidecar")
        ids = [r[0] for r in rows[1:]]
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float)
        values = values.reshape(len(ids), len(cols))
        sel = [FeatureColumn(c["name"], c["group"], c["source"], tuple(c["table_columns"]))
               for c in side["selected"]]
        return cls(ids, cols, [c["group"] for c in side["columns"]], values, sel)


def build_region_features(regions: Sequence[Region],
                          crimes: Sequence["CrimeRecord"],
                          lights: Sequence["StreetlightPole"],
                          pois: Sequence["PoiVenue"],
                          checkins: Sequence["CheckinRecord"],
                          demographics: Sequence["DemographicProfile"],
                          window: MonthWindow | None,
                          binning: TimeBinning | None = None,
                          with_light_distance: bool = False,
                          assignments: Mapping[str, Sequence[str | None]] | None = None,
                          ) -> RegionFeatureTable:
    """Assemble every feature group into one table, regions sorted by id.

    ``window=None`` uses all records. ``assignments`` may carry precomputed
    region ids under the keys ``crimes``, ``lights`` and ``pois``.
    """
    binning = binning or TimeBinning()
    regions = sorted(regions, key=lambda r: r.id)
    assignments = dict(assignments or {})
    for key, recs in (("crimes", crimes), ("lights", lights), ("pois", pois)):
        if key not in assignments:
            assignments[key], _ = assign_events([r.location for r in recs], regions)

    if window is None:
        window = _covering_window(crimes, checkins, binning)

    demo = {d.region_id: d for d in demographics}
    missing = [r.id for r in regions if r.id not in demo]
    if missing:
        raise ValueError(f"no demographics for regions {missing[:5]}")

    table: dict[str, np.ndarray] = {}
    groups: dict[str, str] = {}

    hist = crime_history_features(crimes, regions, window, binning, assignments["crimes"])
    for c in schema.CRIME_REGION_COLUMNS:
        table[c], groups[c] = hist[c], "R"
    for j, c in enumerate(schema.DEMOGRAPHIC_COLUMNS):
        table[c] = np.array([demo[r.id].values[j] for r in regions], dtype=float)
        groups[c] = "D"
    light = streetlight_features(lights, crimes, regions, window, with_light_distance,
                                 assignments["lights"], assignments["crimes"])
    for c, v in light.items():
        table[c], groups[c] = v, "S"
    poi = poi_features(pois, regions, assignments["pois"])
    for c in schema.POI_COLUMNS:
        table[c], groups[c] = poi[c], "P"
    dyn = dynamic_features(checkins, pois, regions, binning, window, assignments["pois"])
    for base in schema.DYNAMIC_BASES:
        for t in range(schema.N_INTERVALS):
            name = f"{base}_t{t}"
            table[name], groups[name] = dyn[base][:, t], "F"

    sel = selected_columns(with_light_distance)
    needed = {c for f in sel for c in f.table_columns}
    if not needed <= set(table):
        raise ValueError(f"schema columns missing from table: {sorted(needed - set(table))}")
    columns = list(table)
    values = np.column_stack([table[c] for c in columns])
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite feature values")
    return RegionFeatureTable([r.id for r in regions], columns, [groups[c] for c in columns],
                              values, sel)


def _covering_window(crimes, checkins, binning: TimeBinning) -> MonthWindow:
    tz = ZoneInfo(binning.timezone)
    idx = [month_index(c.year, c.month) for c in crimes]
    for c in checkins:
        local = c.timestamp.astimezone(tz)
        idx.append(month_index(local.year, local.month))
    if not idx:
        return MonthWindow(0, 1)
    return MonthWindow(min(idx), max(idx) + 1)
