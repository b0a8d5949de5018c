"""Flat-file parsers for the six input datasets.

Tabular inputs are UTF-8 CSV with a mandatory header. Bad rows are
skipped and counted per reason; only structural problems (missing file,
wrong header, broken region geometry) raise.
"""
from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Generic, Iterable, Iterator, Sequence, TypeVar

import numpy as np

from . import schema
from .features import TimeBinning, bin_timestamp
from .geodata import GeoPoint, Region, polygon_area_km2


class DataValidationError(ValueError):
    """Input data is structurally unusable."""


class RegionParseError(DataValidationError):
    pass


@dataclass(frozen=True)
class CrimeRecord:
    location: GeoPoint
    timestamp: datetime  # local, naive
    year: int
    month: int
    weekday: int
    interval: int
    ucr_code: str


@dataclass(frozen=True)
class StreetlightPole:
    location: GeoPoint


@dataclass(frozen=True)
class PoiVenue:
    id: str
    location: GeoPoint
    category: str

    def __post_init__(self):
        if self.category not in schema.POI_CATEGORIES:
            raise ValueError(f"unknown POI category {self.category!r}")


@dataclass(frozen=True)
class CheckinRecord:
    user_id: str
    venue_id: str
    timestamp: datetime  # aware, UTC, minute precision


@dataclass(frozen=True)
class DemographicProfile:
    region_id: str
    values: tuple[float, ...]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(schema.DEMOGRAPHIC_COLUMNS, self.values))


T = TypeVar("T")


@dataclass
class ParseResult(Generic[T]):
    records: list[T]
    rejected: int = 0
    reasons: Counter = field(default_factory=Counter)
    imputed: int = 0

    @property
    def total(self) -> int:
        return len(self.records) + self.rejected

    def reject(self, reason: str) -> None:
        self.rejected += 1
        self.reasons[reason] += 1


def _rows(path: str | Path, header: Sequence[str]) -> Iterator[dict[str, str]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames) != list(header):
            raise DataValidationError(
                f"{path}: expected header {','.join(header)}, got {reader.fieldnames}")
        yield from reader


def _point(lat: str | None, lon: str | None) -> GeoPoint:
    if lat is None or lon is None or not lat.strip() or not lon.strip():
        raise ValueError("null coordinate")
    return GeoPoint(float(lat), float(lon))


def _parse_local(ts: str, binning: TimeBinning) -> datetime:
    dt = datetime.fromisoformat(ts.strip().replace("Z", "+00:00"))
    if dt.tzinfo is not None:
        from zoneinfo import ZoneInfo
        dt = dt.astimezone(ZoneInfo(binning.timezone)).replace(tzinfo=None)
    return dt


def parse_regions(path: str | Path) -> list[Region]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise RegionParseError(f"{path}: invalid JSON ({e})") from e
    if doc.get("type") != "FeatureCollection" or not isinstance(doc.get("features"), list):
        raise RegionParseError(f"{path}: not a GeoJSON FeatureCollection")
    regions, seen = [], set()
    for n, feat in enumerate(doc["features"]):
        props = feat.get("properties") or {}
        rid = props.get("id")
        where = f"feature #{n} (id={rid!r})"
        if rid is None:
            raise RegionParseError(f"{where}: missing id")
        rid = str(rid)
        if rid in seen:
            raise RegionParseError(f"{where}: duplicate region id {rid!r}")
        seen.add(rid)
        geom = feat.get("geometry") or {}
        coords = geom.get("coordinates")
        if geom.get("type") != "Polygon" or not coords or not coords[0]:
            raise RegionParseError(f"{where}: geometry must be a Polygon")
        try:
            ring = [GeoPoint(float(lat), float(lon)) for lon, lat, *_ in coords[0]]
            if len(ring) > 1 and ring[0] == ring[-1]:
                ring = ring[:-1]
            area = props.get("area_km2")
            area = float(area) if area is not None else polygon_area_km2(ring)
            population = int(props.get("population", 0))
            regions.append(Region(rid, tuple(ring), area, population))
        except (TypeError, ValueError) as e:
            raise RegionParseError(f"{where}: {e}") from e
    return regions


def parse_crimes(path: str | Path, binning: TimeBinning | None = None) -> ParseResult[CrimeRecord]:
    binning = binning or TimeBinning()
    out: ParseResult[CrimeRecord] = ParseResult([])
    for row in _rows(path, ("lat", "lon", "timestamp", "ucr_code")):
        try:
            loc = _point(row["lat"], row["lon"])
        except (TypeError, ValueError):
            out.reject("invalid location")
            continue
        try:
            ts = _parse_local(row["timestamp"] or "", binning)
        except ValueError:
            out.reject("invalid timestamp")
            continue
        year, month, weekday, interval, _ = bin_timestamp(ts, binning)
        out.records.append(CrimeRecord(loc, ts, year, month, weekday, interval,
                                       (row["ucr_code"] or "").strip()))
    return out


def parse_streetlights(path: str | Path) -> ParseResult[StreetlightPole]:
    out: ParseResult[StreetlightPole] = ParseResult([])
    for row in _rows(path, ("lat", "lon")):
        try:
            out.records.append(StreetlightPole(_point(row["lat"], row["lon"])))
        except (TypeError, ValueError):
            out.reject("invalid location")
    return out


def parse_pois(path: str | Path) -> ParseResult[PoiVenue]:
    out: ParseResult[PoiVenue] = ParseResult([])
    seen: set[str] = set()
    for row in _rows(path, ("id", "lat", "lon", "category")):
        vid = (row["id"] or "").strip()
        if not vid:
            out.reject("missing id")
            continue
        if vid in seen:
            out.reject("duplicate id")
            continue
        try:
            loc = _point(row["lat"], row["lon"])
        except (TypeError, ValueError):
            out.reject("invalid location")
            continue
        cat = (row["category"] or "").strip()
        if cat not in schema.POI_CATEGORIES:
            out.reject("unknown category")
            continue
        seen.add(vid)
        out.records.append(PoiVenue(vid, loc, cat))
    return out


def parse_checkins(path: str | Path, venues: Iterable[PoiVenue]) -> ParseResult[CheckinRecord]:
    known = {v.id for v in venues}
    out: ParseResult[CheckinRecord] = ParseResult([])
    for row in _rows(path, ("user_id", "venue_id", "timestamp")):
        uid = (row["user_id"] or "").strip()
        vid = (row["venue_id"] or "").strip()
        if not uid:
            out.reject("missing user")
            continue
        if vid not in known:
            out.reject("orphan venue")
            continue
        try:
            ts = datetime.fromisoformat((row["timestamp"] or "").strip().replace("Z", "+00:00"))
        except ValueError:
            out.reject("invalid timestamp")
            continue
        if ts.tzinfo is None:
            ts = ts.replace(tzinfo=timezone.utc)
        ts = ts.astimezone(timezone.utc).replace(second=0, microsecond=0)
        out.records.append(CheckinRecord(uid, vid, ts))
    return out


def parse_demographics(path: str | Path) -> ParseResult[DemographicProfile]:
    """Missing cells are imputed to the column median and counted in ``imputed``."""
    cols = schema.DEMOGRAPHIC_COLUMNS
    out: ParseResult[DemographicProfile] = ParseResult([])
    raw: list[tuple[str, list[float]]] = []
    seen: set[str] = set()
    for row in _rows(path, ("region_id", *cols)):
        rid = (row["region_id"] or "").strip()
        if not rid or rid in seen:
            out.reject("missing id" if not rid else "duplicate id")
            continue
        vals: list[float] = []
        ok = True
        for c in cols:
            cell = (row[c] or "").strip()
            if not cell:
                vals.append(math.nan)
                continue
            try:
                v = float(cell)
            except ValueError:
                ok = False
                break
            if not math.isfinite(v) or v < 0:
                ok = False
                break
            vals.append(v)
        if not ok:
            out.reject("invalid value")
            continue
        seen.add(rid)
        raw.append((rid, vals))
    if raw:
        arr = np.array([v for _, v in raw], dtype=float)
        holes = np.isnan(arr)
        if holes.any():
            med = np.nanmedian(np.where(holes.all(axis=0), 0.0, arr), axis=0)
            arr = np.where(holes, med, arr)
            out.imputed = int(holes.sum())
        for (rid, _), vals in zip(raw, arr.tolist()):
            out.records.append(DemographicProfile(rid, tuple(vals)))
    return out


@dataclass
class City:
    """All six datasets of one city, parsed."""

    regions: list[Region]
    crimes: ParseResult[CrimeRecord]
    lights: ParseResult[StreetlightPole]
    pois: ParseResult[PoiVenue]
    checkins: ParseResult[CheckinRecord]
    demographics: ParseResult[DemographicProfile]

    def rejected(self) -> dict[str, int]:
        return {k: getattr(self, k).rejected
                for k in ("crimes", "lights", "pois", "checkins", "demographics")}


CITY_FILES = {"regions": "regions.geojson", "crimes": "crimes.csv", "lights": "streetlights.csv",
              "pois": "pois.csv", "checkins": "checkins.csv", "demographics": "demographics.csv"}


def load_city(directory: str | Path, binning: TimeBinning | None = None,
              files: dict[str, str | Path] | None = None) -> City:
    """Parse a city directory laid out with the CITY_FILES names.

    ``files`` overrides individual paths (relative ones resolve against
    ``directory``).
    """
    base = Path(directory)
    paths = {k: base / v for k, v in CITY_FILES.items()}
    for k, v in (files or {}).items():
        if k not in CITY_FILES:
            raise ValueError(f"unknown dataset {k!r}")
        paths[k] = base / v
    pois = parse_pois(paths["pois"])
    return City(parse_regions(paths["regions"]), parse_crimes(paths["crimes"], binning),
                parse_streetlights(paths["lights"]), pois,
                parse_checkins(paths["checkins"], pois.records),
                parse_demographics(paths["demographics"]))


# canonical writers; they round-trip through the parsers above

def _write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt_local(ts: datetime) -> str:
    return ts.isoformat(timespec="minutes") if ts.second == 0 and ts.microsecond == 0 \
        else ts.isoformat()


def write_crimes(path, crimes: Iterable[CrimeRecord]) -> None:
    _write_csv(path, ("lat", "lon", "timestamp", "ucr_code"),
               ((repr(c.location.lat), repr(c.location.lon), _fmt_local(c.timestamp), c.ucr_code)
                for c in crimes))


def write_streetlights(path, lights: Iterable[StreetlightPole]) -> None:
    _write_csv(path, ("lat", "lon"),
               ((repr(p.location.lat), repr(p.location.lon)) for p in lights))


def write_pois(path, pois: Iterable[PoiVenue]) -> None:
    _write_csv(path, ("id", "lat", "lon", "category"),
               ((p.id, repr(p.location.lat), repr(p.location.lon), p.category) for p in pois))


def write_checkins(path, checkins: Iterable[CheckinRecord]) -> None:
    _write_csv(path, ("user_id", "venue_id", "timestamp"),
               ((c.user_id, c.venue_id,
                 c.timestamp.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%MZ"))
                for c in checkins))


def write_demographics(path, profiles: Iterable[DemographicProfile]) -> None:
    _write_csv(path, ("region_id", *schema.DEMOGRAPHIC_COLUMNS),
               ((d.region_id, *map(repr, d.values)) for d in profiles))


def write_regions(path, regions: Iterable[Region], include_area: bool = True) -> None:
    feats = []
    for r in regions:
        ring = [[p.lon, p.lat] for p in r.ring]
        ring.append(ring[0])
        props = {"id": r.id, "population": r.population}
        if include_area:
            props["area_km2"] = r.area_km2
        feats.append({"type": "Feature", "properties": props,
                      "geometry": {"type": "Polygon", "coordinates": [ring]}})
    doc = {"type": "FeatureCollection", "features": feats}
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")
