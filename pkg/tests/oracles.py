"""Naive recount oracles for the region feature groups.

Every value is rebuilt with plain loops over the raw records and an
exhaustive point-in-region scan, independent of the vectorised code paths.
"""
from __future__ import annotations

from zoneinfo import ZoneInfo

from crimelab import schema
from crimelab.features import DEFAULT_SEASON_MAP, MonthWindow
from crimelab.geodata import point_in_region


def region_of(point, regions):
    hits = sorted(r.id for r in regions if point_in_region(point, r))
    return hits[0] if hits else None


def div(a, b):
    return a / b if b != 0 else 0.0


def naive_features(city, window: MonthWindow, tz: str = "America/Halifax") -> dict[str, dict]:
    """{region_id: {column: value}} for every table column."""
    zone = ZoneInfo(tz)
    regions = sorted(city.regions, key=lambda r: r.id)
    out = {}
    poi_region = {p.id: region_of(p.location, regions) for p in city.pois}
    interval_totals = [0] * schema.N_INTERVALS
    for c in city.checkins:
        local = c.timestamp.astimezone(zone)
        if poi_region.get(c.venue_id) is not None and window.contains(local.year, local.month):
            interval_totals[local.hour // 3] += 1

    for r in regions:
        row = {}
        mine = [c for c in city.crimes
                if region_of(c.location, regions) == r.id and window.contains(c.year, c.month)]
        n = len(mine)
        row["crime_frequency"] = float(n)
        row["crime_density_pop"] = div(n, r.population)
        row["crime_density_area"] = div(n, r.area_km2)
        for s in schema.SEASONS:
            k = sum(1 for c in mine if DEFAULT_SEASON_MAP[c.month] == s)
            row[f"crime_share_{s}"] = div(k, n)

        lights = sum(1 for p in city.lights if region_of(p.location, regions) == r.id)
        row["streetlight_count"] = float(lights)
        row["streetlight_density"] = div(lights, r.area_km2)

        venues = [p for p in city.pois if poi_region[p.id] == r.id]
        row["poi_total"] = float(len(venues))
        for cat in schema.REPORTED_POI_CATEGORIES:
            k = sum(1 for p in venues if schema.POI_REPORT_MAP[p.category] == cat)
            row[f"poi_count_{cat}"] = float(k)
            row[f"poi_density_{cat}"] = div(k, len(venues))

        per_t = [[] for _ in range(schema.N_INTERVALS)]
        for c in city.checkins:
            if poi_region.get(c.venue_id) != r.id:
                continue
            local = c.timestamp.astimezone(zone)
            if window.contains(local.year, local.month):
                per_t[local.hour // 3].append(c.user_id)
        total = sum(len(v) for v in per_t)
        for t, users in enumerate(per_t):
            row[f"checkins_t{t}"] = float(len(users))
            row[f"checkin_density_t{t}"] = div(len(users), total)
            row[f"visitors_t{t}"] = float(len(set(users)))
            row[f"popularity_t{t}"] = div(len(users), interval_totals[t])

        demo = {d.region_id: d for d in city.demographics}[r.id]
        for j, col in enumerate(schema.DEMOGRAPHIC_COLUMNS):
            row[col] = demo.values[j]
        out[r.id] = row
    return out


def compare(table, expected: dict[str, dict], rel: float = 1e-12) -> list[str]:
    """Mismatch descriptions; counts must be exact, ratios within ``rel``."""
    bad = []
    exact = ("crime_frequency", "streetlight_count", "poi_total", "poi_count_", "checkins_t",
             "visitors_t")
    for rid, row in expected.items():
        got = table.row(rid)
        for col, want in row.items():
            v = got[col]
            if col.startswith(exact):
                ok = v == want
            else:
                ok = abs(v - want) <= rel * max(abs(want), 1e-300) or v == want
            if not ok:
                bad.append(f"{rid}.{col}: {v!r} != {want!r}")
    return bad
