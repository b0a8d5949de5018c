"""Shared fixtures: small hand-built cities and one generated synthetic city."""
from __future__ import annotations

from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from crimelab import schema
from crimelab.geodata import GeoPoint, Region
from crimelab.ingest import (CheckinRecord, CrimeRecord, DemographicProfile, PoiVenue,
                             StreetlightPole)
from crimelab.features import bin_timestamp

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def square(rid: str, lat0: float, lon0: float, deg: float = 0.01, population: int = 500,
           area: float | None = None) -> Region:
    ring = (GeoPoint(lat0, lon0), GeoPoint(lat0, lon0 + deg), GeoPoint(lat0 + deg, lon0 + deg),
            GeoPoint(lat0 + deg, lon0))
    return Region(rid, ring, area if area is not None else 1.0, population)


def crime_at(lat: float, lon: float, ts: datetime, ucr: str = "1430") -> CrimeRecord:
    y, m, wd, iv, _ = bin_timestamp(ts)
    return CrimeRecord(GeoPoint(lat, lon), ts, y, m, wd, iv, ucr)


class TinyCity:
    """Random records over an n x n block of 0.01 degree squares."""

    def __init__(self, seed: int, n_side: int = 3, n_crimes: int = 80, n_lights: int = 40,
                 n_pois: int = 30, n_checkins: int = 120, years=(2012, 2013, 2014),
                 zero_pop: bool = False):
        rng = np.random.default_rng(seed)
        self.lat0, self.lon0, self.deg = 44.6, -63.6, 0.01
        self.regions = []
        for i in range(n_side):
            for j in range(n_side):
                pop = 0 if zero_pop and i == j == 0 else int(rng.integers(50, 2000))
                self.regions.append(square(f"R{i}{j}", self.lat0 + i * self.deg,
                                           self.lon0 + j * self.deg, self.deg, pop,
                                           float(rng.uniform(0.5, 3.0))))
        span = n_side * self.deg

        def pt():
            # mostly inside, a few outside the block
            return (self.lat0 + rng.uniform(-0.1, 1.1) * span,
                    self.lon0 + rng.uniform(-0.1, 1.1) * span)

        t0 = datetime(years[0], 1, 1)
        n_minutes = (datetime(years[-1] + 1, 1, 1) - t0).days * 1440
        self.crimes = [crime_at(*pt(), t0 + timedelta(minutes=int(rng.integers(n_minutes))))
                       for _ in range(n_crimes)]
        self.lights = [StreetlightPole(GeoPoint(*pt())) for _ in range(n_lights)]
        self.pois = [PoiVenue(f"V{k:03d}", GeoPoint(*pt()),
                              schema.POI_CATEGORIES[int(rng.integers(len(schema.POI_CATEGORIES)))])
                     for k in range(n_pois)]
        t0u = datetime(years[0], 1, 1, tzinfo=timezone.utc)
        self.checkins = [CheckinRecord(f"U{int(rng.integers(15))}",
                                       self.pois[int(rng.integers(n_pois))].id,
                                       t0u + timedelta(minutes=int(rng.integers(n_minutes))))
                         for _ in range(n_checkins)]
        self.demographics = [DemographicProfile(r.id, tuple(rng.uniform(0, 100, len(
            schema.DEMOGRAPHIC_COLUMNS)).tolist())) for r in self.regions]
        self.years = list(years)


@pytest.fixture
def tiny_city():
    return TinyCity(0)


@pytest.fixture(scope="session")
def synth_city(tmp_path_factory):
    """A 3 x 3 planted city over three years, written to disk once."""
    from crimelab.synth import CityConfig, generate
    out = tmp_path_factory.mktemp("city3")
    manifest = generate(CityConfig.planted(grid_size=3, seed=11), out)
    return out, manifest
