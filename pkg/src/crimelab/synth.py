"""Synthetic city with a known crime process.

Regions are a G x G grid of lat/lon squares. Every region carries a latent
deprivation score z. One demographic column (the *driver*) is a noisy
function of z and streetlights thin out where the driver is high. Crime in
each (region, year, month, weekday, interval) cell is Bernoulli with a
logistic intensity built from standardized observable columns:

    logit p = b0 + sum_c w_c std(demo_c) + w_light std(light_density)
              + w_poi std(poi_density) + temporal harmonics
              + I(r, t) + noise(r)

with I(r, t) = kappa std(driver) s(t) - log sum_t q(t) exp(kappa std(driver) s(t)),
q being the normalized interval profile exp(harmonics),
where s = +1 at night (18:00-06:00) and -1 by day. The interaction shifts
*when* crime happens in a region while the recentring keeps its expected
total (to first order in p), so crime history alone does not reveal the
driver.

POIs and check-ins cluster toward a downtown corner and are independent of z.
"""
from __future__ import annotations

import calendar
import hashlib
import json
import math
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Optional
from zoneinfo import ZoneInfo

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.optimize import brentq
from scipy.special import expit

from . import ingest, schema
from .geodata import EARTH_RADIUS_KM, GeoPoint, Region
from .ingest import CheckinRecord, CrimeRecord, DemographicProfile, PoiVenue, StreetlightPole

NIGHT_INTERVALS = (0, 1, 6, 7)
UCR_CODES = ("1120", "1210", "1430", "1610", "2120", "2130", "2140", "3410")
UCR_WEIGHTS = (0.05, 0.1, 0.25, 0.05, 0.2, 0.1, 0.2, 0.05)
POI_WEIGHTS = (0.22, 0.06, 0.03, 0.08, 0.08, 0.15, 0.1, 0.18, 0.07, 0.03)
# local hour profile of check-ins (daytime heavy)
CHECKIN_HOURS = np.array([1, 0.5, 0.3, 0.2, 0.2, 0.5, 1.5, 3, 4, 4, 4.5, 6,
                          7, 6, 5, 5, 5.5, 6.5, 6.5, 5.5, 4.5, 3.5, 2.5, 1.5])
FILES = ("regions.geojson", "demographics.csv", "streetlights.csv", "pois.csv",
         "checkins.csv", "crimes.csv")


class PlantedWeights(BaseModel):
    model_config = ConfigDict(extra="forbid")

    demographic: dict[str, float] = Field(default_factory=dict)
    streetlight_density: float = 0.0
    poi_density: float = 0.0
    interval_harmonics: tuple[float, float] = (0.0, 0.0)  # cos, sin of 2 pi t / 8
    month_harmonics: tuple[float, float] = (0.0, 0.0)     # cos, sin of 2 pi (m-1) / 12
    night_interaction: float = 0.0

    @field_validator("demographic")
    @classmethod
    def _known_columns(cls, v):
        bad = sorted(set(v) - set(schema.DEMOGRAPHIC_COLUMNS))
        if bad:
            raise ValueError(f"unknown demographic columns {bad}")
        return v

    def is_null(self) -> bool:
        return not (any(self.demographic.values()) or self.streetlight_density or self.poi_density
                    or any(self.interval_harmonics) or any(self.month_harmonics)
                    or self.night_interaction)


class CityConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    grid_size: int = Field(8, ge=2)
    n_regions: Optional[int] = Field(None, ge=1)  # keep only the first n squares
    years: list[int] = Field(default_factory=lambda: [2012, 2013, 2014])
    seed: int = 0
    origin: tuple[float, float] = (44.60, -63.66)  # south-west corner, lat/lon
    cell_deg: float = Field(0.01, gt=0)
    base_rate: float = Field(0.03, gt=0, lt=0.5)  # mean cell crime probability
    weights: PlantedWeights = Field(default_factory=PlantedWeights)
    noise_scale: float = Field(0.0, ge=0)
    driver: str = "low_income_total"
    driver_loading: float = 1.5     # how sharply the driver tracks z
    lights_per_km2: float = Field(40.0, gt=0)
    light_gamma: float = 0.8        # light intensity ~ exp(-gamma std(driver))
    n_pois: int = Field(400, ge=0)
    n_users: int = Field(300, ge=1)
    checkins_per_year: int = Field(6000, ge=0)
    downtown_scale_km: float = Field(1.5, gt=0)
    timezone: str = "America/Halifax"

    @model_validator(mode="after")
    def _check(self):
        if not self.years:
            raise ValueError("years must be non-empty")
        if len(set(self.years)) != len(self.years):
            raise ValueError("years must be distinct")
        if self.n_regions is not None and self.n_regions > self.grid_size ** 2:
            raise ValueError("n_regions exceeds grid_size squared")
        if self.driver not in schema.DEMOGRAPHIC_COLUMNS:
            raise ValueError(f"unknown driver column {self.driver!r}")
        lat, lon = self.origin
        top = lat + self.grid_size * self.cell_deg
        right = lon + self.grid_size * self.cell_deg
        if not (-90 <= lat and top <= 90 and -180 <= lon and right <= 180):
            raise ValueError("city does not fit on the globe")
        nums = [self.base_rate, self.noise_scale, self.driver_loading, self.light_gamma,
                self.weights.streetlight_density, self.weights.poi_density,
                self.weights.night_interaction, *self.weights.demographic.values(),
                *self.weights.interval_harmonics, *self.weights.month_harmonics]
        if not all(math.isfinite(v) for v in nums):
            raise ValueError("all rates and weights must be finite")
        return self

    @classmethod
    def planted(cls, **overrides) -> "CityConfig":
        """The reference city used for ordering checks."""
        # No main effect on the driver or on lights: either would let the
        # region-level crime rate stand in for them.
        base = dict(weights=PlantedWeights(
            interval_harmonics=(0.3, 0.0),
            month_harmonics=(-0.15, 0.0),
            night_interaction=4.5), noise_scale=0.15, base_rate=0.015)
        return cls(**(base | overrides))


def _std(v: np.ndarray) -> np.ndarray:
    sd = v.std()
    return (v - v.mean()) / sd if sd > 0 else np.zeros_like(v)


def _square(lat0: float, lon0: float, deg: float) -> tuple[GeoPoint, ...]:
    return (GeoPoint(lat0, lon0), GeoPoint(lat0, lon0 + deg),
            GeoPoint(lat0 + deg, lon0 + deg), GeoPoint(lat0 + deg, lon0))


def rect_area_km2(lat0: float, lon0: float, deg: float) -> float:
    """Exact spherical area of a lat/lon rectangle."""
    R = EARTH_RADIUS_KM
    return R * R * math.radians(deg) * (math.sin(math.radians(lat0 + deg)) - math.sin(math.radians(lat0)))


def _inside(rng, corners: np.ndarray, deg: float, k: int) -> tuple[np.ndarray, np.ndarray]:
    """k uniform points per corner, kept off the borders."""
    m = 0.05 * deg
    lat = corners[:, None, 0] + m + rng.random((len(corners), k)) * (deg - 2 * m)
    lon = corners[:, None, 1] + m + rng.random((len(corners), k)) * (deg - 2 * m)
    return lat, lon


def _demographics(rng, z: np.ndarray, area: np.ndarray, cfg: CityConfig) -> np.ndarray:
    """(n_regions, 32) demographic values; see SCHEMA.md for the distributions."""
    n = len(z)
    pop = np.round(rng.lognormal(math.log(550), 0.35, n))
    hh_size = np.clip(rng.normal(2.4, 0.3, n), 1.2, 4.5)
    households = np.round(pop / hh_size)
    dwell_types = rng.dirichlet([6, 1, 1.5, 1, 3, 1.5, 0.3, 0.2], n) * households[:, None]
    rented_share = np.clip(rng.beta(3, 5, n), 0, 1)
    movers = rng.beta(2, 6, n)
    migrants = rng.beta(2, 10, n)
    workers = np.round(pop * rng.uniform(0.4, 0.6, n))
    commute = rng.dirichlet([12, 2, 2, 0.5, 0.5], n) * workers[:, None]
    leave = rng.dirichlet([1, 3, 5, 4, 2], n) * workers[:, None]
    low_income = 100 * expit(-1.6 + cfg.driver_loading * z + rng.normal(0, 0.2, n))
    low18 = np.clip(low_income * rng.uniform(1.0, 1.5, n), 0, 100)
    low65 = np.clip(low_income * rng.uniform(0.6, 1.1, n), 0, 100)
    cols = {
        "population": pop,
        "population_density": pop / area,
        **{c: dwell_types[:, k] for k, c in enumerate(schema.DEMOGRAPHIC_COLUMNS[2:10])},
        "dwell_owned": households * (1 - rented_share),
        "dwell_rented": households * rented_share,
        "dwell_avg_household_size": hh_size,
        "mobility_movers": pop * movers,
        "mobility_non_movers": pop * (1 - movers),
        "mobility_migrants": pop * migrants,
        "mobility_non_migrants": pop * (1 - migrants),
        "aboriginal_visible_minority": np.round(pop * rng.beta(2, 12, n)),
        **{c: commute[:, k] for k, c in enumerate(schema.DEMOGRAPHIC_COLUMNS[18:23])},
        **{c: leave[:, k] for k, c in enumerate(schema.DEMOGRAPHIC_COLUMNS[23:28])},
        "low_income_total": low_income,
        "low_income_under18": low18,
        "low_income_65plus": low65,
        "age_and_sex": np.clip(rng.normal(41, 6, n), 18, 80),
    }
    if cfg.driver != "low_income_total":
        cols[cfg.driver] = cols[cfg.driver] * np.exp(cfg.driver_loading * 0.5 * z)
    out = np.column_stack([cols[c] for c in schema.DEMOGRAPHIC_COLUMNS])
    return np.round(out, 6)


def _solve_intercept(lin: np.ndarray, target: float) -> float:
    f = lambda b: float(expit(b + lin).mean()) - target
    return brentq(f, -40.0, 40.0, xtol=1e-12)


def _cell_dates(year: int, month: int) -> list[list[int]]:
    """Days of the month grouped by weekday (Monday = 0)."""
    out: list[list[int]] = [[] for _ in range(7)]
    for day in range(1, calendar.monthrange(year, month)[1] + 1):
        out[calendar.weekday(year, month, day)].append(day)
    return out


def generate(config: CityConfig, out_dir: str | Path) -> dict:
    """Write the six input files plus truth_manifest.json; return the manifest."""
    cfg = config
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    root = np.random.SeedSequence(cfg.seed)
    r_geo, r_demo, r_light, r_poi, r_chk, r_crime = (np.random.default_rng(s) for s in root.spawn(6))

    # regions, row-major from the south-west corner
    G, deg = cfg.grid_size, cfg.cell_deg
    n_reg = cfg.n_regions or G * G
    ids = [f"R{k:04d}" for k in range(n_reg)]
    corners = np.array([(cfg.origin[0] + (k // G) * deg, cfg.origin[1] + (k % G) * deg)
                        for k in range(n_reg)])
    area = np.array([rect_area_km2(a, b, deg) for a, b in corners])
    z = r_geo.standard_normal(n_reg)

    demo = _demographics(r_demo, z, area, cfg)
    col = {c: demo[:, k] for k, c in enumerate(schema.DEMOGRAPHIC_COLUMNS)}
    regions = [Region(ids[k], _square(*corners[k], deg), float(area[k]), int(col["population"][k]))
               for k in range(n_reg)]
    driver = _std(col[cfg.driver])

    # streetlights: per-region Poisson, thinner where the driver is high
    lam = cfg.lights_per_km2 * area * np.exp(-cfg.light_gamma * driver)
    n_lights = r_light.poisson(lam)
    lights = []
    for k in range(n_reg):
        la, lo = _inside(r_light, corners[k:k + 1], deg, int(n_lights[k]))
        lights.extend(StreetlightPole(GeoPoint(float(a), float(b))) for a, b in zip(la[0], lo[0]))
    light_density = n_lights / area

    # POIs: regions drawn toward the downtown (north-east) corner
    center = corners + deg / 2
    dt = corners.max(axis=0) + deg / 2
    dist = np.array([math.hypot((c[0] - dt[0]) * 111.2, (c[1] - dt[1]) * 111.2 *
                                math.cos(math.radians(c[0]))) for c in center])
    pull = np.exp(-dist / cfg.downtown_scale_km)
    pull /= pull.sum()
    poi_region = r_poi.choice(n_reg, size=cfg.n_pois, p=pull)
    poi_cat = r_poi.choice(len(schema.POI_CATEGORIES), size=cfg.n_pois, p=POI_WEIGHTS)
    la, lo = _inside(r_poi, corners[poi_region], deg, 1)
    pois = [PoiVenue(f"V{k:05d}", GeoPoint(float(la[k, 0]), float(lo[k, 0])),
                     schema.POI_CATEGORIES[poi_cat[k]]) for k in range(cfg.n_pois)]
    poi_density = np.bincount(poi_region, minlength=n_reg) / area

    # check-ins: popular venues, daytime-heavy local hours, stored in UTC
    tz = ZoneInfo(cfg.timezone)
    checkins = []
    if cfg.n_pois and cfg.checkins_per_year:
        pop_v = r_chk.lognormal(0, 1, cfg.n_pois)
        pop_v /= pop_v.sum()
        hours_p = CHECKIN_HOURS / CHECKIN_HOURS.sum()
        for year in sorted(cfg.years):
            n_days = 366 if calendar.isleap(year) else 365
            k = cfg.checkins_per_year
            venue = r_chk.choice(cfg.n_pois, size=k, p=pop_v)
            user = r_chk.integers(0, cfg.n_users, size=k)
            day = r_chk.integers(0, n_days, size=k)
            hour = r_chk.choice(24, size=k, p=hours_p)
            minute = r_chk.integers(0, 60, size=k)
            rows = sorted(zip(day.tolist(), hour.tolist(), minute.tolist(), user.tolist(),
                              venue.tolist()))
            for d, h, mi, u, v in rows:
                local = datetime(year, 1, 1, h, mi, tzinfo=tz) + timedelta(days=d)
                checkins.append(CheckinRecord(f"U{u:05d}", pois[v].id,
                                              local.astimezone(timezone.utc)))

    # crimes: Bernoulli per cell via Poisson counts with P(count >= 1) = p
    w = cfg.weights
    lin_r = np.zeros(n_reg)
    for c, wc in sorted(w.demographic.items()):
        lin_r += wc * _std(col[c])
    lin_r += w.streetlight_density * _std(light_density)
    lin_r += w.poi_density * _std(poi_density)
    lin_r += cfg.noise_scale * r_crime.standard_normal(n_reg)
    iv = np.arange(schema.N_INTERVALS)
    night = np.where(np.isin(iv, NIGHT_INTERVALS), 1.0, -1.0)
    lin_t = (w.interval_harmonics[0] * np.cos(2 * np.pi * iv / 8)
             + w.interval_harmonics[1] * np.sin(2 * np.pi * iv / 8))
    m = np.arange(12)
    lin_m = (w.month_harmonics[0] * np.cos(2 * np.pi * m / 12)
             + w.month_harmonics[1] * np.sin(2 * np.pi * m / 12))
    years = sorted(cfg.years)
    # (region, month, interval); weekday and year carry no effect
    inter = w.night_interaction * driver[:, None] * night[None, :]
    # recentre against the interval profile so the interaction moves crime
    # between intervals without changing a region's expected total
    base_t = np.exp(lin_t) / np.exp(lin_t).sum()
    inter -= np.log((np.exp(inter) * base_t).sum(axis=1, keepdims=True))
    lin = (lin_r[:, None, None] + lin_m[None, :, None] + lin_t[None, None, :]
           + inter[:, None, :])
    b0 = _solve_intercept(lin, cfg.base_rate)
    p = expit(b0 + lin)
    shape = (n_reg, len(years), 12, 7, schema.N_INTERVALS)
    p_cell = np.broadcast_to(p[:, None, :, None, :], shape)
    counts = r_crime.poisson(-np.log1p(-p_cell))

    crimes = []
    for flat in np.flatnonzero(counts):
        r, yi, mi, wd, t = np.unravel_index(flat, shape)
        year, month = years[yi], int(mi) + 1
        days = _cell_dates(year, month)[wd]
        for _ in range(int(counts.flat[flat])):
            d = days[int(r_crime.integers(len(days)))]
            minute = int(r_crime.integers(180))
            ts = datetime(year, month, d, 3 * int(t) + minute // 60, minute % 60)
            la, lo = _inside(r_crime, corners[r:r + 1], deg, 1)
            code = UCR_CODES[int(r_crime.choice(len(UCR_CODES), p=UCR_WEIGHTS))]
            crimes.append(CrimeRecord(GeoPoint(float(la[0, 0]), float(lo[0, 0])), ts, year, month,
                                      int(wd), int(t), code))

    ingest.write_regions(out / "regions.geojson", regions)
    ingest.write_demographics(out / "demographics.csv",
                              [DemographicProfile(ids[k], tuple(demo[k].tolist())) for k in range(n_reg)])
    ingest.write_streetlights(out / "streetlights.csv", lights)
    ingest.write_pois(out / "pois.csv", pois)
    ingest.write_checkins(out / "checkins.csv", checkins)
    ingest.write_crimes(out / "crimes.csv", crimes)

    region_totals = counts.sum(axis=(1, 2, 3, 4))
    manifest = {
        "config": cfg.model_dump(mode="json"),
        "intercept": b0,
        "counts": {"regions": n_reg, "crimes": len(crimes), "crime_cells": int((counts > 0).sum()),
                   "streetlights": len(lights), "pois": len(pois), "checkins": len(checkins)},
        "latent_z": dict(zip(ids, z.tolist())),
        "region_crimes": dict(zip(ids, region_totals.tolist())),
        "expected_effects": {
            "demographic": {c: int(np.sign(v)) for c, v in sorted(w.demographic.items())},
            "streetlight_density": int(np.sign(w.streetlight_density)),
            "poi_density": int(np.sign(w.poi_density)),
            "driver_x_night": int(np.sign(w.night_interaction)),
            "driver_vs_streetlight_density": -int(np.sign(cfg.light_gamma)),
        },
        "night_intervals": list(NIGHT_INTERVALS),
        "files": {f: hashlib.sha256((out / f).read_bytes()).hexdigest() for f in FILES},
    }
    (out / "truth_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                             encoding="utf-8")
    return manifest
