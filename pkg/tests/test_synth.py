import json

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import stats

from crimelab import schema
from crimelab.dataset import build_grid
from crimelab.features import build_region_features
from crimelab.geodata import GeoPoint, assign_events, polygon_area_km2
from crimelab.ingest import load_city
from crimelab.synth import NIGHT_INTERVALS, CityConfig, PlantedWeights, generate, rect_area_km2


def small(**kw):
    base = dict(grid_size=3, years=[2013], n_pois=40, checkins_per_year=300)
    return CityConfig(**(base | kw))


def _chi2(obs):
    e = obs.mean()
    return float(((obs - e) ** 2 / e).sum()), len(obs) - 1


def test_null_city_spreads_crime_uniformly(tmp_path):
    # [DERIVED] with no effects every cell has the same crime probability, so
    # crime cells per region and per interval are exchangeable; pool 20 seeds
    chi_r = chi_t = 0.0
    df_r = df_t = 0
    for seed in range(20):
        cfg = small(seed=seed, base_rate=0.05)
        assert cfg.weights.is_null()
        generate(cfg, tmp_path / f"c{seed}")
        city = load_city(tmp_path / f"c{seed}")
        regions = sorted(city.regions, key=lambda r: r.id)
        crimes = city.crimes.records
        grid = build_grid(crimes, regions, cfg.years,
                          assign_events([c.location for c in crimes], regions)[0])
        lab = grid.labels.reshape(len(regions), -1, schema.N_INTERVALS)
        c, d = _chi2(lab.sum(axis=(1, 2)))
        chi_r, df_r = chi_r + c, df_r + d
        c, d = _chi2(lab.sum(axis=(0, 1)))
        chi_t, df_t = chi_t + c, df_t + d
    assert stats.chi2.sf(chi_r, df_r) > 0.01
    assert stats.chi2.sf(chi_t, df_t) > 0.01


def test_generation_is_byte_deterministic(tmp_path):
    a = generate(small(seed=3), tmp_path / "a")
    b = generate(small(seed=3), tmp_path / "b")
    c = generate(small(seed=4), tmp_path / "c")
    assert a["files"] == b["files"]
    assert (tmp_path / "a" / "truth_manifest.json").read_bytes() == \
        (tmp_path / "b" / "truth_manifest.json").read_bytes()
    assert a["files"]["crimes.csv"] != c["files"]["crimes.csv"]


def test_manifest_counts_match_files(synth_city):
    out, manifest = synth_city
    city = load_city(out)
    assert all(v == 0 for v in city.rejected().values())
    counts = manifest["counts"]
    assert counts["regions"] == len(city.regions) == 9
    assert counts["crimes"] == len(city.crimes.records)
    assert counts["streetlights"] == len(city.lights.records)
    assert counts["pois"] == len(city.pois.records)
    assert counts["checkins"] == len(city.checkins.records)
    assert sum(manifest["region_crimes"].values()) == counts["crimes"]
    assert manifest["expected_effects"]["driver_x_night"] == 1
    assert manifest["night_intervals"] == list(NIGHT_INTERVALS)
    saved = json.loads((out / "truth_manifest.json").read_text())
    assert saved["counts"] == counts


def test_base_rate_is_hit(tmp_path):
    cfg = small(seed=1, grid_size=4, base_rate=0.04, years=[2012, 2013])
    m = generate(cfg, tmp_path)
    n_cells = 16 * 2 * 12 * 7 * 8
    rate = m["counts"]["crime_cells"] / n_cells
    assert rate == pytest.approx(0.04, abs=4 * np.sqrt(0.04 * 0.96 / n_cells))


def test_lights_thin_out_where_driver_is_high(tmp_path):
    cfg = small(seed=2, grid_size=7, light_gamma=1.0)
    generate(cfg, tmp_path)
    city = load_city(tmp_path)
    regions = sorted(city.regions, key=lambda r: r.id)
    table = build_region_features(city.regions, city.crimes.records, city.lights.records,
                                  city.pois.records, city.checkins.records,
                                  city.demographics.records, None)
    rho = stats.spearmanr(table.column(cfg.driver), table.column("streetlight_density"))[0]
    assert rho < -0.3
    assert len(regions) == 49


def test_planted_night_interaction_sign(tmp_path):
    cfg = CityConfig.planted(grid_size=5, seed=6, years=[2013], base_rate=0.05)
    generate(cfg, tmp_path)
    city = load_city(tmp_path)
    demo = {d.region_id: d.as_dict()[cfg.driver] for d in city.demographics.records}
    regions = sorted(city.regions, key=lambda r: r.id)
    ids = assign_events([c.location for c in city.crimes.records], regions)[0]
    night = {r.id: 0 for r in regions}
    total = {r.id: 0 for r in regions}
    for c, rid in zip(city.crimes.records, ids):
        total[rid] += 1
        night[rid] += c.interval in NIGHT_INTERVALS
    keys = [r.id for r in regions]
    share = [night[k] / total[k] for k in keys]
    assert stats.spearmanr([demo[k] for k in keys], share)[0] > 0.5


def test_region_area_is_spherical():
    cfg = small(seed=0)
    for lat in (0.0, 44.6, 70.0):
        ring = [GeoPoint(lat, 10), GeoPoint(lat, 10.01), GeoPoint(lat + 0.01, 10.01),
                GeoPoint(lat + 0.01, 10)]
        assert polygon_area_km2(ring) == pytest.approx(rect_area_km2(lat, 10, 0.01), rel=0.01)
    assert cfg.cell_deg == 0.01


@pytest.mark.parametrize("bad", [
    {"driver": "shoe_size"},
    {"base_rate": 0.0},
    {"years": [2012, 2012]},
    {"years": []},
    {"grid_size": 1},
    {"grid_size": 3, "n_regions": 10},
    {"colour": "red"},
    {"origin": (89.99, 0.0)},
    {"noise_scale": float("inf")},
])
def test_config_rejects_invalid(bad):
    with pytest.raises(ValidationError):
        CityConfig(**bad)


def test_weights_reject_unknown_column():
    with pytest.raises(ValidationError):
        PlantedWeights(demographic={"shoe_size": 1.0})
    assert not CityConfig.planted().weights.is_null()
