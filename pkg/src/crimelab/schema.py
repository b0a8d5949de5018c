"""Canonical column lists shared by the parsers, feature builder and generator.

See SCHEMA.md at the repository root for the meaning of each column.
"""
from __future__ import annotations

GROUPS = ("R", "D", "S", "F", "P")

POI_CATEGORIES = (
    "food",
    "arts_entertainment",
    "college_university",
    "nightlife",
    "outdoors_recreation",
    "professional_other",
    "residence",
    "shop_service",
    "travel_transport",
    "event",
)

# "event" folds into professional_other for the reported columns
REPORTED_POI_CATEGORIES = (
    "food",
    "residence",
    "nightlife",
    "arts_entertainment",
    "college_university",
    "outdoors_recreation",
    "professional_other",
    "shop_service",
    "travel_transport",
)
POI_REPORT_MAP = {c: c for c in REPORTED_POI_CATEGORIES} | {"event": "professional_other"}

DEMOGRAPHIC_COLUMNS = (
    "population",
    "population_density",
    # dwelling characteristics (11)
    "dwell_single_detached",
    "dwell_semi_detached",
    "dwell_row_house",
    "dwell_apartment_duplex",
    "dwell_apartment_lt5_storeys",
    "dwell_apartment_ge5_storeys",
    "dwell_other_attached",
    "dwell_movable",
    "dwell_owned",
    "dwell_rented",
    "dwell_avg_household_size",
    # mobility (4)
    "mobility_movers",
    "mobility_non_movers",
    "mobility_migrants",
    "mobility_non_migrants",
    "aboriginal_visible_minority",
    # main mode of commute (5)
    "commute_car",
    "commute_public_transit",
    "commute_walk",
    "commute_bicycle",
    "commute_other",
    # time leaving for work (5)
    "leave_5_6am",
    "leave_6_7am",
    "leave_7_8am",
    "leave_8_9am",
    "leave_9am_noon",
    # low income (3)
    "low_income_total",
    "low_income_under18",
    "low_income_65plus",
    "age_and_sex",
)
assert len(DEMOGRAPHIC_COLUMNS) == 32

SEASONS = ("winter", "spring", "summer", "fall")
N_INTERVALS = 8

# cell-level temporal encodings, always in the R group
TEMPORAL_COLUMNS = ("month", "weekday", "interval", "season")

CRIME_REGION_COLUMNS = (
    "crime_frequency",
    "crime_density_pop",
    "crime_density_area",
) + tuple(f"crime_share_{s}" for s in SEASONS)

STREETLIGHT_COLUMNS = ("streetlight_count", "streetlight_density")
LIGHT_DISTANCE_COLUMN = "avg_min_light_distance"

POI_COLUMNS = (
    ("poi_total",)
    + tuple(f"poi_count_{c}" for c in REPORTED_POI_CATEGORIES)
    + tuple(f"poi_density_{c}" for c in REPORTED_POI_CATEGORIES)
)
assert len(POI_COLUMNS) == 19

DYNAMIC_BASES = ("checkins", "checkin_density", "visitors", "popularity")
DYNAMIC_COLUMNS = tuple(f"{b}_t{t}" for b in DYNAMIC_BASES for t in range(N_INTERVALS))
