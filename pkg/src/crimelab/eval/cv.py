"""Sliding-window cross-validation over the feature-mask model matrix.

Every (model, classifier, fold) unit owns a seed derived from the master
seed and its names, so results do not depend on the order or parallelism
of evaluation.
"""
from __future__ import annotations

import json
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from joblib import Parallel, delayed

from ..dataset import FoldSpec, Grid, assemble_matrix, build_grid, undersample, validation_split
from ..features import MonthWindow, RegionFeatureTable, TimeBinning, build_region_features
from ..geodata import Region, assign_events
from ..learn import (BoostParams, ForestParams, MlpParams, fit_forest, fit_gbm, fit_mlp,
                     random_search)
from .metrics import auc, confusion, metrics

# Table order; masks always contain R
MODEL_MASKS: dict[str, str] = {
    "MR": "R", "MD": "RD", "MS": "RS", "MF": "RF", "MP": "RP",
    "MDS": "RDS", "MDF": "RDF", "MDP": "RDP", "MSF": "RSF", "MSP": "RSP", "MFP": "RFP",
    "MA": "RDSFP",
}
CLASSIFIER_ORDER = ("forest", "gbm", "mlp_baseline")
METRICS = ("accuracy", "precision", "recall", "f_score", "macro_f_score", "auc")


@dataclass(frozen=True)
class ModelSpec:
    name: str
    classifier: str

    def __post_init__(self):
        if self.name not in MODEL_MASKS:
            raise ValueError(f"unknown model {self.name!r}")
        if self.classifier not in CLASSIFIER_ORDER:
            raise ValueError(f"unknown classifier {self.classifier!r}")

    @property
    def mask(self) -> tuple[str, ...]:
        return tuple(MODEL_MASKS[self.name])

    def sort_key(self):
        return list(MODEL_MASKS).index(self.name), CLASSIFIER_ORDER.index(self.classifier)


def model_matrix(models: Sequence[str] | None = None,
                 classifiers: Sequence[str] = ("forest", "gbm"),
                 baseline: bool = True) -> list[ModelSpec]:
    """Every model under every classifier, plus the MLP baseline on MA."""
    models = list(MODEL_MASKS) if models is None else list(models)
    specs = [ModelSpec(m, c) for m in models for c in classifiers]
    if baseline:
        specs.append(ModelSpec("MA", "mlp_baseline"))
    return sorted(set(specs), key=ModelSpec.sort_key)


def derive_seed(master: int, *keys: str | int) -> int:
    """A 63-bit seed determined by the master seed and a path of names."""
    key = tuple(zlib.crc32(k.encode()) if isinstance(k, str) else int(k) for k in keys)
    ss = np.random.SeedSequence(int(master), spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass
class CvSettings:
    paper_mode: bool = False
    ratio: float = 1.0
    threshold: float = 0.5
    validation_months: int = 2
    forest: dict[str, Any] = field(default_factory=dict)
    gbm: dict[str, Any] = field(default_factory=dict)
    mlp: dict[str, Any] = field(default_factory=dict)
    # classifier -> {"grid": mapping or list of configs, "n_samples": int}
    search: dict[str, dict[str, Any]] = field(default_factory=dict)
    jobs: int = 1
    # master seed for under-sampling draws; None = the run's master seed
    undersample_seed: int | None = None


class CvInputs:
    """Parsed city records plus cached per-window feature tables."""

    def __init__(self, regions: Sequence[Region], crimes, lights, pois, checkins, demographics,
                 years: Sequence[int], binning: TimeBinning | None = None,
                 with_light_distance: bool = False):
        self.regions = sorted(regions, key=lambda r: r.id)
        self.crimes, self.lights, self.pois = list(crimes), list(lights), list(pois)
        self.checkins, self.demographics = list(checkins), list(demographics)
        self.binning = binning or TimeBinning()
        self.with_light_distance = with_light_distance
        self.assignments = {
            "crimes": assign_events([c.location for c in self.crimes], self.regions)[0],
            "lights": assign_events([p.location for p in self.lights], self.regions)[0],
            "pois": assign_events([p.location for p in self.pois], self.regions)[0],
        }
        self.grid: Grid = build_grid(self.crimes, self.regions, years, self.assignments["crimes"])
        self._tables: dict[tuple[int, int] | None, RegionFeatureTable] = {}

    @classmethod
    def from_artifacts(cls, grid: Grid, tables: Mapping[tuple[int, int] | None, RegionFeatureTable],
                       binning: TimeBinning | None = None) -> "CvInputs":
        """Inputs backed only by a saved grid and prebuilt feature tables.

        Keys of ``tables`` are (start, end) month windows or None for the
        all-data table. Asking for any other window raises KeyError.
        """
        self = cls.__new__(cls)
        self.regions = self.crimes = self.lights = self.pois = None
        self.checkins = self.demographics = None
        self.binning = binning or TimeBinning()
        self.with_light_distance = False
        self.assignments = {}
        self.grid = grid
        self._tables = dict(tables)
        return self

    def table(self, window: MonthWindow | None) -> RegionFeatureTable:
        key = None if window is None else (window.start, window.end)
        if key not in self._tables:
            if self.crimes is None:
                raise KeyError(f"no feature table for window {key}")
            self._tables[key] = build_region_features(
                self.regions, self.crimes, self.lights, self.pois, self.checkins,
                self.demographics, window, self.binning, self.with_light_distance,
                self.assignments)
        return self._tables[key]


@dataclass
class FoldResult:
    fold: int
    n_train: int
    n_test: int
    test_positives: int
    accuracy: float
    precision: float
    recall: float
    f_score: float
    macro_f_score: float
    auc: float | None          # in [0, 1]; None when the test split has one class
    best_epoch: int | None = None
    params: dict[str, Any] = field(default_factory=dict)


@dataclass
class ReportRow:
    model: str
    classifier: str
    folds: list[FoldResult]

    @property
    def mask(self) -> tuple[str, ...]:
        return tuple(MODEL_MASKS[self.model])

    def mean(self, metric: str) -> float:
        vals = [getattr(f, metric) for f in self.folds]
        vals = [v for v in vals if v is not None]
        return sum(vals) / len(vals) if vals else math.nan

    def means(self) -> dict[str, float]:
        return {m: self.mean(m) for m in METRICS}


@dataclass
class EvalReport:
    rows: list[ReportRow] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)

    def row(self, model: str, classifier: str) -> ReportRow:
        for r in self.rows:
            if r.model == model and r.classifier == classifier:
                return r
        raise KeyError((model, classifier))

    def to_dict(self) -> dict:
        return {"format": "crimelab-eval", "version": 1, "meta": self.meta,
                "rows": [{"model": r.model, "classifier": r.classifier, "mask": "".join(r.mask),
                          "mean": r.means(), "folds": [asdict(f) for f in r.folds]}
                         for r in self.rows]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvalReport":
        if d.get("format") != "crimelab-eval":
            raise ValueError("not a crimelab evaluation report")
        rows = [ReportRow(r["model"], r["classifier"], [FoldResult(**f) for f in r["folds"]])
                for r in d["rows"]]
        return cls(rows, dict(d.get("meta", {})))

    def save(self, path: str | Path) -> None:
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True, allow_nan=True)
        Path(path).write_text(text + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# classifiers ---------------------------------------------------------------

def make_params(classifier: str, settings: CvSettings, overrides: Mapping | None = None):
    cfg = {"forest": settings.forest, "gbm": settings.gbm, "mlp_baseline": settings.mlp}[classifier]
    cfg = dict(cfg) | dict(overrides or {})
    cls = {"forest": ForestParams, "gbm": BoostParams, "mlp_baseline": MlpParams}[classifier]
    return cls(**cfg)


@dataclass
class Outcome:
    proba: np.ndarray
    best_epoch: int | None = None


def fit_predict(classifier: str, params, X_train, y_train, X_test, y_test, groups: Sequence[str],
                seed: int, threshold: float = 0.5) -> Outcome:
    if classifier == "forest":
        return Outcome(fit_forest(X_train, y_train, params, seed).predict_proba(X_test))
    if classifier == "gbm":
        return Outcome(fit_gbm(X_train, y_train, params, seed).predict_proba(X_test))
    if classifier == "mlp_baseline":
        model, _ = fit_mlp(X_train, groups, y_train, params, seed, (X_test, y_test), threshold)
        return Outcome(model.predict_proba(X_test), model.best_epoch)
    raise ValueError(f"unknown classifier {classifier!r}")


Fitter = Callable[..., Outcome]


# folds ---------------------------------------------------------------------

def fold_rows(inputs: CvInputs, fold: FoldSpec, seed: int, settings: CvSettings,
              folds: Sequence[FoldSpec]) -> tuple[np.ndarray, np.ndarray, RegionFeatureTable]:
    """(train rows, test rows, feature table) for one fold."""
    grid = inputs.grid
    labels = grid.labels
    train_all = grid.in_window(fold.train_window)
    test_all = grid.in_window(fold.test_window)
    us_seed = seed if settings.undersample_seed is None else settings.undersample_seed
    if settings.paper_mode:
        # one global draw over every month any fold touches, then split
        span = MonthWindow(min(f.train_window.start for f in folds),
                           max(f.test_window.end for f in folds))
        kept = undersample(labels, settings.ratio, derive_seed(us_seed, "undersample"),
                           rows=grid.in_window(span))
        train = np.intersect1d(kept, train_all)
        test = np.intersect1d(kept, test_all)
        return train, test, inputs.table(None)
    train = undersample(labels, settings.ratio, derive_seed(us_seed, "undersample", fold.fold_index),
                        rows=train_all)
    return train, test_all, inputs.table(fold.train_window)


def _search(spec: ModelSpec, inputs: CvInputs, fold: FoldSpec, train: np.ndarray,
            table: RegionFeatureTable, seed: int, settings: CvSettings) -> dict:
    conf = settings.search.get(spec.classifier)
    if not conf:
        return {}
    fit_rows, val_rows = validation_split(inputs.grid, train, fold.train_window,
                                          settings.validation_months)
    if len(fit_rows) == 0 or len(val_rows) == 0:
        return {}
    fm = assemble_matrix(inputs.grid, fit_rows, table, spec.mask, inputs.binning.season_map)
    vm = assemble_matrix(inputs.grid, val_rows, table, spec.mask, inputs.binning.season_map)
    if len(np.unique(fm.y)) < 2:
        return {}
    unit_seed = derive_seed(seed, "search", spec.name, spec.classifier, fold.fold_index)

    def fit_fn(config, X, y):
        params = make_params(spec.classifier, settings, config)
        if spec.classifier == "forest":
            return fit_forest(X, y, params, unit_seed)
        return fit_gbm(X, y, params, unit_seed)

    res = random_search(fit_fn, conf["grid"], int(conf.get("n_samples", 10)), (fm.X, fm.y),
                        (vm.X, vm.y), unit_seed, settings.threshold)
    return res.best


def evaluate_fold(inputs: CvInputs, spec: ModelSpec, fold: FoldSpec, seed: int,
                  settings: CvSettings, folds: Sequence[FoldSpec],
                  fitter: Fitter | None = None) -> FoldResult:
    train, test, table = fold_rows(inputs, fold, seed, settings, folds)
    season_map = inputs.binning.season_map
    tr = assemble_matrix(inputs.grid, train, table, spec.mask, season_map)
    te = assemble_matrix(inputs.grid, test, table, spec.mask, season_map)
    chosen = {}
    if spec.classifier != "mlp_baseline" and fitter is None:
        chosen = _search(spec, inputs, fold, train, table, seed, settings)
    params = make_params(spec.classifier, settings, chosen)
    unit_seed = derive_seed(seed, "fit", spec.name, spec.classifier, fold.fold_index)
    fit = fitter or fit_predict
    out = fit(spec.classifier, params, tr.X, tr.y, te.X, te.y, tr.groups, unit_seed,
              settings.threshold)
    proba = np.asarray(out.proba, dtype=float)
    pred = (proba >= settings.threshold).astype(int)
    m = metrics(*confusion(te.y, pred))
    both = 0 < int(te.y.sum()) < len(te.y)
    return FoldResult(fold.fold_index, len(train), len(test), int(te.y.sum()),
                      m["accuracy"], m["precision"], m["recall"], m["f_score"], m["macro_f_score"],
                      auc(te.y, proba) if both else None, out.best_epoch, chosen)


def run_cv(inputs: CvInputs, spec: ModelSpec, folds: Sequence[FoldSpec], seed: int = 0,
           settings: CvSettings | None = None, fitter: Fitter | None = None) -> ReportRow:
    settings = settings or CvSettings()
    _warm(inputs, folds, settings)
    results = _run_units(inputs, [(spec, f) for f in folds], seed, settings, folds, fitter)
    return ReportRow(spec.name, spec.classifier, results)


def run_matrix(inputs: CvInputs, specs: Sequence[ModelSpec], folds: Sequence[FoldSpec],
               seed: int = 0, settings: CvSettings | None = None,
               fitter: Fitter | None = None) -> EvalReport:
    settings = settings or CvSettings()
    specs = sorted(specs, key=ModelSpec.sort_key)
    _warm(inputs, folds, settings)
    units = [(s, f) for s in specs for f in folds]
    results = _run_units(inputs, units, seed, settings, folds, fitter)
    rows = [ReportRow(s.name, s.classifier, results[k * len(folds):(k + 1) * len(folds)])
            for k, s in enumerate(specs)]
    meta = {"seed": int(seed), "undersample_seed": settings.undersample_seed,
            "paper_mode": settings.paper_mode, "ratio": settings.ratio,
            "threshold": settings.threshold, "n_folds": len(folds),
            "folds": [{"fold": f.fold_index, "train": f.train_window.label(),
                       "test": f.test_window.label()} for f in folds]}
    return EvalReport(rows, meta)


def _warm(inputs: CvInputs, folds: Sequence[FoldSpec], settings: CvSettings) -> None:
    # build feature tables up front so worker threads only read the cache
    if settings.paper_mode:
        inputs.table(None)
    else:
        for f in folds:
            inputs.table(f.train_window)


def _run_units(inputs, units, seed, settings, folds, fitter) -> list[FoldResult]:
    if settings.jobs == 1:
        return [evaluate_fold(inputs, s, f, seed, settings, folds, fitter) for s, f in units]
    return Parallel(n_jobs=settings.jobs, prefer="threads")(
        delayed(evaluate_fold)(inputs, s, f, seed, settings, folds, fitter) for s, f in units)
