"""Run configuration: one YAML file, validated before any stage runs."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .dataset import FoldSpec, make_folds
from .eval.cv import CLASSIFIER_ORDER, MODEL_MASKS, CvSettings, ModelSpec, make_params, model_matrix
from .features import DEFAULT_SEASON_MAP, TimeBinning
from .ingest import CITY_FILES
from .learn.search import expand_grid
from .synth import CityConfig


class ConfigError(ValueError):
    """The configuration file is unreadable or invalid."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class InputsConfig(_Strict):
    # city directory; None = the synth stage output under the run directory
    dir: Optional[str] = None
    files: dict[str, str] = Field(default_factory=dict)

    @field_validator("files")
    @classmethod
    def _known(cls, v):
        bad = sorted(set(v) - set(CITY_FILES))
        if bad:
            raise ValueError(f"unknown datasets {bad}; expected some of {sorted(CITY_FILES)}")
        return v


class BinningConfig(_Strict):
    timezone: str = "America/Halifax"
    season_map: dict[int, str] = Field(default_factory=lambda: dict(DEFAULT_SEASON_MAP))

    def build(self) -> TimeBinning:
        return TimeBinning(self.timezone, dict(self.season_map))

    @model_validator(mode="after")
    def _check(self):
        self.build()
        return self


class FoldsConfig(_Strict):
    n_folds: int = Field(10, ge=1)
    start: tuple[int, int] = (2012, 1)
    train_months: int = Field(12, ge=1)
    test_months: int = Field(12, ge=1)


class UndersampleConfig(_Strict):
    ratio: float = Field(1.0, gt=0)
    seed: Optional[int] = None


class ModelsConfig(_Strict):
    names: list[str] = Field(default_factory=lambda: list(MODEL_MASKS))
    classifiers: list[str] = Field(default_factory=lambda: ["forest", "gbm"])
    baseline: bool = True

    @model_validator(mode="after")
    def _check(self):
        bad = sorted(set(self.names) - set(MODEL_MASKS))
        if bad:
            raise ValueError(f"unknown models {bad}")
        bad = sorted(set(self.classifiers) - set(CLASSIFIER_ORDER[:2]))
        if bad:
            raise ValueError(f"unknown classifiers {bad}")
        return self


class SynthConfig(_Strict):
    planted: bool = True    # start from the planted-signal reference city
    city: dict[str, Any] = Field(default_factory=dict)

    def build(self, seed: int) -> CityConfig:
        kw = {"seed": seed} | dict(self.city)
        return CityConfig.planted(**kw) if self.planted else CityConfig(**kw)


class RunConfig(_Strict):
    seed: int = Field(0, ge=0)
    jobs: int = Field(1, ge=1)
    out: str = "run"
    paper_mode: bool = False
    years: list[int] = Field(default_factory=lambda: [2012, 2013, 2014])
    inputs: InputsConfig = Field(default_factory=InputsConfig)
    binning: BinningConfig = Field(default_factory=BinningConfig)
    with_light_distance: bool = False
    folds: FoldsConfig = Field(default_factory=FoldsConfig)
    undersample: UndersampleConfig = Field(default_factory=UndersampleConfig)
    models: ModelsConfig = Field(default_factory=ModelsConfig)
    threshold: float = Field(0.5, gt=0, lt=1)
    validation_months: int = Field(2, ge=1)
    forest: dict[str, Any] = Field(default_factory=dict)
    gbm: dict[str, Any] = Field(default_factory=dict)
    mlp: dict[str, Any] = Field(default_factory=dict)
    # classifier -> {"grid": {param: [values]} or [configs], "n_samples": int}
    search: dict[str, dict[str, Any]] = Field(default_factory=dict)
    synth: SynthConfig = Field(default_factory=SynthConfig)

    @model_validator(mode="after")
    def _check(self):
        if not self.years or len(set(self.years)) != len(self.years):
            raise ValueError("years must be non-empty and distinct")
        settings = self.cv_settings()
        for clf in CLASSIFIER_ORDER:
            make_params(clf, settings)
        for clf, conf in self.search.items():
            if clf not in CLASSIFIER_ORDER[:2]:
                raise ValueError(f"search is only defined for forest and gbm, not {clf!r}")
            extra = set(conf) - {"grid", "n_samples"}
            if extra or "grid" not in conf:
                raise ValueError(f"search.{clf} needs 'grid' and optionally 'n_samples'")
            for cand in expand_grid(conf["grid"]):
                make_params(clf, settings, cand)
        self.make_folds()
        self.synth.build(self.seed)
        return self

    def cv_settings(self) -> CvSettings:
        return CvSettings(paper_mode=self.paper_mode, ratio=self.undersample.ratio,
                          threshold=self.threshold, validation_months=self.validation_months,
                          forest=dict(self.forest), gbm=dict(self.gbm), mlp=dict(self.mlp),
                          search={k: dict(v) for k, v in self.search.items()}, jobs=self.jobs,
                          undersample_seed=self.undersample.seed)

    def make_folds(self) -> list[FoldSpec]:
        f = self.folds
        return make_folds(12 * len(self.years), f.n_folds, f.start, f.train_months, f.test_months)

    def specs(self) -> list[ModelSpec]:
        return model_matrix(self.models.names, tuple(self.models.classifiers), self.models.baseline)

    def canonical(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def _errors(e: ValidationError) -> str:
    parts = []
    for err in e.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_config(data: Any, **overrides) -> RunConfig:
    """Validate a mapping; keyword overrides that are None are ignored."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level")
    data = dict(data) | {k: v for k, v in overrides.items() if v is not None}
    try:
        return RunConfig(**data)
    except ValidationError as e:
        raise ConfigError(_errors(e)) from None
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def load_config(path: str | Path | None, **overrides) -> RunConfig:
    data = {}
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
        except yaml.YAMLError as e:
            raise ConfigError(f"config {path} is not valid YAML: {e}") from None
    return parse_config(data, **overrides)
