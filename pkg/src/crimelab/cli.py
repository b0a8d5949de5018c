"""Command-line stages: synth, features, dataset, train, eval, report, pipeline.

Stages talk to each other only through files under the run directory:

    <out>/city/                 six input datasets (synth, or inputs.dir)
    <out>/features/             one region feature table per month window
    <out>/dataset/grid.csv      labeled region x time grid
    <out>/dataset/folds.json    fold windows
    <out>/models/               one fitted model per (model, classifier)
    <out>/eval/report.json      per-fold metrics of the whole matrix
    <out>/reports/              report_table3 / report_table4 in md and csv
    <out>/run_manifest.json     config hash, seeds and artifact digests

Exit codes: 0 ok, 2 config error, 3 missing artifact, 4 data validation
error, 5 internal error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Sequence

from .config import ConfigError, RunConfig, load_config
from .dataset import FoldSpec, Grid, assemble_matrix, build_grid, month_label
from .eval.cv import CvInputs, EvalReport, derive_seed, fold_rows, make_params, run_matrix
from .eval.report import FORMATS, render_report
from .features import MonthWindow, RegionFeatureTable, build_region_features
from .geodata import assign_events
from .ingest import CITY_FILES, DataValidationError, load_city
from .learn import fit_forest, fit_gbm, fit_mlp, save_model
from .synth import generate

log = logging.getLogger("crimelab")

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4, 5
MANIFEST = "run_manifest.json"
MANIFEST_VERSION = 1


class MissingArtifact(FileNotFoundError):
    """A stage's input from an earlier stage does not exist."""


# helpers -------------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise MissingArtifact(f"{path} not found; run `crimelab {stage}` first")
    return path


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_dir(cfg: RunConfig) -> Path:
    return Path(cfg.out)


def city_dir(cfg: RunConfig) -> Path:
    return Path(cfg.inputs.dir) if cfg.inputs.dir else run_dir(cfg) / "city"


def _record(cfg: RunConfig, stage: str, outputs: Sequence[Path], seeds: dict | None = None,
            inputs: Sequence[Path] = ()) -> None:
    """Add a stage entry to the run manifest; paths are stored relative to the run dir."""
    root = run_dir(cfg)
    path = root / MANIFEST
    manifest = json.loads(path.read_text()) if path.exists() else {}

    def rel(p: Path) -> str:
        try:
            return p.relative_to(root).as_posix()
        except ValueError:
            return p.as_posix()

    manifest.update({"format": "crimelab-run", "version": MANIFEST_VERSION,
                     "config_hash": cfg.hash(), "config": json.loads(cfg.canonical()),
                     "seed": cfg.seed})
    manifest.setdefault("stages", {})[stage] = {
        "config_hash": cfg.hash(),
        "seeds": seeds or {},
        "inputs": {rel(p): _sha256(p) for p in sorted(inputs)},
        "outputs": {rel(p): _sha256(p) for p in sorted(outputs)},
    }
    _write_json(path, manifest)


def _windows(folds: Sequence[FoldSpec]) -> list[MonthWindow | None]:
    # the all-data table serves paper mode; one table per training window otherwise
    return [None] + [f.train_window for f in folds]


def _table_name(window: MonthWindow | None) -> str:
    if window is None:
        return "region_features_all.csv"
    return f"region_features_{month_label(window.start)}_{month_label(window.end)}.csv"


# stages --------------------------------------------------------------------

def cmd_synth(cfg: RunConfig) -> list[Path]:
    city_cfg = cfg.synth.build(cfg.seed)
    out = city_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    generate(city_cfg, out)
    files = sorted(out.iterdir())
    _record(cfg, "synth", files, {"city": city_cfg.seed})
    return files


def _load_city(cfg: RunConfig):
    base = city_dir(cfg)
    for key, name in CITY_FILES.items():
        _require(base / cfg.inputs.files.get(key, name), "synth")
    city = load_city(base, cfg.binning.build(), cfg.inputs.files)
    for key, n in city.rejected().items():
        if n:
            log.warning("%s: %d rows rejected", key, n)
    return city


def _city_inputs(cfg: RunConfig) -> list[Path]:
    base = city_dir(cfg)
    return [base / cfg.inputs.files.get(k, v) for k, v in CITY_FILES.items()]


def cmd_features(cfg: RunConfig) -> list[Path]:
    city = _load_city(cfg)
    binning = cfg.binning.build()
    regions = sorted(city.regions, key=lambda r: r.id)
    assignments = {
        "crimes": assign_events([c.location for c in city.crimes.records], regions)[0],
        "lights": assign_events([p.location for p in city.lights.records], regions)[0],
        "pois": assign_events([p.location for p in city.pois.records], regions)[0],
    }
    out = run_dir(cfg) / "features"
    out.mkdir(parents=True, exist_ok=True)
    index, written = [], []
    try:
        for window in _windows(cfg.make_folds()):
            table = build_region_features(
                regions, city.crimes.records, city.lights.records, city.pois.records,
                city.checkins.records, city.demographics.records, window, binning,
                cfg.with_light_distance, assignments)
            path = out / _table_name(window)
            table.to_csv(path)
            written += [path, path.with_suffix(".schema.json")]
            index.append({"file": path.name,
                          "window": None if window is None else [window.start, window.end]})
    except ValueError as e:
        raise DataValidationError(str(e)) from None
    _write_json(out / "index.json", index)
    written.append(out / "index.json")
    _record(cfg, "features", written, inputs=_city_inputs(cfg))
    return written


def cmd_dataset(cfg: RunConfig) -> list[Path]:
    city = _load_city(cfg)
    regions = sorted(city.regions, key=lambda r: r.id)
    assign = assign_events([c.location for c in city.crimes.records], regions)[0]
    try:
        grid = build_grid(city.crimes.records, regions, cfg.years, assign)
    except ValueError as e:
        raise DataValidationError(str(e)) from None
    out = run_dir(cfg) / "dataset"
    out.mkdir(parents=True, exist_ok=True)
    grid.to_csv(out / "grid.csv")
    folds = [{"fold": f.fold_index, "train": [f.train_window.start, f.train_window.end],
              "test": [f.test_window.start, f.test_window.end]} for f in cfg.make_folds()]
    _write_json(out / "folds.json", folds)
    written = [out / "grid.csv", out / "folds.json"]
    _record(cfg, "dataset", written, inputs=_city_inputs(cfg))
    return written


def load_inputs(cfg: RunConfig) -> CvInputs:
    """Grid and feature tables from the dataset and features stages."""
    root = run_dir(cfg)
    grid_path = _require(root / "dataset" / "grid.csv", "dataset")
    index_path = _require(root / "features" / "index.json", "features")
    try:
        grid = Grid.from_csv(grid_path)
        tables = {}
        for entry in json.loads(index_path.read_text()):
            table = RegionFeatureTable.from_csv(_require(root / "features" / entry["file"],
                                                         "features"))
            tables[None if entry["window"] is None else tuple(entry["window"])] = table
    except (ValueError, KeyError) as e:
        raise DataValidationError(f"corrupt stage artifact: {e}") from None
    if set(grid.years) - set(cfg.years):
        raise DataValidationError("grid years differ from the config; rerun `crimelab dataset`")
    needed = {None if w is None else (w.start, w.end) for w in _windows(cfg.make_folds())}
    if not needed <= tables.keys():
        raise MissingArtifact("feature tables do not cover the configured folds; "
                              "rerun `crimelab features`")
    return CvInputs.from_artifacts(grid, tables, cfg.binning.build())


def _artifact_inputs(cfg: RunConfig) -> list[Path]:
    root = run_dir(cfg)
    return [root / "dataset" / "grid.csv"] + sorted((root / "features").glob("*.csv"))


def cmd_train(cfg: RunConfig) -> list[Path]:
    """Fit every configured model on the latest fold's training window."""
    inputs = load_inputs(cfg)
    folds = cfg.make_folds()
    settings = cfg.cv_settings()
    fold = folds[-1]
    train, _, table = fold_rows(inputs, fold, cfg.seed, settings, folds)
    out = run_dir(cfg) / "models"
    out.mkdir(parents=True, exist_ok=True)
    written, seeds = [], {}
    for spec in cfg.specs():
        m = assemble_matrix(inputs.grid, train, table, spec.mask, inputs.binning.season_map)
        params = make_params(spec.classifier, settings)
        seed = derive_seed(cfg.seed, "train", spec.name, spec.classifier)
        if spec.classifier == "forest":
            model = fit_forest(m.X, m.y, params, seed)
        elif spec.classifier == "gbm":
            model = fit_gbm(m.X, m.y, params, seed)
        else:
            model, _ = fit_mlp(m.X, m.groups, m.y, params, seed)
        path = out / f"{spec.name}_{spec.classifier}.json"
        save_model(model, path)
        written.append(path)
        seeds[path.stem] = seed
    _record(cfg, "train", written, seeds, inputs=_artifact_inputs(cfg))
    return written


def cmd_eval(cfg: RunConfig, fitter: Callable | None = None) -> list[Path]:
    inputs = load_inputs(cfg)
    report = run_matrix(inputs, cfg.specs(), cfg.make_folds(), cfg.seed, cfg.cv_settings(),
                        fitter)
    report.meta["config_hash"] = cfg.hash()
    out = run_dir(cfg) / "eval"
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "report.json")
    us = cfg.seed if cfg.undersample.seed is None else cfg.undersample.seed
    _record(cfg, "eval", [out / "report.json"], {"master": cfg.seed, "undersample": us},
            inputs=_artifact_inputs(cfg))
    return [out / "report.json"]


def cmd_report(cfg: RunConfig, formats: Sequence[str] = FORMATS) -> list[Path]:
    path = _require(run_dir(cfg) / "eval" / "report.json", "eval")
    try:
        report = EvalReport.load(path)
    except (ValueError, KeyError, TypeError) as e:
        raise DataValidationError(f"corrupt evaluation report: {e}") from None
    written = render_report(report, run_dir(cfg) / "reports", formats)
    _record(cfg, "report", written, inputs=[path])
    return written


def cmd_pipeline(cfg: RunConfig) -> list[Path]:
    written = []
    if not cfg.inputs.dir:
        written += cmd_synth(cfg)
    for stage in (cmd_features, cmd_dataset, cmd_train, cmd_eval, cmd_report):
        written += stage(cfg)
    return written


COMMANDS = {"synth": cmd_synth, "features": cmd_features, "dataset": cmd_dataset,
            "train": cmd_train, "eval": cmd_eval, "report": cmd_report,
            "pipeline": cmd_pipeline}


# entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--jobs", type=int, help="parallel workers (overrides config)")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--paper-mode", action="store_true", default=None,
                        help="features from all data and one global under-sampling draw")
    common.add_argument("--out", help="run directory (overrides config)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="crimelab", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common], help=COMMANDS[name].__doc__)
        if name == "report":
            sp.add_argument("--format", choices=("markdown", "csv", "both"), default="both")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = load_config(args.config, jobs=args.jobs, seed=args.seed,
                          paper_mode=args.paper_mode, out=args.out)
        if args.command == "report":
            formats = FORMATS if args.format == "both" else (args.format,)
            written = cmd_report(cfg, formats)
        else:
            written = COMMANDS[args.command](cfg)
    except ConfigError as e:
        print(f"crimelab: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as e:
        print(f"crimelab: missing artifact: {e}", file=sys.stderr)
        return EXIT_MISSING
    except DataValidationError as e:
        print(f"crimelab: invalid data: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001 - last-resort mapping to an exit code
        log.debug("internal error", exc_info=True)
        print(f"crimelab: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    for path in written:
        log.info("wrote %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
