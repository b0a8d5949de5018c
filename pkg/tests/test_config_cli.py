import csv
import hashlib
import io
import json
import subprocess
import sys

import pytest
import yaml

from crimelab.cli import (EXIT_CONFIG, EXIT_DATA, EXIT_MISSING, EXIT_OK, build_parser, cmd_eval,
                          cmd_report, main)
from crimelab.config import ConfigError, load_config, parse_config

SMALL = {
    "synth": {"city": {"grid_size": 3, "n_pois": 60, "checkins_per_year": 800}},
    "forest": {"n_trees": 8, "max_depth": 6},
    "gbm": {"n_rounds": 10, "max_depth": 2},
    "mlp": {"epochs": 3, "encoder_width": 4, "joint_widths": [8, 4]},
}


def write_config(path, **extra):
    data = SMALL | extra
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    """One small pipeline run shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg_path = write_config(root / "run.yaml", out=str(root / "run"))
    assert main(["pipeline", "--config", str(cfg_path)]) == EXIT_OK
    return cfg_path, root / "run"


# ---- config -----------------------------------------------------------------

def test_defaults_and_overrides():
    cfg = parse_config({})
    assert (cfg.seed, cfg.jobs, cfg.paper_mode, cfg.years) == (0, 1, False, [2012, 2013, 2014])
    assert len(cfg.specs()) == 25
    assert len(cfg.make_folds()) == 10
    over = parse_config({"seed": 3}, seed=None, jobs=2, paper_mode=True)
    assert (over.seed, over.jobs, over.paper_mode) == (3, 2, True)
    assert over.cv_settings().paper_mode is True


def test_hash_is_canonical():
    a = parse_config({"seed": 1, "gbm": {"n_rounds": 5, "max_depth": 2}})
    b = parse_config({"gbm": {"max_depth": 2, "n_rounds": 5}, "seed": 1})
    assert a.hash() == b.hash()
    assert a.hash() != parse_config({"seed": 2, "gbm": {"n_rounds": 5, "max_depth": 2}}).hash()


@pytest.mark.parametrize("data,where", [
    ({"sede": 1}, "sede"),
    ({"folds": {"n_fold": 3}}, "folds.n_fold"),
    ({"gbm": {"n_roundz": 3}}, "n_roundz"),
    ({"years": [2012, 2012]}, "years"),
    ({"years": [2012, 2013]}, "months"),
    ({"models": {"names": ["MZ"]}}, "MZ"),
    ({"models": {"classifiers": ["svm"]}}, "svm"),
    ({"binning": {"timezone": "Nowhere/City"}}, "timezone"),
    ({"search": {"gbm": {"grid": {"depth": [1]}}}}, "depth"),
    ({"search": {"mlp_baseline": {"grid": {}}}}, "search"),
    ({"synth": {"city": {"grid_size": 1}}}, "grid_size"),
    ({"threshold": 1.5}, "threshold"),
    ([1, 2], "mapping"),
])
def test_invalid_configs_name_the_problem(data, where):
    with pytest.raises(ConfigError, match=where):
        parse_config(data)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    (tmp_path / "bad.yaml").write_text("seed: [1,\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.yaml")
    (tmp_path / "empty.yaml").write_text("")
    assert load_config(tmp_path / "empty.yaml").seed == 0


# ---- exit codes -------------------------------------------------------------

def test_unknown_config_key_exits_2(tmp_path, capsys):
    p = write_config(tmp_path / "c.yaml", out=str(tmp_path / "o"), colour="red")
    assert main(["features", "--config", str(p)]) == EXIT_CONFIG
    assert "colour" in capsys.readouterr().err


def test_bad_arguments_exit_2():
    assert main(["eval", "--jobs", "many"]) == EXIT_CONFIG
    assert main(["launch"]) == EXIT_CONFIG
    assert main(["eval", "--jobs", "0", "--out", "x"]) == EXIT_CONFIG


def test_eval_without_artifacts_exits_3(tmp_path, capsys):
    assert main(["eval", "--out", str(tmp_path / "empty")]) == EXIT_MISSING
    assert "crimelab dataset" in capsys.readouterr().err
    assert main(["report", "--out", str(tmp_path / "empty")]) == EXIT_MISSING


def test_corrupt_input_exits_4(tmp_path):
    city = tmp_path / "city"
    city.mkdir()
    assert main(["synth", "--out", str(tmp_path / "r")]) == EXIT_OK
    for f in (tmp_path / "r" / "city").iterdir():
        (city / f.name).write_bytes(f.read_bytes())
    (city / "crimes.csv").write_text("lat,lon,when\n1,2,3\n")
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump({"inputs": {"dir": str(city)}, "out": str(tmp_path / "r2")}))
    assert main(["features", "--config", str(p)]) == EXIT_DATA


def test_parser_lists_every_stage():
    text = build_parser().format_help()
    for stage in ("synth", "features", "dataset", "train", "eval", "report", "pipeline"):
        assert stage in text


# ---- pipeline ---------------------------------------------------------------

def test_pipeline_layout_and_manifest(run):
    cfg_path, out = run
    cfg = load_config(cfg_path)
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["format"] == "crimelab-run"
    assert manifest["config_hash"] == cfg.hash()
    assert set(manifest["stages"]) == {"synth", "features", "dataset", "train", "eval", "report"}
    for stage in manifest["stages"].values():
        assert stage["config_hash"] == cfg.hash()
        for rel, digest in stage["outputs"].items():
            assert hashlib.sha256((out / rel).read_bytes()).hexdigest() == digest
    assert len(list((out / "models").glob("*.json"))) == 25
    assert (out / "features" / "region_features_all.csv").exists()
    report = json.loads((out / "eval" / "report.json").read_text())
    assert len(report["rows"]) == 25
    assert all(len(r["folds"]) == 10 for r in report["rows"])


def test_report_formats_agree(run, tmp_path):
    cfg_path, out = run
    for name in ("report_table3", "report_table4"):
        md = (out / "reports" / f"{name}.md").read_text()
        cells = [[c.strip() for c in l.strip("|").split("|")] for l in md.splitlines()
                 if l.startswith("|") and not l.startswith("|---")]
        rows = list(csv.reader(io.StringIO((out / "reports" / f"{name}.csv").read_text())))
        assert cells == rows
    t3 = (out / "reports" / "report_table3.csv").read_text()
    assert len(t3.splitlines()) == 13


def test_report_format_flag(run, tmp_path):
    cfg_path, out = run
    other = tmp_path / "copy"
    (other / "eval").mkdir(parents=True)
    (other / "eval" / "report.json").write_bytes((out / "eval" / "report.json").read_bytes())
    assert main(["report", "--config", str(cfg_path), "--out", str(other),
                 "--format", "csv"]) == EXIT_OK
    assert sorted(p.name for p in (other / "reports").iterdir()) == ["report_table3.csv",
                                                                    "report_table4.csv"]
    assert (other / "reports" / "report_table3.csv").read_bytes() == \
        (out / "reports" / "report_table3.csv").read_bytes()


def test_eval_rerun_is_byte_identical(run, tmp_path):
    cfg_path, out = run
    before = (out / "eval" / "report.json").read_bytes()
    cfg = load_config(cfg_path, jobs=2)
    cmd_eval(cfg)
    # jobs is part of the config hash but not of the numbers
    after = json.loads((out / "eval" / "report.json").read_text())
    first = json.loads(before)
    assert after["rows"] == first["rows"]
    cmd_eval(load_config(cfg_path))
    cmd_report(load_config(cfg_path))
    assert (out / "eval" / "report.json").read_bytes() == before


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "crimelab.cli", "eval", "--out",
                          str(tmp_path / "nothing")], capture_output=True, text=True)
    assert res.returncode == EXIT_MISSING
