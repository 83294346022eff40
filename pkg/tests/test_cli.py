import json
import os
import shutil
import subprocess
import sys

import pandas as pd
import pytest

from phenofuse.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from phenofuse.selection import PAPER_STANDARD

SMALL = {
    "crops": ["spring_oat"],
    "seed": 3,
    "cv_outer": 3,
    "cv_inner": 3,
    "n_trials": 2,
    "synth": {"n_stations": 4, "crops": ["spring_oat"], "years": [2019, 2020]},
}


def write_config(tmp_path, **extra):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({**SMALL, "out_dir": "run", **extra}))
    return str(path)


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = write_config(tmp)
    assert main(["synth", "--config", cfg]) == EXIT_OK
    assert main(["report", "--config", cfg, "--preset", "paper-standard"]) == EXIT_OK
    return tmp / "run"


def test_full_chain_emits_every_report(full_run):
    reports = sorted(os.listdir(full_run / "reports"))
    assert reports == ["metrics.csv", "residual_stage.csv", "residual_station.csv", "residual_year.csv",
                       "scatter.csv", "scatter.svg", "summary.json", "year_mae_delta.csv"]
    assert not list(full_run.glob("*.FAILED"))
    summary = json.loads((full_run / "reports" / "summary.json").read_text())
    assert "spring_oat" in summary["crops"]


def test_station_table_carries_coordinates(full_run):
    df = pd.read_csv(full_run / "reports" / "residual_station.csv")
    assert list(df.columns[:4]) == ["crop", "station", "lat", "lon"]
    assert df["lat"].notna().all()


def test_preset_skips_feature_search(full_run):
    folds = pd.read_csv(full_run / "train" / "spring_oat" / "folds.csv")
    assert len(folds) == 9
    assert all(tuple(f.split(";")) == PAPER_STANDARD for f in folds["features"])
    studies = os.listdir(full_run / "train" / "spring_oat" / "studies")
    with open(full_run / "train" / "spring_oat" / "studies" / sorted(studies)[0]) as fh:
        trial = json.loads(fh.read().splitlines()[1])
    assert not any(k.startswith("feature:") or k.startswith("group:") for k in trial["params"])


def test_training_artifacts(full_run):
    base = full_run / "train" / "spring_oat"
    assert len(os.listdir(base / "models")) == 9
    onsets = pd.read_csv(base / "onsets.csv")
    assert {"station_id", "season", "bbch", "predicted_doy", "observed_doy"} <= set(onsets.columns)


def test_rerunning_evaluate_is_byte_identical(full_run, tmp_path):
    before = {p: (full_run / "reports" / p).read_bytes() for p in os.listdir(full_run / "reports")}
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({**SMALL, "out_dir": str(full_run)}))
    assert main(["evaluate", "--config", str(cfg)]) == EXIT_OK
    after = {p: (full_run / "reports" / p).read_bytes() for p in os.listdir(full_run / "reports")}
    assert before == after


def test_train_before_features_names_missing_file(tmp_path, capsys, full_run):
    shutil.copytree(full_run / "data", tmp_path / "run" / "data")
    shutil.copytree(full_run / "preprocessed", tmp_path / "run" / "preprocessed")
    cfg = write_config(tmp_path)
    assert main(["train", "--config", cfg]) == EXIT_DATA
    err = capsys.readouterr().err
    assert os.path.join("features", "spring_oat.csv") in err
    assert (tmp_path / "run" / "train.FAILED").exists()


def test_preprocess_without_inputs(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["preprocess", "--config", cfg]) == EXIT_DATA
    assert "missing input" in capsys.readouterr().err


def test_bad_config_is_usage_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"bogus": 1}))
    assert main(["synth", "--config", str(path)]) == EXIT_USAGE


def test_overrides(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "elsewhere"
    assert main(["synth", "--config", cfg, "--out", str(out), "--seed", "9"]) == EXIT_OK
    assert (out / "data" / "phenology.csv").exists()


def test_console_script_usage_errors():
    bad = subprocess.run([sys.executable, "-m", "phenofuse.cli", "frobnicate"], capture_output=True, text=True)
    assert bad.returncode == EXIT_USAGE and "invalid choice" in bad.stderr
    ok = subprocess.run([sys.executable, "-m", "phenofuse.cli", "--help"], capture_output=True, text=True)
    assert ok.returncode == 0 and "report" in ok.stdout
