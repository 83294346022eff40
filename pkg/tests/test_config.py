import json

import pytest

from phenofuse.config import ConfigError, PipelineConfig, load_config
from phenofuse.selection import PAPER_STANDARD

DEFAULTS = PipelineConfig()


def test_loess_fraction_default():
    assert DEFAULTS.loess_fraction == 0.03


def test_cloud_threshold_default():
    assert DEFAULTS.cloud_threshold == 75


def test_idw_k_default():
    assert DEFAULTS.idw_k == 10


def test_inner_buffer_default():
    assert DEFAULTS.buffer_inner_m == 70


def test_outer_buffer_default():
    assert DEFAULTS.buffer_outer_m == 40


def test_min_field_default():
    assert DEFAULTS.min_field_ha == 2


def test_outer_folds_default():
    assert DEFAULTS.cv_outer == 10


def test_inner_folds_default():
    assert DEFAULTS.cv_inner == 10


def test_trials_default():
    assert DEFAULTS.n_trials == 50


def test_tolerance_default():
    assert DEFAULTS.tolerance_days == 6


def test_preset_default_is_search():
    assert DEFAULTS.feature_preset == "search" and DEFAULTS.fixed_features is None


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown config keys"):
        PipelineConfig.from_dict({"n_trial": 3})


@pytest.mark.parametrize("bad", [{"crops": ["potato"]}, {"loess_fraction": 0}, {"cloud_threshold": 101},
                                 {"cv_outer": 1}, {"buffer_outer_m": 80}, {"tolerance_days": -1},
                                 {"feature_preset": "fancy"}, {"feature_preset": ["NDVI", "nope"]},
                                 {"synth": {"n_station": 2}}])
def test_invalid_values(bad):
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict(bad)


def test_round_trip_and_relative_paths(tmp_path):
    cfg = PipelineConfig.from_dict({"crops": ["maize"], "feature_preset": "paper-standard", "seed": 3,
                                    "phenology": "in/pheno.csv", "out_dir": "run"})
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    loaded = load_config(str(path))
    assert loaded.phenology == str(tmp_path / "in/pheno.csv")
    assert loaded.out_dir == str(tmp_path / "run")
    assert loaded.crops == ("maize",) and loaded.fixed_features == PAPER_STANDARD
    assert loaded.input_path("climate") == str(tmp_path / "run" / "data" / "climate.csv")


def test_invalid_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(str(path))
