import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from phenofuse.ingest import OPTICAL_COLUMNS, RADAR_COLUMNS, clean_observations, parse_acquisitions_csv
from phenofuse.ingest import parse_climate_csv, parse_grid, parse_phenology_csv
from phenofuse.pipeline import build_datasets, preprocess_inputs
from phenofuse.synth import SynthSpec, synth_generate

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def datasets_from_synth(out) -> dict:
    """Run the library stages (no files) on a synth output; returns {crop: LabeledDataset}."""
    obs = clean_observations(parse_phenology_csv(out.phenology_csv))
    climate = parse_climate_csv(out.climate_csv)
    s1 = parse_acquisitions_csv(out.sentinel1_csv, RADAR_COLUMNS)
    s2 = parse_acquisitions_csv(out.sentinel2_csv, OPTICAL_COLUMNS)
    raw: dict = {}
    for name, text in out.grids.items():
        sid, kind = name[:-4].rsplit("_", 1)
        raw.setdefault(sid, {})[kind] = parse_grid(text)
    grids = {sid: (g["cropmask"], g["dem"]) for sid, g in raw.items()}
    daily, fields = preprocess_inputs(obs, climate, s1, s2, grids)
    return build_datasets(obs, daily, fields)


@pytest.fixture(scope="session")
def small_oat():
    """Six stations, two seasons of spring oat: 12 station-seasons."""
    out = synth_generate(SynthSpec(n_stations=6, crops=("spring_oat",), years=(2019, 2020), seed=3))
    return datasets_from_synth(out)["spring_oat"]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
