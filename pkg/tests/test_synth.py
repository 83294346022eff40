import csv
import datetime as dt
import io

import pytest
from oracles import idw_oracle

from phenofuse.features import BASE_TEMPERATURE
from phenofuse.ingest import (
    OPTICAL_COLUMNS,
    RADAR_COLUMNS,
    clean_observations,
    parse_acquisitions_csv,
    parse_climate_csv,
    parse_grid,
    parse_phenology_csv,
    season_start,
)
from phenofuse.synth import SynthSpec, synth_generate


def test_same_seed_same_bytes():
    spec = SynthSpec(n_stations=3, crops=("maize",), years=(2020,), seed=4)
    a, b = synth_generate(spec), synth_generate(spec)
    assert a == b
    assert synth_generate(SynthSpec(n_stations=3, crops=("maize",), years=(2020,), seed=5)) != a


def test_zero_stations_gives_valid_empty_files():
    out = synth_generate(SynthSpec(n_stations=0))
    assert parse_phenology_csv(out.phenology_csv) == []
    assert parse_climate_csv(out.climate_csv) == []
    assert parse_acquisitions_csv(out.sentinel1_csv, RADAR_COLUMNS) == {}
    assert parse_acquisitions_csv(out.sentinel2_csv, OPTICAL_COLUMNS) == {}
    assert out.grids == {}
    assert out.truth_csv.strip() == "crop,station_id,season,bbch,onset_date,observed_date"


def test_non_increasing_thresholds_rejected():
    with pytest.raises(ValueError, match="increase strictly"):
        SynthSpec(crops=("maize",), gdd_thresholds={"maize": {0: 100.0, 10: 100.0}})


def test_unknown_keys_rejected():
    with pytest.raises(ValueError, match="unknown synth keys"):
        SynthSpec.from_dict({"n_station": 3})


def test_noise_free_onsets_equal_threshold_crossings():
    spec = SynthSpec(n_stations=4, crops=("spring_oat", "winter_wheat"), years=(2019, 2020), noise_sd_days=0,
                     seed=11)
    out = synth_generate(spec)
    climate = parse_climate_csv(out.climate_csv)
    by_day: dict = {}
    for r in climate:
        by_day.setdefault(r.date, []).append(r)
    obs = clean_observations(parse_phenology_csv(out.phenology_csv))
    coords = {o.station_id: (o.lat, o.lon) for o in obs}
    truth = list(csv.DictReader(io.StringIO(out.truth_csv)))
    assert truth

    crossings = {}
    for sid, (lat, lon) in coords.items():
        for crop in spec.crops:
            th = spec.thresholds(crop)
            for season in spec.years:
                day, total, pending = season_start(season), 0.0, sorted(th)
                while pending and day < season_start(season + 1):
                    recs = by_day[day]
                    tmax = idw_oracle([(r.lat, r.lon, r.tmax) for r in recs], (lat, lon), 10)
                    tmin = idw_oracle([(r.lat, r.lon, r.tmin) for r in recs], (lat, lon), 10)
                    total += max(0.0, (tmax + tmin) / 2 - BASE_TEMPERATURE[crop])
                    while pending and total >= th[pending[0]]:
                        crossings[(crop, sid, season, pending.pop(0))] = day
                    day += dt.timedelta(days=1)

    assert {(r["crop"], r["station_id"], int(r["season"]), int(r["bbch"])) for r in truth} == set(crossings)
    for r in truth:
        key = (r["crop"], r["station_id"], int(r["season"]), int(r["bbch"]))
        assert r["onset_date"] == r["observed_date"] == crossings[key].isoformat()
    written = {(o.crop, o.station_id, o.season, o.bbch): o.date for o in obs}
    assert written == crossings


def test_noisy_observations_scatter_around_truth():
    out = synth_generate(SynthSpec(n_stations=10, crops=("maize",), years=(2019, 2020), noise_sd_days=3, seed=2))
    shifts = [(dt.date.fromisoformat(r["observed_date"]) - dt.date.fromisoformat(r["onset_date"])).days
              for r in csv.DictReader(io.StringIO(out.truth_csv))]
    assert len(shifts) > 100
    mean = sum(shifts) / len(shifts)
    sd = (sum((s - mean) ** 2 for s in shifts) / len(shifts)) ** 0.5
    assert abs(mean) < 1.0 and 2.0 < sd < 4.0


def test_grids_parse_and_share_geometry():
    out = synth_generate(SynthSpec(n_stations=2, crops=("maize",), years=(2020,), seed=0))
    assert sorted(out.grids) == ["P001_cropmask.asc", "P001_dem.asc", "P002_cropmask.asc", "P002_dem.asc"]
    mask, dem = parse_grid(out.grids["P001_cropmask.asc"]), parse_grid(out.grids["P001_dem.asc"])
    assert mask.same_geometry(dem)


def test_library_stages_label_every_station_season(small_oat):
    # the session fixture ran every library stage on synthetic files
    assert len(small_oat.group_keys()) == 12
    assert set(int(c) for c in small_oat.classes) == {-1, 0, 10, 31, 51, 75, 87, 89}
