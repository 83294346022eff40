#!/usr/bin/env python3
"""Walk one crop from synthetic inputs to decoded onset dates using the library API.

Small on purpose (six stations, two seasons, a 3x3 nested CV) so it finishes
in about a minute.  The CLI runs the same stages on files.
"""
import numpy as np

from phenofuse.crossval import nested_cv
from phenofuse.dataset import doy_to_date
from phenofuse.evaluate import metrics_table, stage_average
from phenofuse.ingest import (
    OPTICAL_COLUMNS,
    RADAR_COLUMNS,
    clean_observations,
    parse_acquisitions_csv,
    parse_climate_csv,
    parse_grid,
    parse_phenology_csv,
)
from phenofuse.pipeline import build_datasets, preprocess_inputs
from phenofuse.selection import PAPER_STANDARD
from phenofuse.synth import SynthSpec, synth_generate


def load(out):
    obs = clean_observations(parse_phenology_csv(out.phenology_csv))
    grids = {}
    for name, text in out.grids.items():
        sid, kind = name[:-4].rsplit("_", 1)
        grids.setdefault(sid, {})[kind] = parse_grid(text)
    daily, fields = preprocess_inputs(
        obs,
        parse_climate_csv(out.climate_csv),
        parse_acquisitions_csv(out.sentinel1_csv, RADAR_COLUMNS),
        parse_acquisitions_csv(out.sentinel2_csv, OPTICAL_COLUMNS),
        {sid: (g["cropmask"], g["dem"]) for sid, g in grids.items()},
    )
    return obs, daily, fields


def main():
    out = synth_generate(SynthSpec(n_stations=6, crops=("maize",), years=(2019, 2020), seed=2))
    obs, daily, fields = load(out)
    print(f"{len(obs)} clean observations, {len(daily)} daily rows")
    print(fields[["station_id", "n_fields", "area_ha", "altitude", "slope"]].round(2).to_string(index=False))

    ds = build_datasets(obs, daily, fields)["maize"]
    labels, counts = np.unique(ds.labels, return_counts=True)
    print("label counts:", dict(zip(labels.tolist(), counts.tolist())))

    result = nested_cv(ds, seed=0, cv_outer=3, cv_inner=3, n_trials=3, fixed_features=PAPER_STANDARD)
    print(f"trained {result.n_models} models")

    for o in result.onsets[:8]:
        when = "missed" if o.predicted_doy is None else doy_to_date(o.predicted_doy, o.season)
        print(f"  {o.station_id} {o.season} BBCH {o.bbch:2d}: "
              f"observed {doy_to_date(o.observed_doy, o.season)}, predicted {when}")

    records = metrics_table(result.onsets)
    for r in records:
        if r.year is None and r.bbch is not None:
            print(f"BBCH {r.bbch:2d}: n={r.n:2d} MAE {r.mae:5.2f} d, within 6 d {r.within6:.0%}")
    avg = stage_average(records)
    print(f"stage average: MAE {avg['mae']:.2f} d, R2 {avg['r2']:.2f}")


if __name__ == "__main__":
    main()
