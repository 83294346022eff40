#!/usr/bin/env python3
"""The pieces on their own: smoothing, degree days, field selection, boosting, TPE."""
import datetime as dt

import numpy as np

from phenofuse.features import CropConfig, accumulate_climate
from phenofuse.gbdt import GbdtHyperparams, fit_arrays
from phenofuse.ingest import CROP_CODES, Grid
from phenofuse.preprocess import DailySeries, loess_smooth, resample_daily, select_station_fields
from phenofuse.tpe import FloatParam, IntParam, tpe_optimize


def smoothing(rng):
    t0 = dt.date(2020, 1, 1).toordinal()
    t = t0 + np.sort(rng.choice(np.arange(365.0), 40, replace=False))
    ndvi = 0.2 + 0.6 * np.exp(-((t - t0 - 180) / 50) ** 2) + rng.normal(0, 0.05, 40)
    daily = resample_daily(t, loess_smooth(t, ndvi, 0.2), "NDVI")
    print(f"NDVI: {len(t)} acquisitions -> {len(daily.values)} daily values, peak {daily.values.max():.2f}")


def degree_days():
    start = dt.date(2019, 9, 1)
    n = 60
    tmax = DailySeries("tmax", "S", start, np.full(n, 15.0))
    tmin = DailySeries("tmin", "S", start, np.full(n, 5.0))
    prcp = DailySeries("prcp", "S", start, np.full(n, 1.0))
    _, gsum, _, psum = accumulate_climate(tmax, tmin, prcp, CropConfig.for_crop("winter_wheat"))
    reset = (dt.date(2019, 9, 22) - start).days
    print(f"GDD sum before the season restart {gsum.values[reset - 1]:.1f}, on it {gsum.values[reset]:.1f}")


def fields():
    mask = np.zeros((60, 60))
    mask[5:15, 5:15] = CROP_CODES["maize"]  # 4 ha before the 70 m buffer, 0.16 ha after
    mask[25:50, 20:55] = CROP_CODES["maize"]  # 35 ha before, about 18 ha after
    grid = Grid(60, 60, 0.0, 0.0, 20.0, -9999.0, mask)
    sel = select_station_fields(grid, (600.0, 600.0), "maize")
    print(f"fields kept: {len(sel.pixel_sets)}, area after buffering {sel.areas_ha} ha")


def boosting(rng):
    X = rng.normal(size=(400, 4))
    y = (X[:, 0] + X[:, 1] > 0).astype(int) + (X[:, 2] > 1)
    hp = GbdtHyperparams(n_estimators=200, early_stopping_round=10)
    model = fit_arrays(X[:300], y[:300], None, X[300:], y[300:], hp=hp)
    acc = (model.predict(X[300:]) == y[300:]).mean()
    print(f"boosting: best round {model.best_iteration} of {model.rounds_trained}, held-out accuracy {acc:.2f}")


def tuning():
    space = {"x": FloatParam(-5.0, 5.0), "k": IntParam(1, 64, log=True)}
    params, loss, study = tpe_optimize(lambda p: (p["x"] - 1) ** 2 + abs(np.log2(p["k"]) - 3), space, 60, seed=0)
    print(f"TPE after {len(study.trials)} trials: x={params['x']:.3f}, k={params['k']}, loss {loss:.4f}")


def main():
    rng = np.random.default_rng(0)
    smoothing(rng)
    degree_days()
    fields()
    boosting(rng)
    tuning()


if __name__ == "__main__":
    main()
