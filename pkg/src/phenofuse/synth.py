"""Seeded synthetic stations, weather, phenology and satellite series.

Ground truth is planted through the same code paths the pipeline uses:
each phenology station's weather is the IDW mix of the climate stations,
its GDD sum comes from :func:`~phenofuse.features.accumulate_climate`, and
a stage's true onset is the first season day on which that sum reaches the
stage threshold.  Observed onsets add Gaussian day noise.  Radar and
optical values follow logistic green-up and senescence curves anchored on
the true onsets, scaled by per-sensor response coefficients (0 makes a
sensor pure noise).
"""
from __future__ import annotations

import datetime as dt
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .features import BASE_TEMPERATURE, CropConfig, accumulate_climate, idw_series
from .ingest import (
    CROP_CODES,
    CROP_STAGES,
    CROPS,
    OPTICAL_COLUMNS,
    RADAR_COLUMNS,
    AcquisitionSeries,
    ClimateRecord,
    Grid,
    StationObservation,
    season_start,
    serialize_acquisitions_csv,
    serialize_climate_csv,
    serialize_grid,
    serialize_phenology_csv,
)
from .preprocess import DailySeries, project_latlon

# Typical onset day (days since 1 January of the harvest year) per crop and
# stage; default thresholds are the GDD sums a reference climate reaches on
# these days.
REFERENCE_ONSET_DOY = {
    "maize": {0: 125, 10: 138, 31: 165, 53: 190, 61: 200, 75: 220, 83: 235, 87: 245, 89: 255},
    "spring_barley": {0: 92, 10: 105, 31: 140, 51: 165, 87: 200, 89: 215},
    "spring_oat": {0: 92, 10: 105, 31: 140, 51: 165, 75: 190, 87: 205, 89: 220},
    "sugar_beet": {0: 100, 10: 115, 35: 150, 89: 250},
    "winter_barley": {0: -92, 10: -82, 31: 100, 51: 130, 87: 180, 89: 195},
    "winter_rapeseed": {0: -98, 10: -90, 14: -78, 31: 75, 51: 100, 61: 115, 87: 185, 89: 200},
    "winter_rye": {0: -90, 10: -80, 31: 105, 51: 135, 61: 150, 65: 158, 87: 190, 89: 205},
    "winter_wheat": {0: -88, 10: -78, 31: 110, 51: 150, 75: 180, 87: 200, 89: 215},
}

REGION = {"lat": (47.5, 54.5), "lon": (6.0, 15.0)}
GRID_CELLS = 120
GRID_CELLSIZE = 20.0
S1_REVISIT_DAYS = 6
S2_REVISIT_DAYS = 5


def _seasonal(doy: np.ndarray) -> np.ndarray:
    return np.sin(2 * np.pi * (doy - 105) / 365.25)


def reference_tmean(doy: np.ndarray) -> np.ndarray:
    """Noise-free daily mean temperature at 51 N, 150 m."""
    return 9.0 + 9.5 * _seasonal(doy) - 0.0065 * 150.0


def terrain_altitude(lat, lon):
    """Smooth synthetic relief: uplands in the south, lowlands in the north."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    return 40.0 + 420.0 * np.exp(-(((lat - 48.0) / 2.2) ** 2)) * (0.7 + 0.3 * np.sin(lon))


def default_thresholds(crop: str) -> dict[int, float]:
    """Reference-climate GDD sums at the typical onset days of ``crop``."""
    t_base = BASE_TEMPERATURE[crop]
    # a non-leap season: day 1 is DOY 265 of the previous year
    doy_prev = np.arange(265, 366)
    doy_next = np.arange(1, 265)
    calendar_doy = np.concatenate([doy_prev, doy_next])
    season_day = np.concatenate([doy_prev - 365, doy_next])
    gdd = np.maximum(0.0, reference_tmean(calendar_doy) - t_base)
    cum = np.cumsum(gdd)
    return {s: round(float(cum[np.searchsorted(season_day, d)]), 1) for s, d in REFERENCE_ONSET_DOY[crop].items()}


@dataclass(frozen=True)
class SynthSpec:
    n_stations: int = 20
    crops: tuple[str, ...] = ("winter_wheat", "maize")
    years: tuple[int, ...] = (2018, 2019, 2020)
    gdd_thresholds: dict = field(default_factory=dict)  # crop -> {bbch: GDD sum}; missing crops use defaults
    noise_sd_days: float = 2.0
    response: dict = field(default_factory=lambda: {"sar": 1.0, "optical": 1.0})
    seed: int = 0
    climate_station_ratio: float = 3.0
    cloud_fraction: float = 0.35
    bad_flag_fraction: float = 0.03

    def __post_init__(self):
        if self.n_stations < 0:
            raise ValueError("n_stations must be >= 0")
        for c in self.crops:
            if c not in CROPS:
                raise ValueError(f"unknown crop {c!r}")
        if self.noise_sd_days < 0:
            raise ValueError("noise_sd_days must be >= 0")
        for crop in self.crops:
            th = self.thresholds(crop)
            vals = [th[s] for s in sorted(th)]
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"GDD thresholds for {crop} must increase strictly with the stage code")

    def thresholds(self, crop: str) -> dict[int, float]:
        given = self.gdd_thresholds.get(crop)
        return {int(k): float(v) for k, v in given.items()} if given else default_thresholds(crop)

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthSpec":
        names = set(cls.__dataclass_fields__)
        unknown = set(doc) - names
        if unknown:
            raise ValueError(f"unknown synth keys: {sorted(unknown)}")
        doc = dict(doc)
        for k in ("crops", "years"):
            if k in doc:
                doc[k] = tuple(doc[k])
        return cls(**doc)


@dataclass
class SynthOutput:
    phenology_csv: str
    climate_csv: str
    sentinel1_csv: str
    sentinel2_csv: str
    truth_csv: str
    grids: dict[str, str]  # file name -> ASCII grid text

    def write(self, out_dir: str) -> dict[str, str]:
        """Write every file under ``out_dir``; returns name -> path."""
        from ._io import atomic_write_text

        paths = {}
        for name, text in (("phenology.csv", self.phenology_csv), ("climate.csv", self.climate_csv),
                           ("sentinel1.csv", self.sentinel1_csv), ("sentinel2.csv", self.sentinel2_csv),
                           ("truth.csv", self.truth_csv)):
            paths[name] = atomic_write_text(os.path.join(out_dir, name), text)
        for name, text in sorted(self.grids.items()):
            paths[name] = atomic_write_text(os.path.join(out_dir, "grids", name), text)
        return paths


def _station_ids(prefix: str, n: int) -> list[str]:
    return [f"{prefix}{i + 1:03d}" for i in range(n)]


def _dates(first: dt.date, last: dt.date) -> list[dt.date]:
    return [first + dt.timedelta(days=i) for i in range((last - first).days + 1)]


def _logistic(x):
    return 1.0 / (1.0 + np.exp(-x))


def _crop_mask(rng, crops: tuple[str, ...]) -> np.ndarray:
    """Tile the grid with rectangular plots; the first plots carry the station's crops."""
    n = GRID_CELLS
    mask = np.zeros((n, n))
    forced = list(crops)
    r = 0
    while r < n:
        h = int(rng.integers(18, 31))
        c = 0
        while c < n:
            w = int(rng.integers(18, 31))
            if forced:
                code = CROP_CODES[forced.pop(0)]
            else:
                code = int(rng.integers(0, len(CROPS) + 2))  # 0 other land, 9 grassland
            mask[r:r + h, c:c + w] = code
            c += w
        r += h
    return mask


def _dem(rng, altitude: float) -> np.ndarray:
    n = GRID_CELLS
    yy, xx = np.mgrid[0:n, 0:n] * GRID_CELLSIZE
    gx, gy = rng.normal(0, 0.02, 2)
    bump = rng.uniform(2, 12) * np.sin(xx / rng.uniform(300, 900)) * np.cos(yy / rng.uniform(300, 900))
    z = altitude + gx * (xx - xx.mean()) + gy * (yy - yy.mean()) + bump
    return np.round(z, 2)


def synth_generate(spec: SynthSpec) -> SynthOutput:
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 7]))
    years = sorted(spec.years)
    first = season_start(years[0]) if years else dt.date(2000, 1, 1)
    last = season_start(years[-1] + 1) - dt.timedelta(days=1) if years else first
    dates = _dates(first, last)
    n_days = len(dates)
    doy = np.array([d.timetuple().tm_yday for d in dates], dtype=np.float64)

    # stations
    n_p = spec.n_stations
    n_c = int(math.ceil(spec.climate_station_ratio * n_p)) if n_p else 0
    p_lat = np.round(rng.uniform(*REGION["lat"], n_p), 4)
    p_lon = np.round(rng.uniform(*REGION["lon"], n_p), 4)
    c_lat = np.round(rng.uniform(REGION["lat"][0] - 0.3, REGION["lat"][1] + 0.3, n_c), 4)
    c_lon = np.round(rng.uniform(REGION["lon"][0] - 0.3, REGION["lon"][1] + 0.3, n_c), 4)
    p_ids, c_ids = _station_ids("P", n_p), _station_ids("C", n_c)

    # weather: regional AR(1) anomaly shared by all stations + year anomaly + local noise
    year_anom = {y: rng.normal(0, 1.0) for y in range(first.year, last.year + 1)}
    shared = np.zeros(n_days)
    eps = rng.normal(0, 2.0, n_days)
    for i in range(n_days):
        shared[i] = (0.75 * shared[i - 1] if i else 0.0) + eps[i]
    ya = np.array([year_anom[d.year] for d in dates])
    base = 9.0 + 9.5 * _seasonal(doy) + shared + ya
    climate_records = []
    tmax_c = np.empty((n_c, n_days))
    tmin_c = np.empty((n_c, n_days))
    prcp_c = np.empty((n_c, n_days))
    for j in range(n_c):
        alt = float(terrain_altitude(c_lat[j], c_lon[j]))
        tmean = base - 0.6 * (c_lat[j] - 51.0) - 0.0065 * alt + rng.normal(0, 0.5, n_days)
        dtr = np.clip(8.0 + 2.5 * _seasonal(doy) + rng.normal(0, 1.0, n_days), 1.0, None)
        tmax_c[j] = np.round(tmean + dtr / 2, 1)
        tmin_c[j] = np.round(tmean - dtr / 2, 1)
        wet = rng.uniform(size=n_days) < 0.45
        prcp_c[j] = np.where(wet, np.round(rng.gamma(0.8, 5.0, n_days), 1), 0.0)
        for i, d in enumerate(dates):
            climate_records.append(ClimateRecord(c_ids[j], float(c_lat[j]), float(c_lon[j]), d,
                                                 float(tmax_c[j, i]), float(tmin_c[j, i]), float(prcp_c[j, i])))

    observations: list[StationObservation] = []
    truth_rows = ["crop,station_id,season,bbch,onset_date,observed_date"]
    s1_series: list[AcquisitionSeries] = []
    s2_series: list[AcquisitionSeries] = []
    grids: dict[str, str] = {}
    c_latlon = np.column_stack([c_lat, c_lon]) if n_c else np.zeros((0, 2))
    resp_sar = float(spec.response.get("sar", 1.0))
    resp_opt = float(spec.response.get("optical", 1.0))
    day_ord = np.array([d.toordinal() for d in dates])

    for p in range(n_p):
        sid = p_ids[p]
        target = (float(p_lat[p]), float(p_lon[p]))
        tmax = DailySeries("tmax", sid, first, idw_series(c_latlon, tmax_c, target))
        tmin = DailySeries("tmin", sid, first, idw_series(c_latlon, tmin_c, target))
        prcp = DailySeries("prcp", sid, first, idw_series(c_latlon, prcp_c, target))
        altitude = float(terrain_altitude(p_lat[p], p_lon[p]))

        x, y = project_latlon(float(p_lat[p]), float(p_lon[p]))
        half = GRID_CELLS * GRID_CELLSIZE / 2
        geo = dict(ncols=GRID_CELLS, nrows=GRID_CELLS, origin_x=x - half, origin_y=y - half,
                   cellsize=GRID_CELLSIZE, nodata=-9999.0)
        grids[f"{sid}_cropmask.asc"] = serialize_grid(Grid(values=_crop_mask(rng, spec.crops), **geo))
        grids[f"{sid}_dem.asc"] = serialize_grid(Grid(values=_dem(rng, altitude), **geo))

        for crop in spec.crops:
            cfg = CropConfig.for_crop(crop)
            _, gsum, _, _ = accumulate_climate(tmax, tmin, prcp, cfg)
            th = spec.thresholds(crop)
            stages = sorted(th)
            green = np.zeros(n_days)
            mature = np.zeros(n_days)
            for season in years:
                s0 = (season_start(season) - first).days
                s1 = min(n_days, (season_start(season + 1) - first).days)
                onset_idx = {}
                for s in stages:
                    hit = np.flatnonzero(gsum.values[s0:s1] >= th[s])
                    if len(hit):
                        onset_idx[s] = s0 + int(hit[0])
                for s in stages:
                    if s not in onset_idx:
                        continue
                    i_true = onset_idx[s]
                    shift = int(round(rng.normal(0, spec.noise_sd_days))) if spec.noise_sd_days > 0 else 0
                    i_obs = i_true + shift
                    if not s0 <= i_obs < s1:
                        continue
                    observations.append(StationObservation(sid, float(p_lat[p]), float(p_lon[p]), crop, s,
                                                           dates[i_obs], 1, 10))
                    truth_rows.append(f"{crop},{sid},{season},{s},{dates[i_true].isoformat()},"
                                      f"{dates[i_obs].isoformat()}")
                    if rng.uniform() < spec.bad_flag_fraction:
                        junk = int(rng.integers(s0, s1))
                        observations.append(StationObservation(sid, float(p_lat[p]), float(p_lon[p]), crop, s,
                                                               dates[junk], 5, 3))
                # canopy curves anchored on the true stage days of this season
                known = [onset_idx[s] for s in stages if s in onset_idx]
                if not known:
                    continue
                up = onset_idx.get(stages[len(stages) // 3], known[0])
                down = onset_idx.get(stages[-2], known[-1])
                t = np.arange(s0, s1)
                green[s0:s1] = _logistic((t - up) / 8.0) * (1 - _logistic((t - down) / 6.0))
                mature[s0:s1] = _logistic((t - down) / 6.0)

            off_vv, off_vh = rng.normal(0, 0.8, 2)
            s1_days = np.arange(int(rng.integers(0, S1_REVISIT_DAYS)), n_days, S1_REVISIT_DAYS)
            g1, m1 = green[s1_days], mature[s1_days]
            vv = -14.0 + off_vv + resp_sar * (3.0 * g1 - 2.0 * m1) + rng.normal(0, 0.6, len(s1_days))
            vh = -21.0 + off_vh + resp_sar * (5.0 * g1 - 1.5 * m1) + rng.normal(0, 0.8, len(s1_days))
            s1_series.append(AcquisitionSeries(sid, crop, day_ord[s1_days],
                                               {"VV": np.round(vv, 3), "VH": np.round(vh, 3)}))

            s2_days = np.arange(int(rng.integers(0, S2_REVISIT_DAYS)), n_days, S2_REVISIT_DAYS)
            g2, m2 = green[s2_days], mature[s2_days]
            k = len(s2_days)
            cloudy = rng.uniform(size=k) < spec.cloud_fraction
            cloud_prob = np.where(cloudy, rng.uniform(75, 100, k), rng.uniform(0, 60, k))
            haze = np.where(cloudy, 0.25, 0.0)
            a = resp_opt

            def band(base_v, g_coef, m_coef, sd=0.01):
                v = base_v + a * (g_coef * g2 + m_coef * m2) + haze + rng.normal(0, sd, k)
                return np.round(np.clip(v, 0.001, None), 4)

            vals = {
                "cloud_prob": np.round(cloud_prob, 1),
                "B": band(0.05, -0.015, 0.01),
                "G": band(0.08, -0.01, 0.02),
                "R": band(0.09, -0.06, 0.03),
                "NIR": band(0.22, 0.28, -0.05, 0.015),
                "SWIR1": band(0.26, -0.08, 0.04),
                "SWIR2": band(0.18, -0.07, 0.03),
                "re1": band(0.11, -0.02, 0.02),
                "re2": band(0.16, 0.10, 0.0),
                "re3": band(0.20, 0.20, -0.03),
                "re4": band(0.21, 0.25, -0.04),
            }
            s2_series.append(AcquisitionSeries(sid, crop, day_ord[s2_days], vals))

    observations.sort(key=lambda o: (o.station_id, o.crop, o.date, o.bbch, o.qb))
    return SynthOutput(
        phenology_csv=serialize_phenology_csv(observations),
        climate_csv=serialize_climate_csv(climate_records),
        sentinel1_csv=serialize_acquisitions_csv(s1_series, RADAR_COLUMNS),
        sentinel2_csv=serialize_acquisitions_csv(s2_series, OPTICAL_COLUMNS),
        truth_csv="\n".join(truth_rows) + "\n",
        grids=grids,
    )
