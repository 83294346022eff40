"""Candidate model inputs: spectral and radar indices, climate indices, terrain, calendar."""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from .ingest import SEASON_START_DOY, Grid, ValidationError
from .preprocess import DailySeries

# (group name, member features); order defines the feature-vector layout
FEATURE_GROUPS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("sar", ("VH", "VV")),
    ("optical", ("B", "G", "NIR", "R", "SWIR1", "SWIR2")),
    ("red_edge", ("re1", "re2", "re3", "re4")),
    ("climate", ("tmin", "tmax", "prcp")),
    ("vegetation_indices", ("NDVI", "EVI2", "GNDVI", "GCVI", "SAVI")),
    ("water_stress_indices", ("NDWI", "PSRI", "MCARI", "NDYI")),
    ("atmospheric_indices", ("ARVI", "WDRVI", "VARI")),
    ("sar_indices", ("RVI", "PR", "CR")),
    ("climate_indices", ("GDD", "GDD_sum", "DTR", "prcp_sum")),
    ("time", ("season", "month", "day_of_week", "day_of_month")),
    ("geospatial", ("latitude", "longitude")),
    ("elevation", ("altitude", "slope", "aspect")),
)

FEATURE_NAMES: tuple[str, ...] = tuple(f for _, members in FEATURE_GROUPS for f in members)
FEATURE_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}
GROUP_OF = {f: g for g, members in FEATURE_GROUPS for f in members}

OPTICAL_BANDS = ("b", "g", "r", "nir", "swir1", "swir2", "re1", "re2", "re3", "re4")
OPTICAL_INDEX_NAMES = (
    "NDVI", "EVI2", "GNDVI", "GCVI", "SAVI", "NDWI", "PSRI", "MCARI", "NDYI", "ARVI", "WDRVI", "VARI",
)

BASE_TEMPERATURE = {
    "winter_wheat": 4.5,
    "winter_rapeseed": 4.5,
    "winter_rye": 4.5,
    "spring_barley": 4.5,
    "winter_barley": 4.5,
    "maize": 10.0,
    "spring_oat": 0.0,
    "sugar_beet": 1.0,
}

EARTH_RADIUS_KM = 6371.0


class IndexDomainError(ArithmeticError):
    """A spectral/radar index hit a zero denominator."""

    def __init__(self, index: str):
        super().__init__(f"{index}: zero denominator")
        self.index = index


@dataclass(frozen=True)
class RadarSample:
    vv: float
    vh: float


@dataclass(frozen=True)
class OpticalSample:
    b: float
    g: float
    r: float
    nir: float
    swir1: float = 0.0
    swir2: float = 0.0
    re1: float = 0.0
    re2: float = 0.0
    re3: float = 0.0
    re4: float = 0.0

    def __post_init__(self):
        for band in OPTICAL_BANDS:
            if getattr(self, band) < 0:
                raise ValidationError(f"negative reflectance in band {band}")


@dataclass(frozen=True)
class CropConfig:
    crop: str
    t_base: float
    season_start_doy: int = SEASON_START_DOY

    @classmethod
    def for_crop(cls, crop: str) -> "CropConfig":
        if crop not in BASE_TEMPERATURE:
            raise ValidationError(f"unknown crop {crop!r}")
        return cls(crop, BASE_TEMPERATURE[crop])


def radar_indices(s: RadarSample) -> tuple[float, float, float]:
    """Cross ratio, polarization ratio and radar vegetation index on dB values."""
    cr = s.vh - s.vv
    if s.vv == 0:
        raise IndexDomainError("PR")
    pr = s.vh / s.vv
    if s.vh == 0:
        raise IndexDomainError("RVI")
    denom = 1 + s.vv / s.vh
    if denom == 0:
        raise IndexDomainError("RVI")
    return cr, pr, 4 / denom


def _ratio(num, den, name, errors):
    if den == 0:
        errors[name] = IndexDomainError(name)
        return math.nan
    return num / den


def optical_indices(s: OpticalSample) -> tuple[dict[str, float], dict[str, IndexDomainError]]:
    """The twelve multispectral indices.

    Returns ``(values, errors)``; an index with a zero denominator is NaN in
    ``values`` and reported in ``errors`` while the rest are still computed.
    """
    b, g, r, nir, re1, re2 = s.b, s.g, s.r, s.nir, s.re1, s.re2
    e: dict[str, IndexDomainError] = {}
    v = {
        "NDVI": _ratio(nir - r, nir + r, "NDVI", e),
        "EVI2": _ratio(2.5 * (nir - r), nir + 2.4 * r + 1, "EVI2", e),
        "GNDVI": _ratio(nir - g, nir + g, "GNDVI", e),
        "GCVI": _ratio(nir, g, "GCVI", e) - 1,
        "SAVI": _ratio(1.5 * (nir - r), nir + r + 0.5, "SAVI", e),
        "NDWI": _ratio(g - nir, g + nir, "NDWI", e),
        "PSRI": _ratio(r - g, re2, "PSRI", e),
        "MCARI": ((re1 - r) - 0.2 * (re1 - g)) * _ratio(re1, r, "MCARI", e),
        "NDYI": _ratio(g - b, g + b, "NDYI", e),
        "ARVI": _ratio(nir - (2 * r - b), nir + (2 * r - b), "ARVI", e),
        "WDRVI": _ratio(0.2 * nir - r, 0.2 * nir + r, "WDRVI", e),
        "VARI": _ratio(g - r, g + r - b, "VARI", e),
    }
    return v, e


def optical_index_arrays(bands: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Vectorised :func:`optical_indices`; zero denominators give NaN."""
    b, g, r, nir, re1, re2 = (np.asarray(bands[k], dtype=np.float64) for k in ("b", "g", "r", "nir", "re1", "re2"))

    def div(num, den):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(den == 0, np.nan, num / np.where(den == 0, 1.0, den))

    return {
        "NDVI": div(nir - r, nir + r),
        "EVI2": div(2.5 * (nir - r), nir + 2.4 * r + 1),
        "GNDVI": div(nir - g, nir + g),
        "GCVI": div(nir, g) - 1,
        "SAVI": div(1.5 * (nir - r), nir + r + 0.5),
        "NDWI": div(g - nir, g + nir),
        "PSRI": div(r - g, re2),
        "MCARI": ((re1 - r) - 0.2 * (re1 - g)) * div(re1, r),
        "NDYI": div(g - b, g + b),
        "ARVI": div(nir - (2 * r - b), nir + (2 * r - b)),
        "WDRVI": div(0.2 * nir - r, 0.2 * nir + r),
        "VARI": div(g - r, g + r - b),
    }


def radar_index_arrays(vv, vh) -> dict[str, np.ndarray]:
    vv = np.asarray(vv, dtype=np.float64)
    vh = np.asarray(vh, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        pr = np.where(vv == 0, np.nan, vh / np.where(vv == 0, 1.0, vv))
        q = np.where(vh == 0, np.nan, vv / np.where(vh == 0, 1.0, vh))
        rvi = np.where(1 + q == 0, np.nan, 4 / (1 + q))
    return {"CR": vh - vv, "PR": pr, "RVI": rvi}


def gdd_daily(tmax, tmin, t_base):
    """Growing degree days from the clamped daily mean temperature."""
    tmax = np.asarray(tmax, dtype=np.float64)
    tmin = np.asarray(tmin, dtype=np.float64)
    if np.any(tmax < tmin):
        raise ValidationError("tmax < tmin")
    out = np.maximum(0.0, (tmax + tmin) / 2 - t_base)
    return float(out) if out.ndim == 0 else out


def _season_running_sum(values: np.ndarray, start: dt.date, start_doy: int) -> np.ndarray:
    out = np.empty_like(values)
    acc = 0.0
    for i, v in enumerate(values):
        day = start + dt.timedelta(days=i)
        if day.timetuple().tm_yday == start_doy:
            acc = 0.0
        if not math.isnan(v):
            acc += v
        out[i] = acc
    return out


def accumulate_climate(tmax: DailySeries, tmin: DailySeries, prcp: DailySeries, cfg: CropConfig):
    """Daily GDD, season GDD sum, diurnal range and season precipitation sum.

    Both running sums restart at zero on ``cfg.season_start_doy`` of every
    year (the restart day contributes its own value). Missing days add nothing.
    """
    if not (tmax.start == tmin.start == prcp.start and len(tmax.values) == len(tmin.values) == len(prcp.values)):
        raise ValueError("climate series are not aligned")
    hi, lo = tmax.values, tmin.values
    both = np.isfinite(hi) & np.isfinite(lo)
    if np.any(hi[both] < lo[both]):
        raise ValidationError("tmax < tmin")
    gdd = np.full_like(hi, np.nan)
    gdd[both] = gdd_daily(hi[both], lo[both], cfg.t_base)
    sid = tmax.station_id
    return (
        DailySeries("GDD", sid, tmax.start, gdd),
        DailySeries("GDD_sum", sid, tmax.start, _season_running_sum(gdd, tmax.start, cfg.season_start_doy)),
        DailySeries("DTR", sid, tmax.start, hi - lo),
        DailySeries("prcp_sum", sid, tmax.start, _season_running_sum(prcp.values, tmax.start, cfg.season_start_doy)),
    )


def haversine_km(lat1, lon1, lat2, lon2):
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(a, dtype=np.float64)) for a in (lat1, lon1, lat2, lon2))
    a = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0, 1)))


def idw_interpolate(stations, target: tuple[float, float], k: int = 10, power: float = 2.0) -> float:
    """Inverse-distance-squared mean of the ``k`` nearest stations with a defined value.

    ``stations`` is a sequence of ``(lat, lon, value)``; ``None``/NaN values are
    skipped.  A station at zero distance returns its value unchanged.
    """
    pts = [(la, lo, v) for la, lo, v in stations if v is not None and not math.isnan(v)]
    if not pts:
        raise ValueError("IDW needs at least one station with a defined value")
    arr = np.asarray(pts, dtype=np.float64)
    d = haversine_km(target[0], target[1], arr[:, 0], arr[:, 1])
    nearest = np.argsort(d, kind="stable")[:k]
    d, v = d[nearest], arr[nearest, 2]
    if np.any(d == 0):
        return float(v[np.flatnonzero(d == 0)[0]])
    w = d ** -power
    return float(np.dot(w, v) / w.sum())


def idw_weights(station_latlon: np.ndarray, target: tuple[float, float], k: int = 10, power: float = 2.0):
    """Indices and normalised weights of the ``k`` nearest stations (vectorised IDW helper)."""
    d = haversine_km(target[0], target[1], station_latlon[:, 0], station_latlon[:, 1])
    nearest = np.argsort(d, kind="stable")[:k]
    d = d[nearest]
    if np.any(d == 0):
        w = np.zeros(len(nearest))
        w[np.flatnonzero(d == 0)[0]] = 1.0
        return nearest, w
    w = d ** -power
    return nearest, w / w.sum()


def idw_series(station_latlon: np.ndarray, values: np.ndarray, target: tuple[float, float], k: int = 10,
               power: float = 2.0) -> np.ndarray:
    """Day-by-day IDW of ``values`` (stations x days) at ``target``.

    Days on which one of the ``k`` nearest stations lacks a value fall back
    to :func:`idw_interpolate` over the stations that have one; days with no
    value anywhere stay NaN.
    """
    values = np.asarray(values, dtype=np.float64)
    idx, w = idw_weights(station_latlon, target, k, power)
    sub = values[idx]
    out = w @ np.where(np.isnan(sub), 0.0, sub)
    gaps = np.flatnonzero(np.isnan(sub).any(axis=0))
    for day in gaps:
        col = values[:, day]
        ok = np.flatnonzero(~np.isnan(col))
        if len(ok) == 0:
            out[day] = np.nan
        else:
            out[day] = idw_interpolate(
                [(station_latlon[i, 0], station_latlon[i, 1], col[i]) for i in ok], target, k, power)
    return out


def terrain_derivatives(dem: Grid) -> tuple[Grid, Grid]:
    """Slope and aspect (degrees) with Horn's 3x3 stencil and edge replication.

    Aspect is the compass bearing of steepest descent, clockwise from north
    in [0, 360); flat cells get aspect 0.
    """
    if dem.nrows < 3 or dem.ncols < 3:
        raise ValueError("terrain derivatives need at least a 3x3 grid")
    z = np.pad(dem.values.astype(np.float64), 1, mode="edge")
    a, b, c = z[:-2, :-2], z[:-2, 1:-1], z[:-2, 2:]
    d, f = z[1:-1, :-2], z[1:-1, 2:]
    g, h, i = z[2:, :-2], z[2:, 1:-1], z[2:, 2:]
    cs = dem.cellsize
    dz_east = ((c + 2 * f + i) - (a + 2 * d + g)) / (8 * cs)
    dz_north = ((a + 2 * b + c) - (g + 2 * h + i)) / (8 * cs)
    slope = np.degrees(np.arctan(np.hypot(dz_east, dz_north)))
    aspect = np.degrees(np.arctan2(-dz_east, -dz_north)) % 360.0
    flat = (dz_east == 0) & (dz_north == 0)
    aspect[flat] = 0.0
    aspect[aspect >= 360.0] = 0.0
    geo = dict(ncols=dem.ncols, nrows=dem.nrows, origin_x=dem.origin_x, origin_y=dem.origin_y,
               cellsize=dem.cellsize, nodata=dem.nodata)
    return Grid(values=slope, **geo), Grid(values=aspect, **geo)


def time_features(date: dt.date) -> tuple[int, int, int, int]:
    """(meteorological season DJF=0..SON=3, month, weekday Monday=0, day of month)."""
    return date.month % 12 // 3, date.month, date.weekday(), date.day


def build_feature_table(
    start: dt.date,
    n_days: int,
    *,
    radar: dict[str, DailySeries] | None = None,
    optical: dict[str, DailySeries] | None = None,
    climate: dict[str, DailySeries] | None = None,
    cfg: CropConfig,
    lat: float,
    lon: float,
    altitude: float,
    slope: float,
    aspect: float,
) -> np.ndarray:
    """Daily (n_days, 43) feature matrix, columns in :data:`FEATURE_NAMES` order.

    ``radar`` holds "VV"/"VH", ``optical`` the ten band series keyed by
    :data:`OPTICAL_BANDS`, ``climate`` "tmax"/"tmin"/"prcp".  Missing inputs
    become NaN columns.
    """
    X = np.full((n_days, len(FEATURE_NAMES)), np.nan)
    days = [start + dt.timedelta(days=i) for i in range(n_days)]

    def window(series: DailySeries | None) -> np.ndarray:
        out = np.full(n_days, np.nan)
        if series is None:
            return out
        off = (series.start - start).days
        lo, hi = max(0, off), min(n_days, off + len(series.values))
        if hi > lo:
            out[lo:hi] = series.values[lo - off:hi - off]
        return out

    def put(name, values):
        X[:, FEATURE_INDEX[name]] = values

    radar = radar or {}
    vv, vh = window(radar.get("VV")), window(radar.get("VH"))
    put("VV", vv)
    put("VH", vh)
    for name, arr in radar_index_arrays(vv, vh).items():
        put(name, arr)

    optical = optical or {}
    bands = {k: window(optical.get(k)) for k in OPTICAL_BANDS}
    for k, name in zip(OPTICAL_BANDS, ("B", "G", "R", "NIR", "SWIR1", "SWIR2", "re1", "re2", "re3", "re4")):
        put(name, bands[k])
    for name, arr in optical_index_arrays(bands).items():
        put(name, arr)

    climate = climate or {}
    cl = {k: climate.get(k) for k in ("tmax", "tmin", "prcp")}
    for k in cl:
        put(k, window(cl[k]))
    if all(v is not None for v in cl.values()):
        for s in accumulate_climate(cl["tmax"], cl["tmin"], cl["prcp"], cfg):
            put(s.name, window(s))

    cal = np.array([time_features(d) for d in days], dtype=np.float64)
    for j, name in enumerate(("season", "month", "day_of_week", "day_of_month")):
        put(name, cal[:, j])
    put("latitude", lat)
    put("longitude", lon)
    put("altitude", altitude)
    put("slope", slope)
    put("aspect", aspect)
    return X
