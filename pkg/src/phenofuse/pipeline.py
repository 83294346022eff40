"""File-level stages between raw inputs and labeled datasets.

``preprocess_inputs`` turns acquisitions, climate records and grids into
daily station series plus per-field terrain statistics;
``build_datasets`` joins those with cleaned observations into one
:class:`~phenofuse.dataset.LabeledDataset` per crop.
"""
from __future__ import annotations

import datetime as dt
import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .dataset import LabeledDataset, assemble_labeled_dataset
from .features import OPTICAL_BANDS, CropConfig, build_feature_table, idw_series, terrain_derivatives
from .ingest import (
    OPTICAL_COLUMNS,
    RADAR_COLUMNS,
    AcquisitionSeries,
    ClimateRecord,
    Grid,
    StationObservation,
    season_start,
)
from .preprocess import (
    BOX_SIZE_M,
    INNER_BUFFER_M,
    MIN_FIELD_HA,
    DailySeries,
    InsufficientData,
    cloud_mask_series,
    loess_smooth,
    project_latlon,
    resample_daily,
    select_station_fields,
)

logger = logging.getLogger(__name__)

# optical CSV column -> band key used by the feature code
BAND_OF_COLUMN = dict(zip(("B", "G", "R", "NIR", "SWIR1", "SWIR2", "re1", "re2", "re3", "re4"), OPTICAL_BANDS))
DAILY_COLUMNS = (*RADAR_COLUMNS, *OPTICAL_COLUMNS[1:], "tmax", "tmin", "prcp")


@dataclass(frozen=True)
class PreprocessSettings:
    loess_fraction: float = 0.03
    cloud_threshold: float = 75.0
    idw_k: int = 10
    buffer_inner_m: float = INNER_BUFFER_M
    min_field_ha: float = MIN_FIELD_HA
    box_size_m: float = BOX_SIZE_M


def smooth_daily(days: np.ndarray, values: np.ndarray, name: str, station_id: str,
                 fraction: float) -> DailySeries | None:
    """LOESS then daily linear resampling; None when too few points survive."""
    ok = np.isfinite(values)
    t, y = days[ok].astype(np.float64), values[ok]
    if len(t) < 3:
        return None
    try:
        return resample_daily(t, loess_smooth(t, y, fraction), name, station_id)
    except InsufficientData:
        return None


def satellite_daily(s1: AcquisitionSeries | None, s2: AcquisitionSeries | None,
                    settings: PreprocessSettings) -> dict[str, DailySeries]:
    out: dict[str, DailySeries] = {}
    if s1 is not None:
        for col in RADAR_COLUMNS:
            s = smooth_daily(s1.days, s1.values[col], col, s1.station_id, settings.loess_fraction)
            if s is not None:
                out[col] = s
    if s2 is not None:
        prob = s2.values["cloud_prob"]
        for col in OPTICAL_COLUMNS[1:]:
            t, y = cloud_mask_series(s2.days, s2.values[col], s2.days, prob, settings.cloud_threshold)
            s = smooth_daily(t, y, col, s2.station_id, settings.loess_fraction)
            if s is not None:
                out[col] = s
    return out


@dataclass
class ClimateTable:
    """Climate records as a (station x day) matrix per variable."""

    station_ids: list[str]
    latlon: np.ndarray
    start: dt.date
    tmax: np.ndarray
    tmin: np.ndarray
    prcp: np.ndarray

    @classmethod
    def from_records(cls, records: list[ClimateRecord]) -> "ClimateTable":
        if not records:
            raise ValueError("no climate records")
        ids = sorted({r.station_id for r in records})
        pos = {s: i for i, s in enumerate(ids)}
        start = min(r.date for r in records)
        n_days = (max(r.date for r in records) - start).days + 1
        mats = {k: np.full((len(ids), n_days), np.nan) for k in ("tmax", "tmin", "prcp")}
        latlon = np.zeros((len(ids), 2))
        for r in records:
            i, d = pos[r.station_id], (r.date - start).days
            latlon[i] = (r.lat, r.lon)
            for k in mats:
                v = getattr(r, k)
                if v is not None:
                    mats[k][i, d] = v
        return cls(ids, latlon, start, mats["tmax"], mats["tmin"], mats["prcp"])

    def at(self, lat: float, lon: float, station_id: str, k: int) -> dict[str, DailySeries]:
        return {
            name: DailySeries(name, station_id, self.start, idw_series(self.latlon, getattr(self, name), (lat, lon), k))
            for name in ("tmax", "tmin", "prcp")
        }


def _circular_mean_deg(a: np.ndarray) -> float:
    r = np.radians(a)
    s, c = np.sin(r).mean(), np.cos(r).mean()
    if abs(s) < 1e-12 and abs(c) < 1e-12:
        return 0.0
    return float(np.degrees(np.arctan2(s, c)) % 360.0)


def field_terrain(crop_mask: Grid, dem: Grid, lat: float, lon: float, crop: str, station_id: str,
                  settings: PreprocessSettings) -> dict:
    """Field count, area and mean altitude/slope/aspect over the selected fields.

    Without any qualifying field the station's own cell stands in.
    """
    if not crop_mask.same_geometry(dem):
        raise ValueError(f"{station_id}: crop mask and DEM differ in geometry")
    xy = project_latlon(lat, lon)
    sel = select_station_fields(crop_mask, xy, crop, station_id, settings.box_size_m,
                                settings.buffer_inner_m, settings.min_field_ha)
    slope, aspect = terrain_derivatives(dem)
    pix = sel.pixels
    if len(pix) == 0:
        logger.warning("%s/%s: no field passes the buffer and area rules; using the station cell", station_id, crop)
        xs, ys = crop_mask.cell_centers()
        col = int(np.argmin(np.abs(xs - xy[0])))
        row = int(np.argmin(np.abs(ys - xy[1])))
        pix = np.array([row * crop_mask.ncols + col])
    z = dem.values.ravel()[pix]
    z = z[z != dem.nodata]
    return {
        "n_fields": len(sel.pixel_sets),
        "area_ha": float(sum(sel.areas_ha)),
        "altitude": float(z.mean()) if len(z) else math.nan,
        "slope": float(slope.values.ravel()[pix].mean()),
        "aspect": _circular_mean_deg(aspect.values.ravel()[pix]),
    }


def preprocess_inputs(
    observations: list[StationObservation],
    climate: list[ClimateRecord],
    s1: dict[tuple[str, str], AcquisitionSeries],
    s2: dict[tuple[str, str], AcquisitionSeries],
    grids: dict[str, tuple[Grid, Grid]],
    settings: PreprocessSettings = PreprocessSettings(),
    crops: list[str] | None = None,
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Daily series table and field table for every observed (station, crop).

    ``grids`` maps station id to ``(crop_mask, dem)``.  The daily table
    holds smoothed satellite values and IDW climate, one row per day.
    """
    table = ClimateTable.from_records(climate)
    pairs = sorted({(o.station_id, o.crop) for o in observations if crops is None or o.crop in crops})
    coords = {o.station_id: (o.lat, o.lon) for o in observations}
    climate_cache: dict[str, dict[str, DailySeries]] = {}
    daily_frames, field_rows = [], []
    for sid, crop in pairs:
        lat, lon = coords[sid]
        if sid not in climate_cache:
            climate_cache[sid] = table.at(lat, lon, sid, settings.idw_k)
        series = {**satellite_daily(s1.get((sid, crop)), s2.get((sid, crop)), settings), **climate_cache[sid]}
        start, n = table.start, len(climate_cache[sid]["tmax"].values)
        block = {"station_id": [sid] * n, "crop": [crop] * n,
                 "date": [(start + dt.timedelta(days=i)).isoformat() for i in range(n)]}
        for col in DAILY_COLUMNS:
            vals = np.full(n, np.nan)
            s = series.get(col)
            if s is not None:
                off = (s.start - start).days
                lo, hi = max(0, off), min(n, off + len(s.values))
                if hi > lo:
                    vals[lo:hi] = s.values[lo - off:hi - off]
            block[col] = vals
        daily_frames.append(pd.DataFrame(block))
        if sid not in grids:
            raise FileNotFoundError(f"no crop mask / DEM grids for station {sid}")
        mask, dem = grids[sid]
        field_rows.append({"station_id": sid, "crop": crop, "lat": lat, "lon": lon,
                           **field_terrain(mask, dem, lat, lon, crop, sid, settings)})
    daily = pd.concat(daily_frames, ignore_index=True) if daily_frames else pd.DataFrame(
        columns=["station_id", "crop", "date", *DAILY_COLUMNS])
    fields = pd.DataFrame(field_rows, columns=["station_id", "crop", "lat", "lon", "n_fields", "area_ha",
                                               "altitude", "slope", "aspect"])
    return daily, fields


def build_datasets(observations: list[StationObservation], daily: pd.DataFrame, fields: pd.DataFrame,
                   crops: list[str] | None = None) -> dict[str, LabeledDataset]:
    """One labeled dataset per crop; each observed season spans DOY 265 to DOY 264."""
    out = {}
    field_info = {(r.station_id, r.crop): r for r in fields.itertuples(index=False)}
    for crop in sorted({o.crop for o in observations}):
        if crops is not None and crop not in crops:
            continue
        cfg = CropConfig.for_crop(crop)
        obs = [o for o in observations if o.crop == crop]
        daily_features = {}
        for sid in sorted({o.station_id for o in obs}):
            part = daily[(daily["station_id"] == sid) & (daily["crop"] == crop)]
            if part.empty:
                continue
            first = dt.date.fromisoformat(part["date"].iloc[0])
            n_all = len(part)

            def series(col):
                return DailySeries(col, sid, first, part[col].to_numpy(dtype=np.float64))

            radar = {c: series(c) for c in RADAR_COLUMNS}
            optical = {BAND_OF_COLUMN[c]: series(c) for c in OPTICAL_COLUMNS[1:]}
            climate = {c: series(c) for c in ("tmax", "tmin", "prcp")}
            info = field_info[(sid, crop)]
            for season in sorted({o.season for o in obs if o.station_id == sid}):
                start = season_start(season)
                end = season_start(season + 1) - dt.timedelta(days=1)
                lo = max(0, (start - first).days)
                hi = min(n_all, (end - first).days + 1)
                if hi - lo <= 0:
                    continue
                window_start = first + dt.timedelta(days=lo)
                X = build_feature_table(window_start, hi - lo, radar=radar, optical=optical, climate=climate,
                                        cfg=cfg, lat=info.lat, lon=info.lon, altitude=info.altitude,
                                        slope=info.slope, aspect=info.aspect)
                daily_features[(sid, season)] = (window_start, X)
        out[crop] = assemble_labeled_dataset(obs, daily_features, crop)
    return out
