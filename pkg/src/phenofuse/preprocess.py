"""From irregular, cloud-contaminated acquisitions to daily station series.

Irregular series are passed around as a pair of arrays ``(t, y)`` where ``t``
holds day numbers (integers, e.g. proleptic ordinals from
:meth:`datetime.date.toordinal`) sorted ascending.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .ingest import CROP_CODES, Grid

BOX_SIZE_M = 5000.0
INNER_BUFFER_M = 70.0
OUTER_BUFFER_M = 40.0
MIN_FIELD_HA = 2.0


class InsufficientData(ValueError):
    pass


@dataclass
class DailySeries:
    name: str
    station_id: str
    start: dt.date
    values: np.ndarray  # float64, NaN for undefined days

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or len(self.values) < 1:
            raise ValueError("DailySeries needs at least one slot")

    @property
    def dates(self) -> list[dt.date]:
        return [self.start + dt.timedelta(days=i) for i in range(len(self.values))]

    @property
    def end(self) -> dt.date:
        return self.start + dt.timedelta(days=len(self.values) - 1)

    def at(self, day: dt.date) -> float:
        i = (day - self.start).days
        if 0 <= i < len(self.values):
            return float(self.values[i])
        return math.nan


@dataclass
class FieldSelection:
    station_id: str
    crop: str
    pixel_sets: list[np.ndarray] = field(default_factory=list)  # flat row-major indices into the mask grid
    areas_ha: list[float] = field(default_factory=list)
    geometry: tuple = ()

    @property
    def pixels(self) -> np.ndarray:
        if not self.pixel_sets:
            return np.zeros(0, dtype=np.int64)
        return np.sort(np.concatenate(self.pixel_sets))


def _as_series(t, y):
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("timestamps and values must be 1-D arrays of equal length")
    return t, y


def cloud_mask_series(t, y, cloud_t, cloud_prob, threshold: float = 75.0):
    """Drop acquisitions whose cloud probability (percent) is at or above ``threshold``."""
    t, y = _as_series(t, y)
    cloud_t, cloud_prob = _as_series(cloud_t, cloud_prob)
    if not np.array_equal(t, cloud_t):
        raise ValueError("observation and cloud-probability timestamps differ")
    keep = cloud_prob < threshold
    return t[keep], y[keep]


def loess_smooth(t, y, fraction: float = 0.03) -> np.ndarray:
    """Single-pass LOESS: tricube-weighted local linear fit at every timestamp.

    Each point uses its ``max(2, ceil(fraction * n))`` nearest neighbours in
    time; the bandwidth is the distance to the farthest of them.  Where the
    weighted design is degenerate (a lone effective point, or all weight on
    one timestamp) the weighted mean is returned instead of the line.
    """
    t, y = _as_series(t, y)
    n = len(t)
    if n < 3:
        raise InsufficientData("insufficient data: LOESS needs at least 3 points")
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    r = min(n, max(2, math.ceil(fraction * n)))
    out = np.empty(n)
    for i in range(n):
        d = np.abs(t - t[i])
        idx = np.argsort(d, kind="stable")[:r]
        h = d[idx].max()
        if h == 0:
            out[i] = y[idx].mean()
            continue
        w = (1 - np.clip(d[idx] / h, 0, 1) ** 3) ** 3
        sw = w.sum()
        tx = t[idx] - t[i]
        xm = (w * tx).sum() / sw
        ym = (w * y[idx]).sum() / sw
        sxx = (w * (tx - xm) ** 2).sum()
        if sxx <= 1e-12 * h * h * sw:
            out[i] = ym
        else:
            slope = (w * (tx - xm) * (y[idx] - ym)).sum() / sxx
            out[i] = ym - slope * xm
    return out


def resample_daily(t, y, name: str = "", station_id: str = "") -> DailySeries:
    """Linear interpolation onto every day between the first and last timestamp."""
    t, y = _as_series(t, y)
    ok = np.isfinite(y)
    t, y = t[ok], y[ok]
    if len(t) < 2:
        raise InsufficientData("resampling needs at least 2 defined points")
    order = np.argsort(t, kind="stable")
    t, y = t[order], y[order]
    if np.any(np.diff(t) == 0):
        raise ValueError("duplicate timestamps")
    first, last = int(t[0]), int(t[-1])
    days = np.arange(first, last + 1, dtype=np.float64)
    return DailySeries(name, station_id, dt.date.fromordinal(first), np.interp(days, t, y))


def _pixels(distance_m: float, cellsize: float) -> int:
    return math.ceil(distance_m / cellsize - 1e-9)


def select_station_fields(
    crop_mask: Grid,
    station_xy: tuple[float, float],
    crop: str,
    station_id: str = "",
    box_size_m: float = BOX_SIZE_M,
    inner_buffer_m: float = INNER_BUFFER_M,
    min_field_ha: float = MIN_FIELD_HA,
) -> FieldSelection:
    """Find the effective crop fields around a station.

    The mask is clipped to a square box centred on the station; 4-connected
    components of the target crop are each eroded with a square structuring
    element of radius ``ceil(inner_buffer_m / cellsize)`` pixels (pixels
    beyond the box count as foreign), and components whose eroded area
    reaches ``min_field_ha`` are kept.  An erosion radius above
    ``ceil(40 m / cellsize)`` also clears the outer buffer.
    """
    sx, sy = station_xy
    xs, ys = crop_mask.cell_centers()
    cs = crop_mask.cellsize
    x0, y0 = crop_mask.origin_x, crop_mask.origin_y
    if not (x0 <= sx <= x0 + crop_mask.ncols * cs and y0 <= sy <= y0 + crop_mask.nrows * cs):
        raise ValueError(f"station {station_id or station_xy} lies outside the crop mask")
    sel = FieldSelection(station_id, crop, geometry=crop_mask.geometry)
    half = box_size_m / 2
    cols = np.flatnonzero(np.abs(xs - sx) <= half)
    rows = np.flatnonzero(np.abs(ys - sy) <= half)
    if len(cols) == 0 or len(rows) == 0:
        return sel
    r0, r1, c0, c1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
    box = crop_mask.values[r0:r1, c0:c1]
    target = (box == CROP_CODES[crop]) & (box != crop_mask.nodata)
    labels, n = ndimage.label(target)  # default structure is 4-connectivity
    radius = _pixels(inner_buffer_m, cs)
    struct = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    min_pixels = math.ceil(min_field_ha * 10_000 / (cs * cs) - 1e-9)
    for lab in range(1, n + 1):
        comp = labels == lab
        if comp.sum() < min_pixels:
            continue
        core = ndimage.binary_erosion(comp, structure=struct, border_value=0)
        if core.sum() < min_pixels:
            continue
        rr, cc = np.nonzero(core)
        flat = (rr + r0) * crop_mask.ncols + (cc + c0)
        sel.pixel_sets.append(np.sort(flat))
        sel.areas_ha.append(len(flat) * cs * cs / 10_000)
    # canonical order so the result does not depend on labeling
    order = sorted(range(len(sel.pixel_sets)), key=lambda i: sel.pixel_sets[i][0])
    sel.pixel_sets = [sel.pixel_sets[i] for i in order]
    sel.areas_ha = [sel.areas_ha[i] for i in order]
    return sel


def median_aggregate(selection: FieldSelection, raster_series):
    """Per-date median over the selected pixels, ignoring nodata.

    ``raster_series`` is an iterable of ``(day, Grid)``; dates whose pixels are
    all nodata are left out of the returned ``(t, y)`` series.
    """
    pix = selection.pixels
    t_out, y_out = [], []
    for day, grid in raster_series:
        if grid.geometry != selection.geometry:
            raise ValueError(f"raster for {day} does not share the crop-mask geometry")
        if len(pix) == 0:
            continue
        vals = grid.values.ravel()[pix]
        vals = vals[(vals != grid.nodata) & np.isfinite(vals)]
        if len(vals) == 0:
            continue
        t_out.append(day.toordinal() if isinstance(day, dt.date) else day)
        y_out.append(float(np.median(vals)))
    return np.asarray(t_out, dtype=np.float64), np.asarray(y_out, dtype=np.float64)


PROJECTION_LAT0 = 51.0
_R_M = 6_371_000.0


def project_latlon(lat: float, lon: float) -> tuple[float, float]:
    """Equirectangular metres (reference latitude 51 N) shared by grids and station lookups."""
    x = _R_M * math.radians(lon) * math.cos(math.radians(PROJECTION_LAT0))
    y = _R_M * math.radians(lat)
    return x, y
