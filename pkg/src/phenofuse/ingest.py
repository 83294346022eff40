"""Readers and writers for phenology records, climate-station series, ASCII grids
and station-level satellite acquisitions.

All formats are UTF-8, comma separated (grids: whitespace separated) and
use ISO-8601 dates.  Parsing is strict: a malformed row raises
:class:`ParseError`, an out-of-domain value raises :class:`ValidationError`,
both naming the 1-based line number of the offending row.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import math
from dataclasses import dataclass
from itertools import groupby

import numpy as np

CROPS = (
    "maize",
    "spring_barley",
    "spring_oat",
    "sugar_beet",
    "winter_barley",
    "winter_rapeseed",
    "winter_rye",
    "winter_wheat",
)

# integer class codes used in crop-type rasters
CROP_CODES = {crop: i + 1 for i, crop in enumerate(CROPS)}

BBCH_STAGES = (0, 10, 14, 31, 35, 51, 53, 61, 65, 75, 83, 87, 89)

# stages reported per crop by the national phenology network
CROP_STAGES = {
    "maize": (0, 10, 31, 53, 61, 75, 83, 87, 89),
    "spring_barley": (0, 10, 31, 51, 87, 89),
    "spring_oat": (0, 10, 31, 51, 75, 87, 89),
    "sugar_beet": (0, 10, 35, 89),
    "winter_barley": (0, 10, 31, 51, 87, 89),
    "winter_rapeseed": (0, 10, 14, 31, 51, 61, 87, 89),
    "winter_rye": (0, 10, 31, 51, 61, 65, 87, 89),
    "winter_wheat": (0, 10, 31, 51, 75, 87, 89),
}

SEASON_START_DOY = 265

PHENOLOGY_HEADER = ("station_id", "lat", "lon", "crop", "bbch", "date", "qb", "qn")
CLIMATE_HEADER = ("station_id", "lat", "lon", "date", "tmax", "tmin", "prcp")


class ParseError(ValueError):
    """Input text does not follow the expected layout."""


class ValidationError(ValueError):
    """Input is well formed but holds a value outside its domain."""


@dataclass(frozen=True)
class StationObservation:
    station_id: str
    lat: float
    lon: float
    crop: str
    bbch: int
    date: dt.date
    qb: int
    qn: int

    @property
    def season(self) -> int:
        return season_of(self.date)


@dataclass(frozen=True)
class ClimateRecord:
    station_id: str
    lat: float
    lon: float
    date: dt.date
    tmax: float | None
    tmin: float | None
    prcp: float | None


@dataclass(frozen=True, eq=False)
class Grid:
    """Regular raster; ``values`` has shape (nrows, ncols), row 0 is the top (north) row."""

    ncols: int
    nrows: int
    origin_x: float
    origin_y: float
    cellsize: float
    nodata: float
    values: np.ndarray

    def __post_init__(self):
        if self.cellsize <= 0:
            raise ValidationError(f"cellsize must be positive, got {self.cellsize}")
        if self.values.shape != (self.nrows, self.ncols):
            raise ValidationError(
                f"values shape {self.values.shape} does not match {self.nrows}x{self.ncols}"
            )

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return self.same_geometry(other) and self.nodata == other.nodata and np.array_equal(
            self.values, other.values, equal_nan=True
        )

    @property
    def geometry(self) -> tuple:
        return (self.nrows, self.ncols, self.origin_x, self.origin_y, self.cellsize)

    def same_geometry(self, other: "Grid") -> bool:
        return self.geometry == other.geometry

    def valid_mask(self) -> np.ndarray:
        return self.values != self.nodata

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Projected x (per column) and y (per row) of cell centers."""
        xs = self.origin_x + (np.arange(self.ncols) + 0.5) * self.cellsize
        ys = self.origin_y + (self.nrows - np.arange(self.nrows) - 0.5) * self.cellsize
        return xs, ys


def season_of(date: dt.date) -> int:
    """Harvest-year key: DOY 265 of year Y-1 up to DOY 264 of year Y is season Y."""
    doy = date.timetuple().tm_yday
    return date.year + 1 if doy >= SEASON_START_DOY else date.year


def season_start(season: int) -> dt.date:
    return dt.date(season - 1, 1, 1) + dt.timedelta(days=SEASON_START_DOY - 1)


def _rows(text: str, header: tuple[str, ...]):
    reader = csv.reader(io.StringIO(text))
    try:
        first = next(reader)
    except StopIteration:
        raise ParseError("line 1: missing header") from None
    if tuple(h.strip() for h in first) != header:
        raise ParseError(f"line 1: expected header {','.join(header)}, found {','.join(first)}")
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        lineno = reader.line_num
        if len(row) != len(header):
            raise ParseError(f"line {lineno}: expected {len(header)} fields, found {len(row)}")
        yield lineno, [c.strip() for c in row]


def _float(value: str, lineno: int, name: str) -> float:
    try:
        out = float(value)
    except ValueError:
        raise ParseError(f"line {lineno}: {name}={value!r} is not a number") from None
    if not math.isfinite(out):
        raise ValidationError(f"line {lineno}: {name} must be finite")
    return out


def _optional_float(value: str, lineno: int, name: str) -> float | None:
    return None if value == "" else _float(value, lineno, name)


def _int(value: str, lineno: int, name: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"line {lineno}: {name}={value!r} is not an integer") from None


def _date(value: str, lineno: int) -> dt.date:
    try:
        return dt.date.fromisoformat(value)
    except ValueError:
        raise ParseError(f"line {lineno}: date={value!r} is not YYYY-MM-DD") from None


def parse_phenology_csv(text: str) -> list[StationObservation]:
    out = []
    for lineno, (sid, lat, lon, crop, bbch, date, qb, qn) in _rows(text, PHENOLOGY_HEADER):
        if crop not in CROP_CODES:
            raise ValidationError(f"line {lineno}: unknown crop {crop!r}")
        stage = _int(bbch, lineno, "bbch")
        if stage not in BBCH_STAGES:
            raise ValidationError(f"line {lineno}: bbch {stage} is not one of {BBCH_STAGES}")
        out.append(
            StationObservation(
                station_id=sid,
                lat=_float(lat, lineno, "lat"),
                lon=_float(lon, lineno, "lon"),
                crop=crop,
                bbch=stage,
                date=_date(date, lineno),
                qb=_int(qb, lineno, "qb"),
                qn=_int(qn, lineno, "qn"),
            )
        )
    return out


def parse_climate_csv(text: str) -> list[ClimateRecord]:
    out = []
    for lineno, (sid, lat, lon, date, tmax, tmin, prcp) in _rows(text, CLIMATE_HEADER):
        rec = ClimateRecord(
            station_id=sid,
            lat=_float(lat, lineno, "lat"),
            lon=_float(lon, lineno, "lon"),
            date=_date(date, lineno),
            tmax=_optional_float(tmax, lineno, "tmax"),
            tmin=_optional_float(tmin, lineno, "tmin"),
            prcp=_optional_float(prcp, lineno, "prcp"),
        )
        if rec.tmax is not None and rec.tmin is not None and rec.tmax < rec.tmin:
            raise ValidationError(f"line {lineno}: tmax {rec.tmax} < tmin {rec.tmin}")
        if rec.prcp is not None and rec.prcp < 0:
            raise ValidationError(f"line {lineno}: negative precipitation {rec.prcp}")
        out.append(rec)
    return out


_GRID_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


def parse_grid(text: str) -> Grid:
    lines = text.splitlines()
    header = {}
    for lineno, line in enumerate(lines[: len(_GRID_KEYS)], start=1):
        parts = line.split()
        if len(parts) != 2 or parts[0].lower() != _GRID_KEYS[lineno - 1]:
            raise ParseError(f"line {lineno}: expected '{_GRID_KEYS[lineno - 1]} <value>'")
        header[parts[0].lower()] = parts[1]
    if len(header) != len(_GRID_KEYS):
        raise ParseError("grid header is incomplete")
    ncols = _int(header["ncols"], 1, "ncols")
    nrows = _int(header["nrows"], 2, "nrows")
    if ncols < 1 or nrows < 1:
        raise ValidationError("grid must have at least one row and column")
    tokens = " ".join(lines[len(_GRID_KEYS):]).split()
    expected = ncols * nrows
    if len(tokens) != expected:
        raise ParseError(f"grid body: expected {expected} values, found {len(tokens)}")
    try:
        values = np.array([float(t) for t in tokens], dtype=np.float64).reshape(nrows, ncols)
    except ValueError as exc:
        raise ParseError(f"grid body: {exc}") from None
    return Grid(
        ncols=ncols,
        nrows=nrows,
        origin_x=_float(header["xllcorner"], 3, "xllcorner"),
        origin_y=_float(header["yllcorner"], 4, "yllcorner"),
        cellsize=_float(header["cellsize"], 5, "cellsize"),
        nodata=float(header["nodata_value"]),
        values=values,
    )


def _fmt(x: float | None) -> str:
    if x is None:
        return ""
    return repr(float(x))


def serialize_phenology_csv(obs: list[StationObservation]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PHENOLOGY_HEADER)
    for o in obs:
        w.writerow([o.station_id, _fmt(o.lat), _fmt(o.lon), o.crop, o.bbch, o.date.isoformat(), o.qb, o.qn])
    return buf.getvalue()


def serialize_climate_csv(records: list[ClimateRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CLIMATE_HEADER)
    for r in records:
        w.writerow(
            [r.station_id, _fmt(r.lat), _fmt(r.lon), r.date.isoformat(), _fmt(r.tmax), _fmt(r.tmin), _fmt(r.prcp)]
        )
    return buf.getvalue()


def serialize_grid(grid: Grid) -> str:
    head = [
        f"ncols {grid.ncols}",
        f"nrows {grid.nrows}",
        f"xllcorner {grid.origin_x!r}",
        f"yllcorner {grid.origin_y!r}",
        f"cellsize {grid.cellsize!r}",
        f"nodata_value {grid.nodata!r}",
    ]
    body = [" ".join(repr(float(v)) for v in row) for row in grid.values]
    return "\n".join(head + body) + "\n"


def clean_observations(obs: list[StationObservation]) -> list[StationObservation]:
    """Quality-filter phenology records and drop stages reported out of order.

    A record survives when ``qb == 1`` or ``qn == 10``.  Repeated reports of
    one stage in one season keep the earliest date.  Within a
    (station, crop, season) group, a record is removed if some lower BBCH
    code of the same group is dated on or after it.
    """
    passed = [o for o in obs if o.qb == 1 or o.qn == 10]

    def group_key(o):
        return (o.station_id, o.crop, o.season)

    passed.sort(key=lambda o: (group_key(o), o.bbch, o.date))
    out = []
    for _, members in groupby(passed, key=group_key):
        earliest = {}
        for o in members:
            earliest.setdefault(o.bbch, o)
        recs = list(earliest.values())
        for o in recs:
            if all(p.date < o.date for p in recs if p.bbch < o.bbch):
                out.append(o)
    out.sort(key=lambda o: (o.station_id, o.crop, o.date, o.bbch))
    return out


RADAR_COLUMNS = ("VV", "VH")
OPTICAL_COLUMNS = ("cloud_prob", "B", "G", "R", "NIR", "SWIR1", "SWIR2", "re1", "re2", "re3", "re4")


@dataclass
class AcquisitionSeries:
    """Irregular field-median acquisitions of one station and crop."""

    station_id: str
    crop: str
    days: np.ndarray  # proleptic ordinals, ascending
    values: dict[str, np.ndarray]


def parse_acquisitions_csv(text: str, columns: tuple[str, ...]) -> dict[tuple[str, str], AcquisitionSeries]:
    """Read ``station_id,crop,date,<columns...>`` rows, grouped by (station, crop).

    Empty cells become NaN.  Dates must be strictly increasing within a group.
    """
    header = ("station_id", "crop", "date", *columns)
    groups: dict[tuple[str, str], tuple[list, dict]] = {}
    for lineno, row in _rows(text, header):
        sid, crop = row[0], row[1]
        if crop not in CROPS:
            raise ValidationError(f"line {lineno}: unknown crop {crop!r}")
        day = _date(row[2], lineno).toordinal()
        days, vals = groups.setdefault((sid, crop), ([], {c: [] for c in columns}))
        if days and day <= days[-1]:
            raise ValidationError(f"line {lineno}: dates of {sid}/{crop} are not strictly increasing")
        days.append(day)
        for c, v in zip(columns, row[3:]):
            x = _optional_float(v, lineno, c)
            vals[c].append(math.nan if x is None else x)
    return {
        k: AcquisitionSeries(k[0], k[1], np.asarray(d, dtype=np.int64),
                             {c: np.asarray(v, dtype=np.float64) for c, v in vals.items()})
        for k, (d, vals) in groups.items()
    }


def serialize_acquisitions_csv(series: list[AcquisitionSeries], columns: tuple[str, ...]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("station_id", "crop", "date", *columns))
    for s in series:
        for i, day in enumerate(s.days):
            vals = [s.values[c][i] for c in columns]
            w.writerow([s.station_id, s.crop, dt.date.fromordinal(int(day)).isoformat(),
                        *("" if math.isnan(v) else repr(float(v)) for v in vals)])
    return buf.getvalue()
