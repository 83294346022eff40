"""Per-day labeled samples, class weights and (nested) fold splits."""
from __future__ import annotations

import csv
import datetime as dt
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .features import FEATURE_NAMES
from .ingest import StationObservation

logger = logging.getLogger(__name__)

BACKGROUND = -1


def season_doy(date: dt.date, season: int) -> int:
    """Day of year counted from 1 January of the harvest year (autumn days are <= 0)."""
    return (date - dt.date(season, 1, 1)).days + 1


def doy_to_date(doy: int, season: int) -> dt.date:
    return dt.date(season, 1, 1) + dt.timedelta(days=int(doy) - 1)


@dataclass
class LabeledDataset:
    """Column-oriented samples: one row per station-season day."""

    crop: str
    X: np.ndarray
    labels: np.ndarray
    station_ids: np.ndarray
    seasons: np.ndarray
    doys: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES
    class_weights: dict[int, float] = field(default_factory=dict)
    station_coords: dict[str, tuple[float, float]] = field(default_factory=dict)
    n_skipped: int = 0

    def __post_init__(self):
        n = len(self.labels)
        for name in ("X", "station_ids", "seasons", "doys"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has {len(getattr(self, name))} rows, expected {n}")
        if self.X.ndim != 2 or self.X.shape[1] != len(self.feature_names):
            raise ValueError("feature matrix does not match feature names")
        if not self.class_weights and n:
            self.class_weights = compute_class_weights(self.labels)

    def __len__(self):
        return len(self.labels)

    @property
    def sample_weights(self) -> np.ndarray:
        return np.array([self.class_weights[int(c)] for c in self.labels], dtype=np.float64)

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    def group_keys(self) -> list[tuple[str, int]]:
        """Distinct (station, season) keys in first-appearance order."""
        seen = {}
        for s, y in zip(self.station_ids, self.seasons):
            seen.setdefault((str(s), int(y)), None)
        return list(seen)

    def group_rows(self) -> dict[tuple[str, int], np.ndarray]:
        keys = [(str(s), int(y)) for s, y in zip(self.station_ids, self.seasons)]
        out: dict[tuple[str, int], list[int]] = {}
        for i, k in enumerate(keys):
            out.setdefault(k, []).append(i)
        return {k: np.asarray(v) for k, v in out.items()}

    def subset(self, rows) -> "LabeledDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return LabeledDataset(
            crop=self.crop,
            X=self.X[rows],
            labels=self.labels[rows],
            station_ids=self.station_ids[rows],
            seasons=self.seasons[rows],
            doys=self.doys[rows],
            feature_names=self.feature_names,
            station_coords=self.station_coords,
        )


def assemble_labeled_dataset(
    obs: list[StationObservation],
    daily_features: dict[tuple[str, int], tuple[dt.date, np.ndarray]],
    crop: str,
) -> LabeledDataset:
    """Label every day of every station-season window.

    ``daily_features`` maps ``(station_id, season)`` to ``(first_day, X)``
    with one feature row per consecutive day.  Observed stage days carry
    their BBCH code, all other days :data:`BACKGROUND`.  Observations outside
    the window of their station-season are skipped and counted.
    """
    by_group: dict[tuple[str, int], dict[int, int]] = {}
    coords = {}
    skipped = 0
    for o in obs:
        if o.crop != crop:
            continue
        key = (o.station_id, o.season)
        coords[o.station_id] = (o.lat, o.lon)
        if key not in daily_features:
            skipped += 1
            continue
        start, X = daily_features[key]
        i = (o.date - start).days
        if not 0 <= i < len(X):
            skipped += 1
            continue
        stages = by_group.setdefault(key, {})
        if i in stages and stages[i] != o.bbch:
            raise ValueError(f"coincident stages {stages[i]} and {o.bbch} at {key} on {o.date}")
        stages[i] = o.bbch
    if skipped:
        logger.warning("%d observations outside feature coverage were skipped", skipped)

    blocks, labels, sids, seasons, doys = [], [], [], [], []
    for key in sorted(daily_features):
        start, X = daily_features[key]
        n = len(X)
        lab = np.full(n, BACKGROUND, dtype=np.int64)
        for i, stage in by_group.get(key, {}).items():
            lab[i] = stage
        blocks.append(np.asarray(X, dtype=np.float64))
        labels.append(lab)
        sids.append(np.full(n, key[0], dtype=object))
        seasons.append(np.full(n, key[1], dtype=np.int64))
        first = season_doy(start, key[1])
        doys.append(np.arange(first, first + n, dtype=np.int64))
    if not blocks:
        empty = np.zeros(0, dtype=np.int64)
        return LabeledDataset(crop, np.zeros((0, len(FEATURE_NAMES))), empty, np.zeros(0, dtype=object),
                              empty, empty, station_coords=coords, n_skipped=skipped)
    return LabeledDataset(
        crop=crop,
        X=np.vstack(blocks),
        labels=np.concatenate(labels),
        station_ids=np.concatenate(sids),
        seasons=np.concatenate(seasons),
        doys=np.concatenate(doys),
        station_coords=coords,
        n_skipped=skipped,
    )


def compute_class_weights(labels) -> dict[int, float]:
    """Balanced inverse-frequency weights ``N / (K * n_c)``."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("class weights need at least one sample")
    classes, counts = np.unique(labels, return_counts=True)
    n, k = len(labels), len(classes)
    return {int(c): n / (k * int(m)) for c, m in zip(classes, counts)}


@dataclass(frozen=True)
class FoldSplit:
    outer: list[np.ndarray]
    inner: list[list[np.ndarray]]
    seed: int

    def outer_train(self, i: int) -> np.ndarray:
        return np.sort(np.concatenate([f for j, f in enumerate(self.outer) if j != i]))


def _chunks(indices: np.ndarray, k: int, seed_seq) -> list[np.ndarray]:
    rng = np.random.default_rng(seed_seq)
    perm = indices[rng.permutation(len(indices))]
    return [np.sort(c) for c in np.array_split(perm, k)]


def kfold_split(n: int, k: int, seed: int, inner_k: int | None = None) -> FoldSplit:
    """Seeded shuffle into ``k`` near-equal folds, plus inner folds of each outer training set.

    Fold ``i`` of ``n`` items has ``n // k + (i < n % k)`` members.  Inner
    families are seeded from ``(seed, outer index)``.
    """
    inner_k = k if inner_k is None else inner_k
    if n < k:
        raise ValueError(f"cannot split {n} items into {k} folds")
    outer = _chunks(np.arange(n), k, np.random.SeedSequence([seed]))
    inner = []
    for i in range(k):
        train = np.sort(np.concatenate([f for j, f in enumerate(outer) if j != i]))
        if len(train) < inner_k:
            raise ValueError(f"outer training set of {len(train)} items cannot form {inner_k} inner folds")
        inner.append(_chunks(train, inner_k, np.random.SeedSequence([seed, i])))
    return FoldSplit(outer, inner, seed)


def dataset_to_csv(ds: LabeledDataset) -> str:
    """One row per sample: keys, day of year, the 43 features, label."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["crop", "station_id", "lat", "lon", "season", "doy", *ds.feature_names, "label"])
    for i in range(len(ds)):
        sid = str(ds.station_ids[i])
        lat, lon = ds.station_coords.get(sid, (float("nan"), float("nan")))
        w.writerow(
            [ds.crop, sid, repr(float(lat)), repr(float(lon)), int(ds.seasons[i]), int(ds.doys[i])]
            + ["" if np.isnan(v) else repr(float(v)) for v in ds.X[i]]
            + [int(ds.labels[i])]
        )
    return buf.getvalue()


def dataset_from_csv(text: str) -> LabeledDataset:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    feats = tuple(header[6:-1])
    rows = list(reader)
    if not rows:
        raise ValueError("dataset file has no rows")
    crop = rows[0][0]
    X = np.array([[float(v) if v else np.nan for v in r[6:-1]] for r in rows], dtype=np.float64)
    coords = {r[1]: (float(r[2]), float(r[3])) for r in rows}
    return LabeledDataset(
        crop=crop,
        X=X,
        labels=np.array([int(r[-1]) for r in rows], dtype=np.int64),
        station_ids=np.array([r[1] for r in rows], dtype=object),
        seasons=np.array([int(r[4]) for r in rows], dtype=np.int64),
        doys=np.array([int(r[5]) for r in rows], dtype=np.int64),
        feature_names=feats,
        station_coords=coords,
    )
