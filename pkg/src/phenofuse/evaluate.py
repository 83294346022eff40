"""Onset decoding, date metrics, ensembles and residual reports."""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .dataset import BACKGROUND

DEFAULT_TOLERANCE_DAYS = 6
DEFAULT_RESIDUAL_EDGES = (-15, -4, 4, 15)
R2_FLOOR = -10.0


def _pair(obs, pred, min_len: int = 1):
    y = np.asarray(obs, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    if y.shape != p.shape or y.ndim != 1:
        raise ValueError(f"length mismatch: {y.shape} observations vs {p.shape} predictions")
    if len(y) < min_len:
        raise ValueError(f"need at least {min_len} pairs, got {len(y)}")
    return y, p


def metric_r2(obs, pred) -> float:
    y, p = _pair(obs, pred, 2)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("zero variance in observations; R2 undefined")
    return 1.0 - float(np.sum((y - p) ** 2)) / ss_tot


def metric_mae(obs, pred) -> float:
    y, p = _pair(obs, pred, 1)
    return float(np.mean(np.abs(y - p)))


def objective_loss(obs, pred) -> float:
    """(1 - R2) * MAE, in days."""
    return (1.0 - metric_r2(obs, pred)) * metric_mae(obs, pred)


def within_tolerance_share(obs, pred, tol: float = DEFAULT_TOLERANCE_DAYS) -> float:
    y, p = _pair(obs, pred, 1)
    return float(np.mean(np.abs(p - y) <= tol))


def tuning_loss(obs, pred) -> float:
    """Objective for the searches; falls back to MAE when R2 is undefined."""
    y, _ = _pair(obs, pred, 1)
    if len(y) < 2 or np.all(y == y[0]):
        return metric_mae(obs, pred)
    return objective_loss(obs, pred)


def ensemble_predict(models: Sequence, X, classes=None) -> np.ndarray:
    """Mean of the members' class probabilities.

    Members must share one class list unless ``classes`` is given, in which
    case each member's columns are mapped into it (absent classes get 0).
    """
    if not models:
        raise ValueError("ensemble needs at least one model")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if classes is None:
        classes = np.asarray(models[0].classes)
        for m in models[1:]:
            if not np.array_equal(np.asarray(m.classes), classes):
                raise ValueError(f"class-list mismatch: {list(m.classes)} vs {list(classes)}")
    classes = np.asarray(classes)
    col = {int(c): j for j, c in enumerate(classes)}
    total = np.zeros((X.shape[0], len(classes)))
    for m in models:
        P = m.predict_proba(X)
        for j, c in enumerate(m.classes):
            if int(c) not in col:
                raise ValueError(f"model class {c} not in ensemble classes {list(classes)}")
            total[:, col[int(c)]] += P[:, j]
    return total / len(models)


def decode_onsets(daily_probs, classes, doys=None, stages: Iterable[int] | None = None,
                  reject_background: bool = True) -> dict[int, int | None]:
    """Predicted onset day per stage from per-day class probabilities.

    The onset of stage k is the day whose probability for k is highest
    (earliest day on ties).  With ``reject_background`` a stage whose peak
    probability is below the background probability on that same day is
    reported as None (not detected).
    """
    P = np.asarray(daily_probs, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] == 0:
        raise ValueError("empty decoding window")
    classes = [int(c) for c in classes]
    doys = np.arange(P.shape[0]) if doys is None else np.asarray(doys)
    bg = classes.index(BACKGROUND) if BACKGROUND in classes else None
    wanted = [c for c in classes if c != BACKGROUND] if stages is None else [int(s) for s in stages]
    out: dict[int, int | None] = {}
    for stage in wanted:
        if stage not in classes:
            out[stage] = None
            continue
        j = classes.index(stage)
        day = int(np.argmax(P[:, j]))
        if reject_background and bg is not None and P[day, j] < P[day, bg]:
            out[stage] = None
        else:
            out[stage] = int(doys[day])
    return out


@dataclass(frozen=True)
class OnsetPrediction:
    crop: str
    station_id: str
    season: int
    bbch: int
    predicted_doy: int | None
    observed_doy: int

    @property
    def detected(self) -> bool:
        return self.predicted_doy is not None

    @property
    def residual(self) -> int | None:
        return None if self.predicted_doy is None else self.predicted_doy - self.observed_doy


@dataclass(frozen=True)
class MetricsRecord:
    crop: str
    bbch: int | None  # None = all stages
    year: int | None  # None = all years
    n: int
    n_missed: int
    r2: float
    mae: float
    objective: float
    within6: float

    @property
    def scope(self) -> tuple:
        return (self.crop, "all" if self.bbch is None else self.bbch, "all" if self.year is None else self.year)


def _metrics(crop, bbch, year, group: list[OnsetPrediction], tol) -> MetricsRecord:
    hit = [o for o in group if o.detected]
    missed = len(group) - len(hit)
    obs = [o.observed_doy for o in hit]
    pred = [o.predicted_doy for o in hit]
    nan = float("nan")
    if not hit:
        return MetricsRecord(crop, bbch, year, 0, missed, nan, nan, nan, nan)
    mae = metric_mae(obs, pred)
    try:
        r2 = metric_r2(obs, pred)
    except ValueError:
        r2 = nan
    return MetricsRecord(crop, bbch, year, len(hit), missed, r2, mae, (1 - r2) * mae,
                         within_tolerance_share(obs, pred, tol))


def metrics_table(onsets: Sequence[OnsetPrediction], tol: float = DEFAULT_TOLERANCE_DAYS) -> list[MetricsRecord]:
    """Per crop: each stage over all years, all stages per year, and everything pooled."""
    out = []
    for crop in sorted({o.crop for o in onsets}):
        rows = [o for o in onsets if o.crop == crop]
        for stage in sorted({o.bbch for o in rows}):
            out.append(_metrics(crop, stage, None, [o for o in rows if o.bbch == stage], tol))
        for year in sorted({o.season for o in rows}):
            out.append(_metrics(crop, None, year, [o for o in rows if o.season == year], tol))
        out.append(_metrics(crop, None, None, rows, tol))
    return out


def stage_average(records: Sequence[MetricsRecord]) -> dict[str, float]:
    """Unweighted mean of per-stage (all-year) R2 and MAE over crops and stages."""
    per_stage = [r for r in records if r.bbch is not None and r.year is None and r.n > 0]
    r2 = [r.r2 for r in per_stage if math.isfinite(r.r2)]
    return {
        "mae": float(np.mean([r.mae for r in per_stage])) if per_stage else float("nan"),
        "r2": float(np.mean(r2)) if r2 else float("nan"),
        "n_stages": len(per_stage),
    }


def bin_labels(edges: Sequence[float]) -> list[str]:
    """Labels for the residual bins around the closed central bin."""
    edges = list(edges)
    if len(edges) < 2 or len(edges) % 2:
        raise ValueError("residual edges must be an even count, symmetric around a central bin")
    mid = len(edges) // 2 - 1
    labels = [f"<{edges[0]:g}"]
    for i in range(len(edges) - 1):
        a, b = edges[i], edges[i + 1]
        if i < mid:
            labels.append(f"[{a:g},{b:g})")
        elif i == mid:
            labels.append(f"[{a:g},{b:g}]")
        else:
            labels.append(f"({a:g},{b:g}]")
    labels.append(f">{edges[-1]:g}")
    return labels


def residual_bin(r: float, edges: Sequence[float]) -> int:
    """Index into :func:`bin_labels` for residual ``r``."""
    edges = list(edges)
    mid = len(edges) // 2 - 1
    lo, hi = edges[mid], edges[mid + 1]
    if lo <= r <= hi:
        return mid + 1
    if r < lo:
        for i in range(mid - 1, -1, -1):
            if r >= edges[i]:
                return i + 1
        return 0
    for i in range(mid + 1, len(edges) - 1):
        if r <= edges[i + 1]:
            return i + 1
    return len(edges)


_GROUP_KEYS = {"stage": lambda o: o.bbch, "year": lambda o: o.season, "station": lambda o: o.station_id}


def residual_report(onsets: Sequence[OnsetPrediction], edges=DEFAULT_RESIDUAL_EDGES,
                    group_by: str = "stage") -> pd.DataFrame:
    """Counts and percentages of detected residuals per bin, per crop and group."""
    if not onsets:
        raise ValueError("residual report needs at least one prediction")
    if group_by not in _GROUP_KEYS:
        raise ValueError(f"group_by must be one of {sorted(_GROUP_KEYS)}")
    labels = bin_labels(edges)
    key = _GROUP_KEYS[group_by]
    groups: dict[tuple, list[int]] = {}
    for o in onsets:
        if o.detected:
            groups.setdefault((o.crop, key(o)), []).append(o.residual)
    rows = []
    for (crop, g), res in sorted(groups.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))):
        counts = np.zeros(len(labels), dtype=np.int64)
        for r in res:
            counts[residual_bin(r, edges)] += 1
        row = {"crop": crop, group_by: g, "n": len(res)}
        for lab, c in zip(labels, counts):
            row[f"n {lab}"] = int(c)
        for lab, c in zip(labels, counts):
            row[f"pct {lab}"] = 100.0 * c / len(res)
        rows.append(row)
    return pd.DataFrame(rows)


def per_year_mae_delta(onsets: Sequence[OnsetPrediction]) -> pd.DataFrame:
    """Per crop and stage: MAE in each year minus the MAE over all years."""
    df = onsets_frame([o for o in onsets if o.detected])
    if df.empty:
        return pd.DataFrame(columns=["crop", "bbch", "year", "n", "mae", "mae_all", "delta"])
    df["abs_residual"] = df["residual"].abs().astype(float)
    overall = df.groupby(["crop", "bbch"])["abs_residual"].mean().rename("mae_all")
    yearly = df.groupby(["crop", "bbch", "season"])["abs_residual"].agg(["size", "mean"])
    yearly = yearly.rename(columns={"size": "n", "mean": "mae"}).reset_index()
    yearly = yearly.rename(columns={"season": "year"}).join(overall, on=["crop", "bbch"])
    yearly["delta"] = yearly["mae"] - yearly["mae_all"]
    return yearly[["crop", "bbch", "year", "n", "mae", "mae_all", "delta"]]


def onsets_frame(onsets: Sequence[OnsetPrediction]) -> pd.DataFrame:
    cols = ["crop", "station_id", "season", "bbch", "predicted_doy", "observed_doy", "residual"]
    rows = [(o.crop, o.station_id, o.season, o.bbch, o.predicted_doy, o.observed_doy, o.residual) for o in onsets]
    df = pd.DataFrame(rows, columns=cols)
    for c in ("predicted_doy", "residual"):
        df[c] = df[c].astype("Int64")
    return df


def metrics_frame(records: Sequence[MetricsRecord]) -> pd.DataFrame:
    rows = []
    for r in records:
        d = asdict(r)
        d["bbch"] = "all" if r.bbch is None else r.bbch
        d["year"] = "all" if r.year is None else r.year
        rows.append(d)
    return pd.DataFrame(rows, columns=[f for f in MetricsRecord.__dataclass_fields__])


def clamp_r2(r2: float) -> float:
    return r2 if not math.isfinite(r2) else max(R2_FLOOR, r2)


def summary_dict(records: Sequence[MetricsRecord]) -> dict:
    """Machine-readable digest; R2 below the floor is clamped here only."""
    out: dict = {"crops": {}}
    for r in records:
        if r.bbch is None and r.year is None:
            out["crops"][r.crop] = {"n": r.n, "n_missed": r.n_missed, "r2": _num(clamp_r2(r.r2)),
                                    "mae": _num(r.mae), "objective": _num(r.objective), "within6": _num(r.within6)}
    for r in records:
        if r.bbch is not None and r.year is None:
            out["crops"][r.crop].setdefault("stages", {})[str(r.bbch)] = {
                "n": r.n, "n_missed": r.n_missed, "r2": _num(clamp_r2(r.r2)), "mae": _num(r.mae),
                "within6": _num(r.within6)}
    avg = stage_average(records)
    out["stage_average"] = {"mae": _num(avg["mae"]), "r2": _num(clamp_r2(avg["r2"])), "n_stages": avg["n_stages"]}
    return out


def _num(x: float):
    return None if not math.isfinite(x) else round(float(x), 10)


def scatter_svg(onsets: Sequence[OnsetPrediction], band: float = 15.0, size: int = 480) -> str:
    """Observed vs predicted onset days with the 1:1 line and a +/-band guide."""
    pts = [(o.observed_doy, o.predicted_doy, o.bbch) for o in onsets if o.detected]
    pad = 40
    if pts:
        lo = min(min(a, b) for a, b, _ in pts) - band
        hi = max(max(a, b) for a, b, _ in pts) + band
    else:
        lo, hi = 0.0, 1.0
    scale = (size - 2 * pad) / (hi - lo)

    def sx(v):
        return pad + (v - lo) * scale

    def sy(v):
        return size - pad - (v - lo) * scale

    stages = sorted({s for _, _, s in pts})
    palette = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
               "#1f78b4", "#b2df8a", "#fb9a99", "#cab2d6", "#ff7f00"]
    colour = {s: palette[i % len(palette)] for i, s in enumerate(stages)}
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
             f'<line x1="{sx(lo):.2f}" y1="{sy(lo):.2f}" x2="{sx(hi):.2f}" y2="{sy(hi):.2f}" stroke="black"/>']
    for off in (-band, band):
        parts.append(f'<line x1="{sx(lo):.2f}" y1="{sy(lo + off):.2f}" x2="{sx(hi):.2f}" y2="{sy(hi + off):.2f}" '
                     'stroke="grey" stroke-dasharray="4 3"/>')
    for a, b, s in pts:
        parts.append(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="2.5" fill="{colour[s]}" fill-opacity="0.7"/>')
    for i, s in enumerate(stages):
        parts.append(f'<text x="{pad + 4}" y="{pad + 14 * (i + 1)}" font-size="11" fill="{colour[s]}">BBCH {s}</text>')
    parts.append(f'<text x="{size / 2:.0f}" y="{size - 8}" font-size="12" text-anchor="middle">observed DOY</text>')
    parts.append(f'<text x="12" y="{size / 2:.0f}" font-size="12" text-anchor="middle" '
                 f'transform="rotate(-90 12 {size / 2:.0f})">predicted DOY</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
