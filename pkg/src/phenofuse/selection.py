"""Grouped feature search with joint hyperparameter tuning, and feature importance.

Each inner fold runs one TPE study over a conditional space: a boolean per
feature group, a boolean per feature that is only active while its group is
on, and the five tuned boosting hyperparameters.  The winning feature sets
and losses of all folds feed the importance score ``I_f = N_f / L_f``.
"""
from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import BACKGROUND, LabeledDataset
from .evaluate import decode_onsets, tuning_loss
from .features import FEATURE_GROUPS, FEATURE_NAMES
from .gbdt import GbdtHyperparams, GbdtModel, fit_gbdt
from .tpe import CategoricalParam, IntParam, StudyState, tpe_optimize

logger = logging.getLogger(__name__)

HYPERPARAM_SPACE = {
    "n_estimators": IntParam(50, 1000, log=True),
    "num_leaves": IntParam(7, 255, log=True),
    "min_data_in_bin": IntParam(1, 64, log=True),
    "min_child_samples": IntParam(5, 200, log=True),
    "early_stopping_round": IntParam(10, 50),
}

PAPER_STANDARD = (
    "latitude", "longitude", "altitude", "slope", "aspect",
    "DTR", "GDD_sum", "GDD", "prcp_sum", "VV", "PR", "RVI",
)
PRESETS = {"paper-standard": PAPER_STANDARD}

_ON_OFF = (False, True)


def group_key(group: str) -> str:
    return f"group:{group}"


def feature_key(feature: str) -> str:
    return f"feature:{feature}"


def feature_search_space(groups=FEATURE_GROUPS, hyperparams: dict | None = None) -> dict:
    space: dict = {}
    for g, members in groups:
        space[group_key(g)] = CategoricalParam(_ON_OFF)
        for f in members:
            space[feature_key(f)] = CategoricalParam(_ON_OFF, condition=(group_key(g), True))
    space.update(HYPERPARAM_SPACE if hyperparams is None else hyperparams)
    return space


def selected_features(params: dict, fixed: Sequence[str] | None = None) -> tuple[str, ...]:
    """Features switched on in ``params`` (canonical order), or ``fixed`` when given."""
    if fixed is not None:
        return tuple(fixed)
    return tuple(f for f in FEATURE_NAMES if params.get(feature_key(f)) is True)


def resolve_preset(preset) -> tuple[str, ...] | None:
    """None for a search, otherwise the fixed feature list."""
    if preset is None or preset == "search":
        return None
    if isinstance(preset, str):
        if preset not in PRESETS:
            raise ValueError(f"unknown feature preset {preset!r}")
        return PRESETS[preset]
    unknown = [f for f in preset if f not in FEATURE_NAMES]
    if unknown or not preset:
        raise ValueError(f"feature list must name known features, got unknown {unknown}")
    return tuple(preset)


def study_seed(seed: int, crop: str, *path: int) -> int:
    """Independent, reproducible seed per (run seed, crop, fold path)."""
    ss = np.random.SeedSequence([seed, zlib.crc32(crop.encode()), *path])
    return int(ss.generate_state(1)[0])


def validation_onsets(model: GbdtModel, ds: LabeledDataset, reject_background: bool):
    """Yield (key, bbch, observed_doy, predicted_doy) for every observed stage in ``ds``."""
    P = model.predict_proba(ds.X)
    for key, rows in ds.group_rows().items():
        rows = rows[np.argsort(ds.doys[rows], kind="stable")]
        labels = ds.labels[rows]
        stages = sorted({int(s) for s in labels if s != BACKGROUND})
        if not stages:
            continue
        pred = decode_onsets(P[rows], model.classes, ds.doys[rows], stages, reject_background)
        for s in stages:
            obs = int(ds.doys[rows][np.flatnonzero(labels == s)[0]])
            yield key, s, obs, pred[s]


def fold_loss(model: GbdtModel, valid: LabeledDataset) -> float:
    """Pooled tuning loss over all stages, using each stage's peak day."""
    pairs = [(o, p) for _, _, o, p in validation_onsets(model, valid, reject_background=False) if p is not None]
    if not pairs:
        return math.inf
    obs, pred = zip(*pairs)
    return tuning_loss(obs, pred)


@dataclass
class FoldResult:
    """Winner of one inner-fold study."""

    fold: int
    features: tuple[str, ...]
    loss: float
    params: dict
    model: GbdtModel | None
    train_keys: frozenset = field(default_factory=frozenset)
    study: StudyState | None = None


def run_fold_study(train: LabeledDataset, valid: LabeledDataset, space: dict, n_trials: int, seed: int,
                   fixed_features: Sequence[str] | None = None, fold: int = 0) -> FoldResult:
    best: dict = {}

    def objective(params):
        feats = selected_features(params, fixed_features)
        if not feats:
            return math.inf
        model = fit_gbdt(train, valid, GbdtHyperparams.from_params(params), feats)
        return fold_loss(model, valid), model

    def keep(trial, model):
        if trial.state == "complete" and (not best or trial.loss < best["loss"]):
            best.update(loss=trial.loss, model=model)

    params, loss, study = tpe_optimize(objective, space, n_trials, seed=seed, callback=keep)
    keys = frozenset(train.group_keys()) | frozenset(valid.group_keys())
    if params is None:
        logger.warning("inner fold %d: every trial failed", fold)
        return FoldResult(fold, (), math.inf, {}, None, keys, study)
    return FoldResult(fold, selected_features(params, fixed_features), loss, params, best["model"], keys, study)


def select_feature_groups(dataset: LabeledDataset, folds: Sequence[np.ndarray], space: dict | None = None,
                          n_trials: int = 50, seed: int = 0, fixed_features: Sequence[str] | None = None,
                          fold_seeds: Sequence[int] | None = None) -> list[FoldResult]:
    """One study per fold; ``folds`` are validation row sets partitioning ``dataset``.

    With ``fixed_features`` only the hyperparameters are searched (``space``
    then defaults to the hyperparameter space alone).
    """
    if space is None:
        space = dict(HYPERPARAM_SPACE) if fixed_features is not None else feature_search_space()
    all_rows = np.arange(len(dataset))
    results = []
    for k, valid_rows in enumerate(folds):
        train_rows = np.setdiff1d(all_rows, valid_rows)
        s = fold_seeds[k] if fold_seeds is not None else study_seed(seed, dataset.crop, k)
        res = run_fold_study(dataset.subset(train_rows), dataset.subset(valid_rows), space, n_trials, s,
                             fixed_features, fold=k)
        logger.info("%s inner fold %d: loss %.4f with %d features", dataset.crop, k, res.loss, len(res.features))
        results.append(res)
    return results


@dataclass(frozen=True)
class ImportanceRow:
    feature: str
    n_folds: int
    mean_loss: float
    importance: float


def feature_importance(results: Sequence) -> list[ImportanceRow]:
    """Rank features by ``I_f = N_f / L_f``; ties go to higher ``N_f``, then name.

    ``results`` holds objects with ``features`` and ``loss`` (or plain
    ``(features, loss)`` pairs).  Folds with a non-finite loss are ignored.
    """
    if not results:
        raise ValueError("feature importance needs at least one fold result")
    counts: dict[str, int] = {}
    losses: dict[str, float] = {}
    for r in results:
        feats, loss = (r.features, r.loss) if hasattr(r, "features") else r
        if not math.isfinite(loss):
            continue
        for f in set(feats):
            counts[f] = counts.get(f, 0) + 1
            losses[f] = losses.get(f, 0.0) + loss
    rows = []
    for f, n in counts.items():
        mean = losses[f] / n
        imp = math.inf if mean == 0 else n / mean
        rows.append(ImportanceRow(f, n, mean, imp))
    rows.sort(key=lambda r: (-r.importance, -r.n_folds, r.feature))
    return rows


def standardize_feature_set(tables: dict[str, Sequence[ImportanceRow]], m: int = len(PAPER_STANDARD)) -> tuple[str, ...]:
    """Top-``m`` features by mean importance across crops (absent counts as 0)."""
    if not tables:
        raise ValueError("need at least one crop table")
    universe = sorted({r.feature for rows in tables.values() for r in rows})
    score = {f: 0.0 for f in universe}
    total_n = {f: 0 for f in universe}
    for rows in tables.values():
        for r in rows:
            score[r.feature] += r.importance / len(tables)
            total_n[r.feature] += r.n_folds
    ranked = sorted(universe, key=lambda f: (-score[f], -total_n[f], f))
    return tuple(ranked[:m])
