"""Nested cross-validation over station-seasons with ensemble test predictions."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import BACKGROUND, FoldSplit, LabeledDataset, kfold_split
from .evaluate import OnsetPrediction, decode_onsets, ensemble_predict
from .selection import FoldResult, select_feature_groups, study_seed

logger = logging.getLogger(__name__)


@dataclass
class OuterFoldResult:
    fold: int
    test_keys: list[tuple[str, int]]
    inner: list[FoldResult]
    onsets: list[OnsetPrediction] = field(default_factory=list)

    @property
    def models(self):
        return [r.model for r in self.inner if r.model is not None]


@dataclass
class NestedCVResult:
    crop: str
    keys: list[tuple[str, int]]
    split: FoldSplit
    outer: list[OuterFoldResult]

    @property
    def n_models(self) -> int:
        return sum(len(o.models) for o in self.outer)

    @property
    def onsets(self) -> list[OnsetPrediction]:
        return [o for fold in self.outer for o in fold.onsets]

    @property
    def inner_results(self) -> list[FoldResult]:
        return [r for fold in self.outer for r in fold.inner]


def _rows_for(keys: Sequence[tuple[str, int]], rows_by_key: dict) -> tuple[np.ndarray, dict]:
    """Concatenated rows for ``keys`` plus each key's positions within that concatenation."""
    rows, pos, off = [], {}, 0
    for k in keys:
        r = rows_by_key[k]
        rows.append(r)
        pos[k] = np.arange(off, off + len(r))
        off += len(r)
    return (np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)), pos


def predict_onsets(models, ds: LabeledDataset, classes, reject_background: bool = True) -> list[OnsetPrediction]:
    """Ensemble-decoded onsets for every observed stage of every station-season in ``ds``."""
    P = ensemble_predict(models, ds.X, classes=classes)
    out = []
    for (sid, season), rows in sorted(ds.group_rows().items()):
        rows = rows[np.argsort(ds.doys[rows], kind="stable")]
        labels = ds.labels[rows]
        stages = sorted({int(s) for s in labels if s != BACKGROUND})
        if not stages:
            continue
        pred = decode_onsets(P[rows], classes, ds.doys[rows], stages, reject_background)
        for s in stages:
            obs = int(ds.doys[rows][np.flatnonzero(labels == s)[0]])
            out.append(OnsetPrediction(ds.crop, sid, season, s, pred[s], obs))
    return out


def nested_cv(dataset: LabeledDataset, space: dict | None = None, seed: int = 0, cv_outer: int = 10,
              cv_inner: int = 10, n_trials: int = 50, fixed_features: Sequence[str] | None = None,
              outer_folds: Sequence[int] | None = None) -> NestedCVResult:
    """Outer folds test, inner folds tune; the fold unit is the station-season.

    Every inner fold contributes its best-trial model to the ensemble that
    predicts the outer test fold.  ``outer_folds`` restricts which outer
    folds are run (all by default).
    """
    keys = sorted(dataset.group_keys())
    if len(keys) < cv_outer:
        raise ValueError(f"{len(keys)} station-seasons cannot form {cv_outer} outer folds")
    split = kfold_split(len(keys), cv_outer, seed, cv_inner)
    rows_by_key = dataset.group_rows()
    classes = [int(c) for c in dataset.classes]
    results = []
    for i in range(cv_outer) if outer_folds is None else outer_folds:
        train_keys = [keys[j] for j in split.outer_train(i)]
        test_keys = [keys[j] for j in split.outer[i]]
        train_rows, pos = _rows_for(train_keys, rows_by_key)
        outer_train = dataset.subset(train_rows)
        inner_folds = [np.concatenate([pos[keys[j]] for j in fam]) for fam in split.inner[i]]
        seeds = [study_seed(seed, dataset.crop, i, j) for j in range(cv_inner)]
        inner = select_feature_groups(outer_train, inner_folds, space, n_trials, seed,
                                      fixed_features=fixed_features, fold_seeds=seeds)
        fold = OuterFoldResult(i, test_keys, inner)
        if not fold.models:
            raise RuntimeError(f"{dataset.crop} outer fold {i}: no inner study produced a model")
        test_rows, _ = _rows_for(test_keys, rows_by_key)
        fold.onsets = predict_onsets(fold.models, dataset.subset(test_rows), classes)
        logger.info("%s outer fold %d: %d models, %d onsets", dataset.crop, i, len(fold.models), len(fold.onsets))
        results.append(fold)
    return NestedCVResult(dataset.crop, keys, split, results)
