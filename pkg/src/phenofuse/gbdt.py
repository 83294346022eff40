"""Histogram gradient-boosted trees for multiclass (softmax) classification.

Leaf-wise growth as in LightGBM: every round adds one regression tree per
class, fitted by Newton steps on the weighted cross-entropy; training
stops early once the weighted validation log-loss has not improved for
``early_stopping_round`` rounds, and the model keeps the best prefix.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _gbdt_kernels as K

FORMAT = "phenofuse-gbdt"
FORMAT_VERSION = 1
MIN_SUM_HESSIAN = 1e-3
_EPS = 1e-15


@dataclass(frozen=True)
class GbdtHyperparams:
    n_estimators: int = 100
    num_leaves: int = 31
    min_data_in_bin: int = 3
    min_child_samples: int = 20
    early_stopping_round: int = 10
    learning_rate: float = 0.1
    max_bins: int = 255

    def __post_init__(self):
        for name in ("n_estimators", "num_leaves", "min_data_in_bin", "min_child_samples", "max_bins"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.early_stopping_round < 0:
            raise ValueError("early_stopping_round must be >= 0")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.max_bins > K.MISSING_BIN:
            raise ValueError(f"max_bins is limited to {K.MISSING_BIN}")
        if self.num_leaves < 2:
            raise ValueError("num_leaves must be >= 2")

    @classmethod
    def from_params(cls, params: dict) -> "GbdtHyperparams":
        names = cls.__dataclass_fields__
        return cls(**{k: v for k, v in params.items() if k in names})


@dataclass
class Tree:
    feature: np.ndarray  # int32, -1 for leaves; column index into the full feature matrix
    threshold: np.ndarray  # float64, go left when x <= threshold
    left: np.ndarray
    right: np.ndarray
    default_left: np.ndarray  # where missing values go
    value: np.ndarray

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "default_left": self.default_left.astype(bool).tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int32),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int32),
            right=np.asarray(d["right"], dtype=np.int32),
            default_left=np.asarray(d["default_left"], dtype=np.bool_),
            value=np.asarray(d["value"], dtype=np.float64),
        )


@dataclass
class GbdtModel:
    classes: list[int]
    n_features: int
    features: list[int]
    bin_edges: dict[int, np.ndarray]
    trees: list[list[Tree]]  # rounds x classes, already cut at best_iteration
    best_iteration: int
    hyperparams: GbdtHyperparams
    train_loss: list[float] = field(default_factory=list)
    valid_loss: list[float] = field(default_factory=list)
    rounds_trained: int = 0

    def __post_init__(self):
        self._packed = None

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def _pack(self):
        if self._packed is None:
            flat = [(k, t) for rnd in self.trees for k, t in enumerate(rnd)]
            sizes = [len(t.feature) for _, t in flat]
            offsets = np.zeros(len(flat) + 1, dtype=np.int64)
            offsets[1:] = np.cumsum(sizes)
            cat = lambda name, dtype: (np.concatenate([getattr(t, name) for _, t in flat]).astype(dtype)
                                       if flat else np.zeros(0, dtype))
            self._packed = (
                offsets,
                np.array([k for k, _ in flat], dtype=np.int64),
                cat("feature", np.int32),
                cat("threshold", np.float64),
                cat("left", np.int32),
                cat("right", np.int32),
                cat("default_left", np.bool_),
                cat("value", np.float64),
            )
        return self._packed

    def raw_scores(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        out = np.zeros((X.shape[0], self.n_classes))
        if self.n_classes > 1 and self.trees:
            K.predict_packed(X, *self._pack(), out)
        return out

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.raw_scores(X))

    def predict(self, X) -> np.ndarray:
        return np.asarray(self.classes)[np.argmax(self.predict_proba(X), axis=1)]

    def to_json(self) -> str:
        doc = {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "classes": [int(c) for c in self.classes],
            "n_features": self.n_features,
            "features": [int(f) for f in self.features],
            "bin_edges": {str(f): e.tolist() for f, e in self.bin_edges.items()},
            "best_iteration": self.best_iteration,
            "rounds_trained": self.rounds_trained,
            "hyperparams": asdict(self.hyperparams),
            "train_loss": self.train_loss,
            "valid_loss": self.valid_loss,
            "trees": [[t.to_dict() for t in rnd] for rnd in self.trees],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GbdtModel":
        doc = json.loads(text)
        if doc.get("format") != FORMAT or doc.get("version") != FORMAT_VERSION:
            raise ValueError("not a supported model document")
        return cls(
            classes=list(doc["classes"]),
            n_features=doc["n_features"],
            features=list(doc["features"]),
            bin_edges={int(f): np.asarray(e, dtype=np.float64) for f, e in doc["bin_edges"].items()},
            trees=[[Tree.from_dict(t) for t in rnd] for rnd in doc["trees"]],
            best_iteration=doc["best_iteration"],
            hyperparams=GbdtHyperparams(**doc["hyperparams"]),
            train_loss=list(doc["train_loss"]),
            valid_loss=list(doc["valid_loss"]),
            rounds_trained=doc["rounds_trained"],
        )


def softmax(scores: np.ndarray) -> np.ndarray:
    return K.softmax_rows(np.ascontiguousarray(scores, dtype=np.float64))


def weighted_log_loss(P: np.ndarray, y_idx: np.ndarray, w: np.ndarray) -> float:
    """Mean of ``-w log p(true class)``; rows with an unknown class (index -1) count as p = 0."""
    p = np.where(y_idx >= 0, P[np.arange(len(y_idx)), np.maximum(y_idx, 0)], 0.0)
    return float(np.dot(w, -np.log(np.maximum(p, _EPS))) / w.sum())


def _class_index(classes: np.ndarray, y: np.ndarray) -> np.ndarray:
    pos = np.searchsorted(classes, y)
    pos = np.minimum(pos, len(classes) - 1)
    return np.where(classes[pos] == y, pos, -1)


def fit_arrays(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray | None = None,
    X_valid: np.ndarray | None = None,
    y_valid: np.ndarray | None = None,
    w_valid: np.ndarray | None = None,
    hp: GbdtHyperparams = GbdtHyperparams(),
    features=None,
) -> GbdtModel:
    """Fit on plain arrays; ``features`` restricts the columns the trees may split on."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    n, n_features = X.shape
    if n == 0:
        raise ValueError("empty training set")
    w = np.ones(n) if w is None else np.asarray(w, dtype=np.float64)
    feats = sorted(set(range(n_features) if features is None else (int(f) for f in features)))
    if not feats:
        raise ValueError("feature mask selects no features")
    if any(f < 0 or f >= n_features for f in feats):
        raise ValueError("feature mask index out of range")
    classes = np.unique(y)
    use_valid = X_valid is not None and y_valid is not None and len(y_valid) > 0
    if hp.early_stopping_round > 0 and not use_valid:
        raise ValueError("early stopping needs a non-empty validation set")

    edges = {f: K.bin_edges(np.ascontiguousarray(X[:, f]), hp.max_bins, hp.min_data_in_bin) for f in feats}
    model = GbdtModel(
        classes=[int(c) for c in classes],
        n_features=n_features,
        features=feats,
        bin_edges=edges,
        trees=[],
        best_iteration=0,
        hyperparams=hp,
    )
    if len(classes) == 1:
        return model

    Xb = np.empty((n, len(feats)), dtype=np.uint8)
    for j, f in enumerate(feats):
        K.apply_bins(np.ascontiguousarray(X[:, f]), edges[f], Xb, j)
    nbins = np.array([len(edges[f]) + 1 for f in feats], dtype=np.int64)
    n_classes = len(classes)
    y_idx = _class_index(classes, y)
    Y = np.zeros((n, n_classes))
    Y[np.arange(n), y_idx] = 1.0
    scores = np.zeros((n, n_classes))

    if use_valid:
        Xv = np.ascontiguousarray(np.asarray(X_valid, dtype=np.float64))
        yv_idx = _class_index(classes, np.asarray(y_valid))
        wv = np.ones(len(Xv)) if w_valid is None else np.asarray(w_valid, dtype=np.float64)
        valid_scores = np.zeros((len(Xv), n_classes))
        best_loss = weighted_log_loss(softmax(valid_scores), yv_idx, wv)
        model.valid_loss.append(best_loss)
    model.train_loss.append(weighted_log_loss(softmax(scores), y_idx, w))

    feats_arr = np.asarray(feats, dtype=np.int32)
    hist = np.zeros((hp.num_leaves + 1, len(feats), K.N_HIST, 3))
    best_iter = 0
    rounds = []
    for rnd in range(1, hp.n_estimators + 1):
        P = softmax(scores)
        trees = []
        for k in range(n_classes):
            g = (P[:, k] - Y[:, k]) * w
            h = np.maximum(P[:, k] * (1.0 - P[:, k]), _EPS) * w
            feat, tbin, left, right, dleft, value = K.grow_tree(
                Xb, nbins, g, h, hp.num_leaves, hp.min_child_samples, MIN_SUM_HESSIAN, hp.learning_rate, scores, k, hist
            )
            internal = feat >= 0
            orig = np.full(len(feat), -1, dtype=np.int32)
            orig[internal] = feats_arr[feat[internal]]
            thr = np.zeros(len(feat))
            for node in np.flatnonzero(internal):
                thr[node] = edges[int(orig[node])][tbin[node]]
            tree = Tree(orig, thr, left, right, dleft, value)
            trees.append(tree)
            if use_valid:
                K.predict_tree(Xv, tree.feature, tree.threshold, tree.left, tree.right,
                               tree.default_left, tree.value, valid_scores, k)
        rounds.append(trees)
        model.train_loss.append(weighted_log_loss(softmax(scores), y_idx, w))
        if use_valid:
            vl = weighted_log_loss(softmax(valid_scores), yv_idx, wv)
            model.valid_loss.append(vl)
            if vl < best_loss:
                best_loss = vl
                best_iter = rnd
            elif hp.early_stopping_round > 0 and rnd - best_iter >= hp.early_stopping_round:
                break
        else:
            best_iter = rnd
    model.rounds_trained = len(rounds)
    if not use_valid or hp.early_stopping_round == 0:
        best_iter = len(rounds)
    model.best_iteration = best_iter
    model.trees = rounds[:best_iter]
    return model


def fit_gbdt(train, valid, hp: GbdtHyperparams = GbdtHyperparams(), feature_mask=None) -> GbdtModel:
    """Fit on :class:`~phenofuse.dataset.LabeledDataset` objects with their class weights.

    ``feature_mask`` is a collection of feature names or column indices.
    """
    if len(train) == 0:
        raise ValueError("empty training set")
    features = None
    if feature_mask is not None:
        index = {name: i for i, name in enumerate(train.feature_names)}
        features = [index[f] if isinstance(f, str) else int(f) for f in feature_mask]
    if valid is None or len(valid) == 0:
        return fit_arrays(train.X, train.labels, train.sample_weights, hp=hp, features=features)
    return fit_arrays(
        train.X, train.labels, train.sample_weights,
        valid.X, valid.labels, valid.sample_weights,
        hp=hp, features=features,
    )


def predict_proba(model: GbdtModel, x) -> np.ndarray:
    """Class probabilities for one feature vector (1-D) or a matrix of them."""
    x = np.asarray(x, dtype=np.float64)
    P = model.predict_proba(x)
    return P[0] if x.ndim == 1 else P
