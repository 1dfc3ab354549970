"""Gradient-boosted decision trees for property eviction risk.

Second-order boosting on the logistic loss with exact greedy splits:

* gradients ``g = w * (p - y)`` and hessians ``h = w * p * (1 - p)`` where
  positives carry weight ``w = scale_pos_weight``;
* split gain ``0.5 * (GL^2/(HL+l2) + GR^2/(HR+l2) - G^2/(H+l2))`` and a split
  is kept only if the gain exceeds ``gamma``;
* leaf weight ``-G / (H + l2)``; predictions add ``learning_rate * leaf``.

Candidate thresholds are midpoints between consecutive distinct values, and a
row goes left when ``x < threshold``. Rows with NaN at prediction time follow
the child that held more training hessian mass.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .data.records import ValidationError

MODEL_FORMAT_VERSION = 1
RISK_THRESHOLDS = (0.05, 0.2, 0.8)


@dataclass(frozen=True)
class Hyperparams:
    max_depth: int = 3
    learning_rate: float = 0.05
    n_estimators: int = 100
    scale_pos_weight: float = 1.0
    gamma: float = 0.0
    l2_leaf_penalty: float = 1.0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValidationError("max_depth must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValidationError("learning_rate must lie in (0, 1]")
        if self.n_estimators < 1:
            raise ValidationError("n_estimators must be >= 1")
        if self.scale_pos_weight < 1:
            raise ValidationError("scale_pos_weight must be >= 1")
        if self.gamma < 0:
            raise ValidationError("gamma must be >= 0")
        if self.l2_leaf_penalty < 0:
            raise ValidationError("l2_leaf_penalty must be >= 0")

    @classmethod
    def from_dict(cls, data: dict) -> "Hyperparams":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValidationError(f"unknown hyperparameter(s): {', '.join(sorted(unknown))}")
        return cls(**data)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


# Default per-feature-set settings; a grid search can replace them.
DEFAULT_HYPERPARAMS = {
    "E": Hyperparams(max_depth=3, learning_rate=0.05, n_estimators=100, scale_pos_weight=3, gamma=0.05),
    "EN": Hyperparams(max_depth=3, learning_rate=0.05, n_estimators=100, scale_pos_weight=1, gamma=0.05),
    "ENO": Hyperparams(max_depth=3, learning_rate=0.05, n_estimators=100, scale_pos_weight=5, gamma=0.05),
}

DEFAULT_GRID = {
    "max_depth": [2, 3, 4, 5],
    "learning_rate": [0.01, 0.05, 0.1],
    "n_estimators": [50, 100, 500],
    "scale_pos_weight": [1, 3, 5],
    "gamma": [0, 0.05, 0.1],
}


def expand_grid(grid: dict) -> list[Hyperparams]:
    keys = sorted(grid)
    return [Hyperparams(**dict(zip(keys, combo))) for combo in itertools.product(*(grid[k] for k in keys))]


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _logit(p):
    return math.log(p / (1.0 - p))


def columns_fingerprint(columns) -> str:
    return hashlib.sha256("\x1f".join(columns).encode("utf-8")).hexdigest()[:16]


@dataclass
class Tree:
    """Flat array tree. Leaves have ``feature == -1``."""

    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    missing_left: list = field(default_factory=list)
    value: list = field(default_factory=list)

    def add_node(self) -> int:
        for lst, default in ((self.feature, -1), (self.threshold, 0.0), (self.left, -1), (self.right, -1),
                             (self.missing_left, True), (self.value, 0.0)):
            lst.append(default)
        return len(self.feature) - 1

    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))

        return walk(0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        missing_left = np.asarray(self.missing_left)
        rows = np.arange(X.shape[0])
        while True:
            f = feature[node]
            active = f >= 0
            if not active.any():
                break
            r = rows[active]
            n = node[active]
            x = X[r, f[active]]
            go_left = np.where(np.isnan(x), missing_left[n], x < threshold[n])
            node[active] = np.where(go_left, left[n], right[n])
        return np.asarray(self.value)[node]

    def used_features(self) -> set:
        return {f for f in self.feature if f >= 0}

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"feature": f, "threshold": t, "left": l, "right": r, "missing_left": m, "value": v}
                for f, t, l, r, m, v in zip(self.feature, self.threshold, self.left, self.right, self.missing_left, self.value)
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Tree":
        t = cls()
        for node in data["nodes"]:
            t.feature.append(int(node["feature"]))
            t.threshold.append(float(node["threshold"]))
            t.left.append(int(node["left"]))
            t.right.append(int(node["right"]))
            t.missing_left.append(bool(node["missing_left"]))
            t.value.append(float(node["value"]))
        return t


@dataclass
class GbdtModel:
    trees: list
    base_score: float
    learning_rate: float
    columns: tuple
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    train_loss: list = field(default_factory=list)

    @property
    def fingerprint(self) -> str:
        return columns_fingerprint(self.columns)

    def margin(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != len(self.columns):
            raise ValidationError(f"feature width {X.shape[1]} does not match model width {len(self.columns)}")
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out

    def predict_proba(self, X) -> np.ndarray:
        return _sigmoid(self.margin(X))

    def to_dict(self) -> dict:
        return {
            "format": "evictroute-gbdt",
            "version": MODEL_FORMAT_VERSION,
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "columns": list(self.columns),
            "columns_fingerprint": self.fingerprint,
            "hyperparams": self.hyperparams.as_dict(),
            "train_loss": self.train_loss,
            "trees": [t.to_dict() for t in self.trees],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "GbdtModel":
        if data.get("format") != "evictroute-gbdt" or data.get("version") != MODEL_FORMAT_VERSION:
            raise ValidationError("unsupported model file format or version")
        model = cls(
            trees=[Tree.from_dict(t) for t in data["trees"]],
            base_score=float(data["base_score"]),
            learning_rate=float(data["learning_rate"]),
            columns=tuple(data["columns"]),
            hyperparams=Hyperparams(**data["hyperparams"]),
            train_loss=list(data.get("train_loss", [])),
        )
        if model.fingerprint != data.get("columns_fingerprint"):
            raise ValidationError("column fingerprint does not match column list")
        return model

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "GbdtModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def predict(model: GbdtModel, features) -> float | np.ndarray:
    """Risk score(s) in (0, 1); a 1-D input returns a scalar."""
    arr = np.asarray(features, dtype=np.float64)
    scores = model.predict_proba(arr)
    return float(scores[0]) if arr.ndim == 1 else scores


class _TreeBuilder:
    def __init__(self, X, order, hyper):
        self.X = X
        self.order = order  # (n_features, n_rows) row indices sorted by each feature
        self.hyper = hyper

    def build(self, g, h) -> Tree:
        tree = Tree()
        root = tree.add_node()
        n = self.X.shape[0]
        self._grow(tree, root, np.ones(n, dtype=bool), g, h, 0)
        return tree

    def _leaf_value(self, G, H):
        return -G / (H + self.hyper.l2_leaf_penalty)

    def _grow(self, tree, node, mask, g, h, depth):
        G = float(g[mask].sum())
        H = float(h[mask].sum())
        tree.value[node] = self._leaf_value(G, H)
        if depth >= self.hyper.max_depth or mask.sum() < 2:
            return
        split = self._best_split(mask, g, h, G, H)
        if split is None:
            return
        f, thr, hl, hr = split
        x = self.X[:, f]
        left_mask = mask & (x < thr)
        right_mask = mask & ~(x < thr)
        li = tree.add_node()
        ri = tree.add_node()
        tree.feature[node] = int(f)
        tree.threshold[node] = float(thr)
        tree.left[node] = li
        tree.right[node] = ri
        tree.missing_left[node] = bool(hl >= hr)
        self._grow(tree, li, left_mask, g, h, depth + 1)
        self._grow(tree, ri, right_mask, g, h, depth + 1)

    def _best_split(self, mask, g, h, G, H):
        lam = self.hyper.l2_leaf_penalty
        n_node = int(mask.sum())
        idx = self.order[mask[self.order]].reshape(self.order.shape[0], n_node)
        vals = np.take_along_axis(self.X.T, idx, axis=1)
        GL = np.cumsum(g[idx], axis=1)[:, :-1]
        HL = np.cumsum(h[idx], axis=1)[:, :-1]
        GR = G - GL
        HR = H - HL
        valid = vals[:, 1:] > vals[:, :-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - G**2 / (H + lam))
        gain = np.where(valid & np.isfinite(gain), gain, -np.inf)
        flat = int(np.argmax(gain))
        f, pos = divmod(flat, gain.shape[1])
        best = gain[f, pos]
        if not best > self.hyper.gamma:
            return None
        thr = 0.5 * (vals[f, pos] + vals[f, pos + 1])
        return f, thr, float(HL[f, pos]), float(HR[f, pos])


def _weighted_logloss(y, p, w):
    p = np.clip(p, 1e-15, 1 - 1e-15)
    return float(np.sum(w * -(y * np.log(p) + (1 - y) * np.log(1 - p))) / np.sum(w))


def _check_training_data(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValidationError("feature matrix and labels disagree in shape")
    if not np.isfinite(X).all():
        raise ValidationError("training features must be finite")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValidationError("labels must be 0/1")
    if y.min() == y.max():
        raise ValidationError("training labels contain a single class")
    return X, y


def train_gbdt_arrays(X, y, hyper: Hyperparams = Hyperparams(), columns=None, seed: int = 0) -> GbdtModel:
    """Fit a boosted ensemble on raw arrays.

    Training is exact and deterministic; ``seed`` is kept for interface
    stability (no row or column subsampling is done).
    """
    X, y = _check_training_data(X, y)
    columns = tuple(columns) if columns is not None else tuple(f"f{i}" for i in range(X.shape[1]))
    w = np.where(y == 1, float(hyper.scale_pos_weight), 1.0)
    base_score = _logit(float(np.sum(w * y) / np.sum(w)))
    order = np.argsort(X, axis=0, kind="stable").T.copy()
    builder = _TreeBuilder(X, order, hyper)
    margin = np.full(X.shape[0], base_score)
    trees = []
    losses = [_weighted_logloss(y, _sigmoid(margin), w)]
    for _ in range(hyper.n_estimators):
        p = _sigmoid(margin)
        g = w * (p - y)
        h = w * p * (1 - p)
        tree = builder.build(g, h)
        trees.append(tree)
        margin = margin + hyper.learning_rate * tree.predict(X)
        losses.append(_weighted_logloss(y, _sigmoid(margin), w))
    return GbdtModel(trees, base_score, hyper.learning_rate, columns, hyper, losses)


def train_gbdt(dataset, hyper: Hyperparams = Hyperparams(), seed: int = 0) -> GbdtModel:
    return train_gbdt_arrays(dataset.X, dataset.y, hyper, dataset.columns, seed)


# --- model selection ---------------------------------------------------------


def stratified_folds(y, folds: int, seed: int) -> list[np.ndarray]:
    """Assign rows to folds so each fold's positive count is within one of the others."""
    y = np.asarray(y)
    if folds < 2:
        raise ValidationError("folds must be >= 2")
    rng = np.random.default_rng(seed)
    out = [[] for _ in range(folds)]
    offset = 0
    for cls in (1, 0):
        rows = np.flatnonzero(y == cls)
        rng.shuffle(rows)
        for k, r in enumerate(rows):
            out[(k + offset) % folds].append(int(r))
        offset = (offset + len(rows)) % folds
    return [np.sort(np.array(f, dtype=np.int64)) for f in out]


def precision_at(scores, labels, threshold: float = 0.5) -> float:
    pred = np.asarray(scores) >= threshold
    if not pred.any():
        return 0.0
    return float(np.asarray(labels)[pred].mean())


def grid_search_cv(dataset, grid, folds: int = 5, seed: int = 0, threshold: float = 0.5):
    """Pick the configuration with the best mean validation precision.

    Returns ``(best, table)`` where ``table`` lists each configuration with its
    per-fold and mean precision. Ties go to fewer trees, then shallower trees,
    then grid order.
    """
    grid = expand_grid(grid) if isinstance(grid, dict) else list(grid)
    if not grid:
        raise ValidationError("hyperparameter grid is empty")
    y = np.asarray(dataset.y)
    if int(y.sum()) < folds or int((1 - y).sum()) < folds:
        raise ValidationError(f"need at least {folds} rows of each class for {folds}-fold CV")
    parts = stratified_folds(y, folds, seed)
    all_rows = np.arange(len(y))
    table = []
    for pos, hyper in enumerate(grid):
        precisions = []
        for k, val_rows in enumerate(parts):
            train_rows = np.setdiff1d(all_rows, val_rows)
            model = train_gbdt_arrays(dataset.X[train_rows], y[train_rows], hyper, dataset.columns, seed)
            precisions.append(precision_at(model.predict_proba(dataset.X[val_rows]), y[val_rows], threshold))
        table.append({"hyperparams": hyper.as_dict(), "fold_precision": precisions,
                      "mean_precision": float(np.mean(precisions)), "grid_index": pos})
    best_row = max(
        table,
        key=lambda r: (r["mean_precision"], -r["hyperparams"]["n_estimators"], -r["hyperparams"]["max_depth"], -r["grid_index"]),
    )
    return Hyperparams(**best_row["hyperparams"]), table


# --- risk groups and score files ---------------------------------------------


class RiskGroup(IntEnum):
    VeryLow = 0
    Low = 1
    Medium = 2
    High = 3


def bin_risk(score: float, thresholds=RISK_THRESHOLDS) -> RiskGroup:
    """VeryLow [0, t1], Low (t1, t2], Medium (t2, t3], High (t3, 1]."""
    if not 0.0 <= score <= 1.0 or math.isnan(score):
        raise ValidationError(f"risk score {score} outside [0, 1]")
    for group, upper in zip((RiskGroup.VeryLow, RiskGroup.Low, RiskGroup.Medium), thresholds):
        if score <= upper:
            return group
    return RiskGroup.High


def write_scores(path, property_ids, scores) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["property_id", "score"])
        for pid, s in zip(property_ids, scores):
            w.writerow([pid, repr(float(s))])


def import_scores(path, known_properties=None):
    """Read a ``property_id,score`` file.

    Returns ``(scores, rejected)`` where ``rejected`` lists ids not in
    ``known_properties`` (those rows are skipped). Out-of-range scores and
    duplicate ids raise :class:`ValidationError`.
    """
    scores = {}
    rejected = []
    seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not {"property_id", "score"} <= set(reader.fieldnames or []):
            raise ValidationError(f"{path}: score file needs property_id and score columns")
        for row_no, row in enumerate(reader, start=1):
            pid = row["property_id"].strip()
            try:
                s = float(row["score"])
            except ValueError:
                raise ValidationError(f"row {row_no}: score is not a number: {row['score']!r}") from None
            if not 0.0 <= s <= 1.0:
                raise ValidationError(f"row {row_no}: score {s} outside [0, 1] for {pid!r}")
            if pid in seen:
                raise ValidationError(f"row {row_no}: duplicate property_id {pid!r}")
            seen.add(pid)
            if known_properties is not None and pid not in known_properties:
                rejected.append(pid)
                continue
            scores[pid] = s
    return scores, rejected
