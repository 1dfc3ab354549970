from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evictroute.data.records import ValidationError
from evictroute.metrics import roc_auc
from evictroute.risk_model import (
    DEFAULT_GRID,
    DEFAULT_HYPERPARAMS,
    GbdtModel,
    Hyperparams,
    RiskGroup,
    bin_risk,
    expand_grid,
    grid_search_cv,
    import_scores,
    predict,
    stratified_folds,
    train_gbdt_arrays,
    write_scores,
)
from evictroute.data.features import LabeledDataset
from evictroute.data.records import PeriodWindow


def _logit(p):
    return math.log(p / (1 - p))


@pytest.mark.parametrize("lam", [1.0, 0.0])
def test_single_stump_reproduces_newton_leaves(lam):
    # One binary feature, labels [0, 1, 1, 1]. Starting from the prior log-odds
    # every row has p = 0.75, so g = p - y and h = p(1 - p) = 0.1875.
    # Left rows (x = 0): G = 0.75 - 0.25 = 0.5, H = 0.375.
    # Right rows (x = 1): G = -0.5, H = 0.375.
    # Newton leaf weight is -G / (H + lambda).
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    y = np.array([0, 1, 1, 1])
    hyper = Hyperparams(max_depth=1, learning_rate=1.0, n_estimators=1, scale_pos_weight=1, gamma=0.0,
                        l2_leaf_penalty=lam)
    model = train_gbdt_arrays(X, y, hyper)
    assert model.base_score == pytest.approx(_logit(0.75), abs=1e-15)
    tree = model.trees[0]
    assert tree.depth() == 1
    assert tree.threshold[0] == 0.5
    w_left = -0.5 / (0.375 + lam)
    w_right = 0.5 / (0.375 + lam)
    assert tree.value[tree.left[0]] == pytest.approx(w_left, abs=1e-12)
    assert tree.value[tree.right[0]] == pytest.approx(w_right, abs=1e-12)
    margin = model.margin(X)
    assert margin[0] == pytest.approx(_logit(0.75) + w_left, abs=1e-12)
    assert margin[3] == pytest.approx(_logit(0.75) + w_right, abs=1e-12)


def test_zero_tree_model_predicts_half():
    model = GbdtModel(trees=[], base_score=0.0, learning_rate=0.1, columns=("a", "b"))
    assert predict(model, [3.0, -1.0]) == 0.5


def test_width_mismatch_rejected():
    model = GbdtModel(trees=[], base_score=0.0, learning_rate=0.1, columns=("a", "b"))
    with pytest.raises(ValidationError):
        model.predict_proba(np.zeros((2, 3)))


def test_separable_data_reaches_auc_one():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 2))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    model = train_gbdt_arrays(X, y, Hyperparams(max_depth=3, learning_rate=0.3, n_estimators=20))
    assert roc_auc(model.predict_proba(X), y) == 1.0


def test_permuted_labels_give_chance_auc():
    aucs = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(3000, 3))
        y = (rng.random(3000) < 0.3).astype(int)
        model = train_gbdt_arrays(X[:1500], y[:1500], Hyperparams(max_depth=3, n_estimators=30), seed=seed)
        aucs.append(roc_auc(model.predict_proba(X[1500:]), y[1500:]))
    assert all(0.4 <= a <= 0.6 for a in aucs)


def test_training_rejects_bad_input():
    with pytest.raises(ValidationError):
        train_gbdt_arrays(np.zeros((4, 1)), np.zeros(4))
    with pytest.raises(ValidationError):
        train_gbdt_arrays(np.array([[np.nan], [1.0]]), np.array([0, 1]))


def test_missing_values_route_to_heavier_child():
    X = np.array([[0.0], [0.0], [0.0], [1.0]])
    y = np.array([0, 0, 1, 1])
    model = train_gbdt_arrays(X, y, Hyperparams(max_depth=1, learning_rate=1.0, n_estimators=1))
    tree = model.trees[0]
    assert tree.missing_left[0] is True
    assert model.margin(np.array([[np.nan]]))[0] == pytest.approx(model.margin(np.array([[0.0]]))[0])


def _toy_dataset(seed=0, n=300):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 4))
    y = (rng.random(n) < 1 / (1 + np.exp(-(2 * X[:, 0] - 1)))).astype(np.int8)
    w = PeriodWindow(0, 6)
    return LabeledDataset([f"P{i}" for i in range(n)], X, y, "E", w, PeriodWindow(7, 9, "label"),
                          tuple(f"c{i}" for i in range(4)))


def test_serialisation_is_deterministic_and_round_trips(tmp_path):
    ds = _toy_dataset()
    a = train_gbdt_arrays(ds.X, ds.y, DEFAULT_HYPERPARAMS["ENO"], ds.columns, seed=3)
    b = train_gbdt_arrays(ds.X, ds.y, DEFAULT_HYPERPARAMS["ENO"], ds.columns, seed=3)
    assert a.dumps() == b.dumps()
    a.save(tmp_path / "m.json")
    back = GbdtModel.load(tmp_path / "m.json")
    assert np.array_equal(back.predict_proba(ds.X), a.predict_proba(ds.X))
    assert all(t.depth() <= 3 for t in a.trees)


def test_base_score_shift_preserves_ranking():
    ds = _toy_dataset(1)
    model = train_gbdt_arrays(ds.X, ds.y, Hyperparams(n_estimators=20))
    shifted = GbdtModel(model.trees, model.base_score + 1.7, model.learning_rate, model.columns)
    s0, s1 = model.predict_proba(ds.X), shifted.predict_proba(ds.X)
    assert np.array_equal(np.argsort(s0, kind="stable"), np.argsort(s1, kind="stable"))
    assert roc_auc(s0, ds.y) == roc_auc(s1, ds.y)


def test_training_loss_decreases():
    ds = _toy_dataset(2)
    model = train_gbdt_arrays(ds.X, ds.y, Hyperparams(n_estimators=30, gamma=0.0))
    assert model.train_loss[-1] < model.train_loss[0]


def test_grid_of_one_returns_it():
    ds = _toy_dataset(3)
    only = Hyperparams(max_depth=2, n_estimators=5)
    best, table = grid_search_cv(ds, [only], folds=5, seed=0)
    assert best == only
    assert len(table) == 1 and len(table[0]["fold_precision"]) == 5


def test_grid_search_picks_highest_mean_precision():
    ds = _toy_dataset(4)
    grid = {"max_depth": [1, 2], "n_estimators": [5, 10]}
    best, table = grid_search_cv(ds, grid, folds=3, seed=1)
    top = max(r["mean_precision"] for r in table)
    assert any(r["hyperparams"] == best.as_dict() and r["mean_precision"] == top for r in table)


def test_default_grid_size():
    assert len(expand_grid(DEFAULT_GRID)) == 4 * 3 * 3 * 3 * 3


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=10, max_size=200), st.integers(2, 6), st.integers(0, 100))
def test_stratified_folds_partition_and_balance(labels, folds, seed):
    y = np.array(labels)
    parts = stratified_folds(y, folds, seed)
    joined = np.sort(np.concatenate(parts))
    assert np.array_equal(joined, np.arange(len(y)))
    pos = [int(y[p].sum()) for p in parts]
    assert max(pos) - min(pos) <= 1


def test_hyperparam_validation():
    for bad in ({"max_depth": 0}, {"learning_rate": 0}, {"learning_rate": 1.5}, {"n_estimators": 0},
                {"scale_pos_weight": 0.5}, {"gamma": -1}):
        with pytest.raises(ValidationError):
            Hyperparams(**bad)
    with pytest.raises(ValidationError):
        Hyperparams.from_dict({"depth": 3})


@pytest.mark.parametrize("score,group", [
    (0.03, RiskGroup.VeryLow), (0.05, RiskGroup.VeryLow), (0.2, RiskGroup.Low),
    (0.5, RiskGroup.Medium), (0.8, RiskGroup.Medium), (0.81, RiskGroup.High),
])
def test_bin_risk(score, group):
    assert bin_risk(score) is group


def test_bin_risk_rejects_out_of_range():
    for bad in (-0.1, 1.2, float("nan")):
        with pytest.raises(ValidationError):
            bin_risk(bad)


@settings(max_examples=300, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_bin_risk_monotone(a, b):
    lo, hi = sorted((a, b))
    assert bin_risk(lo) <= bin_risk(hi)


def _score_file(path, rows):
    path.write_text("property_id,score\n" + "".join(f"{p},{s}\n" for p, s in rows))
    return path


def test_import_scores(tmp_path):
    scores, rejected = import_scores(_score_file(tmp_path / "s.csv", [("A", 0.1), ("B", 0.5), ("C", 0.9)]))
    assert scores == {"A": 0.1, "B": 0.5, "C": 0.9} and rejected == []
    with pytest.raises(ValidationError, match="row 2"):
        import_scores(_score_file(tmp_path / "bad.csv", [("A", 0.1), ("B", 1.2)]))
    with pytest.raises(ValidationError, match="'A'"):
        import_scores(_score_file(tmp_path / "dup.csv", [("A", 0.1), ("A", 0.2)]))
    scores, rejected = import_scores(tmp_path / "s.csv", known_properties={"A", "B"})
    assert set(scores) == {"A", "B"} and rejected == ["C"]


def test_score_file_round_trip(tmp_path):
    ids = ["A", "B", "C"]
    vals = np.array([0.123456789012345, 0.5, 1e-9])
    write_scores(tmp_path / "s.csv", ids, vals)
    scores, _ = import_scores(tmp_path / "s.csv")
    assert [scores[i] for i in ids] == vals.tolist()
