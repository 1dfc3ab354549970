"""End-to-end glue: windows, training per feature set, scoring, policy comparison."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data.features import FEATURE_SETS, build_dataset
from .data.io import admit_properties
from .data.records import PeriodWindow, ValidationError, format_month, parse_month
from .geo_cost import CostParams
from .metrics import bootstrap_pr_test, delong_test, pr_auc, roc_auc
from .policies import DEFAULT_POLICIES, compare_policies
from .risk_model import DEFAULT_HYPERPARAMS, RISK_THRESHOLDS, grid_search_cv, train_gbdt


@dataclass(frozen=True)
class Timeline:
    """Training and test windows laid out from one start month.

    Training uses ``feature_months`` of history then ``label_months`` of
    labels; the test label window follows immediately, with features from the
    ``feature_months`` just before it. The prior quarter used by the
    count-based policies is the ``label_months`` block preceding the test
    window.
    """

    start: str = "2021-01"
    feature_months: int = 7
    label_months: int = 3

    def __post_init__(self):
        parse_month(self.start)
        if self.feature_months < 1 or self.label_months < 1:
            raise ValidationError("window lengths must be positive")

    @property
    def _s(self) -> int:
        return parse_month(self.start)

    @property
    def train_feature(self) -> PeriodWindow:
        return PeriodWindow(self._s, self._s + self.feature_months - 1, "feature")

    @property
    def train_label(self) -> PeriodWindow:
        a = self._s + self.feature_months
        return PeriodWindow(a, a + self.label_months - 1, "label")

    @property
    def test_label(self) -> PeriodWindow:
        a = self.train_label.end_month + 1
        return PeriodWindow(a, a + self.label_months - 1, "label")

    @property
    def test_feature(self) -> PeriodWindow:
        b = self.test_label.start_month - 1
        return PeriodWindow(b - self.feature_months + 1, b, "feature")

    @property
    def prior(self) -> PeriodWindow:
        b = self.test_label.start_month - 1
        return PeriodWindow(b - self.label_months + 1, b, "feature")

    @property
    def n_months(self) -> int:
        return self.feature_months + 2 * self.label_months

    def as_dict(self) -> dict:
        return {
            "start": self.start,
            "feature_months": self.feature_months,
            "label_months": self.label_months,
            "train_feature": self.train_feature.as_dict(),
            "train_label": self.train_label.as_dict(),
            "test_feature": self.test_feature.as_dict(),
            "test_label": self.test_label.as_dict(),
            "prior_quarter": self.prior.as_dict(),
            "end": format_month(self.test_label.end_month),
        }


@dataclass
class Tables:
    """Admitted properties plus every filing, neighborhood row and tenure."""

    properties: list
    filings: list
    neighborhoods: dict
    tenures: list

    @classmethod
    def from_world(cls, world, min_units: int = 2, rental_only: bool = True) -> "Tables":
        admitted = admit_properties(world.properties, min_units, rental_only)
        return cls(admitted, world.filings, world.neighborhoods, world.tenures)


@dataclass
class FeatureSetResult:
    feature_set: str
    model: object
    hyperparams: object
    train: object
    test: object
    scores: np.ndarray
    grid_table: list = field(default_factory=list)

    def score_map(self) -> dict:
        return dict(zip(self.test.property_ids, (float(s) for s in self.scores)))


def build_split(tables: Tables, timeline: Timeline, feature_set: str):
    args = (tables.properties, tables.filings, tables.neighborhoods, tables.tenures)
    train = build_dataset(*args, timeline.train_feature, timeline.train_label, feature_set)
    test = build_dataset(*args, timeline.test_feature, timeline.test_label, feature_set)
    return train, test


def train_feature_sets(tables: Tables, timeline: Timeline, hyperparams=None, grid=None, folds: int = 5,
                       seed: int = 0, feature_sets=FEATURE_SETS) -> dict:
    """Train one model per feature set and score the test window."""
    hyperparams = hyperparams or DEFAULT_HYPERPARAMS
    results = {}
    for fs in feature_sets:
        train, test = build_split(tables, timeline, fs)
        table = []
        if grid:
            hyper, table = grid_search_cv(train, grid, folds, seed)
        else:
            hyper = hyperparams[fs]
        model = train_gbdt(train, hyper, seed)
        scores = model.predict_proba(test.X)
        results[fs] = FeatureSetResult(fs, model, hyper, train, test, scores, table)
    return results


def metric_block(results: dict, bootstrap_iterations: int = 2000, seed: int = 0) -> dict:
    """ROC/PR AUC per feature set, DeLong and PR bootstrap tests for adjacent pairs."""
    block = {"feature_sets": {}, "comparisons": []}
    for fs, r in results.items():
        y = r.test.y
        entry = {"base_rate": float(np.mean(y)), "n": int(len(y)), "positives": int(np.sum(y))}
        if 0 < y.sum() < len(y):
            entry["roc_auc"] = roc_auc(r.scores, y)
            entry["pr_auc"] = pr_auc(r.scores, y)
        block["feature_sets"][fs] = entry
    names = list(results)
    pairs = list(zip(names, names[1:]))
    if len(names) > 2:
        pairs.append((names[0], names[-1]))
    for a, b in pairs:
        y = results[a].test.y
        if not 1 < y.sum() < len(y) - 1:
            continue
        dl = delong_test(results[b].scores, results[a].scores, y)
        block["comparisons"].append({
            "a": b,
            "b": a,
            "roc_auc_a": dl.auc_a,
            "roc_auc_b": dl.auc_b,
            "delong_z": dl.z,
            "delong_p": dl.p_value,
            "pr_bootstrap_p": bootstrap_pr_test(results[b].scores, results[a].scores, y, bootstrap_iterations, seed),
        })
    return block


def run_comparison(tables: Tables, timeline: Timeline, scores_by_set: dict, params: CostParams = CostParams(),
                   seed: int = 0, specs=DEFAULT_POLICIES, thresholds=RISK_THRESHOLDS,
                   search_mode: str = "bisect", prior_include_zero: bool = False):
    return compare_policies(specs, tables.properties, scores_by_set, tables.filings, timeline.prior, timeline.test_label,
                            params, seed, thresholds, search_mode, prior_include_zero)
