"""Ranking metrics, significance tests and outreach rate arithmetic."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np
from scipy.stats import norm, rankdata

from .data.records import ValidationError


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    x: float
    y: float


def _check(scores, labels, need_both=True):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValidationError("scores and labels must be 1-D and the same length")
    if len(s) < 2:
        raise ValidationError("need at least two scored rows")
    if not np.isin(y, (0, 1)).all():
        raise ValidationError("labels must be 0/1")
    y = y.astype(bool)
    if need_both and (y.all() or not y.any()):
        raise ValidationError("both classes must be present")
    return s, y


def roc_auc(scores, labels) -> float:
    """Mann-Whitney estimate P(pos > neg) + 0.5 P(tie), from midranks."""
    s, y = _check(scores, labels)
    m = int(y.sum())
    n = len(y) - m
    ranks = rankdata(s)
    return float((ranks[y].sum() - m * (m + 1) / 2) / (m * n))


def roc_curve(scores, labels) -> list[CurvePoint]:
    """(FPR, TPR) at each distinct threshold, starting from (0, 0)."""
    s, y = _check(scores, labels)
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    tp = np.cumsum(y_sorted)
    fp = np.cumsum(~y_sorted)
    last = np.r_[np.flatnonzero(np.diff(s_sorted)), len(s) - 1]
    P, N = tp[-1], fp[-1]
    points = [CurvePoint(math.inf, 0.0, 0.0)]
    points += [CurvePoint(float(s_sorted[i]), float(fp[i] / N), float(tp[i] / P)) for i in last]
    return points


def pr_curve(scores, labels) -> list[CurvePoint]:
    """(recall, precision) at each distinct threshold, highest threshold first."""
    s, y = _check(scores, labels, need_both=False)
    if not y.any():
        raise ValidationError("precision-recall needs at least one positive")
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    tp = np.cumsum(y_sorted)
    last = np.r_[np.flatnonzero(np.diff(s_sorted)), len(s) - 1]
    P = tp[-1]
    return [CurvePoint(float(s_sorted[i]), float(tp[i] / P), float(tp[i] / (i + 1))) for i in last]


def pr_auc(scores, labels) -> float:
    """Step-wise area: sum of recall increments times precision at each threshold."""
    points = pr_curve(scores, labels)
    area = 0.0
    prev_recall = 0.0
    for p in points:
        area += (p.x - prev_recall) * p.y
        prev_recall = p.x
    return area


def write_curve(path, points, x_name: str, y_name: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([x_name, y_name])
        for p in points:
            w.writerow([repr(p.x), repr(p.y)])


@dataclass(frozen=True)
class DeLongResult:
    auc_a: float
    auc_b: float
    var_a: float
    var_b: float
    cov_ab: float
    var_diff: float
    z: float
    p_value: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _placements(s, y):
    """Structural components: per-positive and per-negative placement values."""
    pos, neg = s[y], s[~y]
    m, n = len(pos), len(neg)
    all_ranks = rankdata(np.r_[pos, neg])
    v10 = (all_ranks[:m] - rankdata(pos)) / n
    v01 = 1.0 - (all_ranks[m:] - rankdata(neg)) / m
    return v10, v01


def delong_variance(scores, labels) -> float:
    """DeLong variance estimate of a single ROC AUC."""
    s, y = _check(scores, labels)
    v10, v01 = _placements(s, y)
    return float(np.var(v10, ddof=1) / len(v10) + np.var(v01, ddof=1) / len(v01))


def delong_test(scores_a, scores_b, labels) -> DeLongResult:
    """Two-sided DeLong test for correlated ROC AUCs on the same labels.

    A non-positive variance of the difference (e.g. identical scorers)
    yields ``z = 0`` and ``p = 1``.
    """
    a, y = _check(scores_a, labels)
    b, _ = _check(scores_b, labels)
    m, n = int(y.sum()), int((~y).sum())
    if m < 2 or n < 2:
        raise ValidationError("DeLong needs at least two rows of each class")
    v10a, v01a = _placements(a, y)
    v10b, v01b = _placements(b, y)
    s10 = np.cov(np.vstack([v10a, v10b]))
    s01 = np.cov(np.vstack([v01a, v01b]))
    S = s10 / m + s01 / n
    auc_a, auc_b = roc_auc(a, y), roc_auc(b, y)
    var_diff = float(S[0, 0] + S[1, 1] - 2 * S[0, 1])
    if np.array_equal(a, b) or not var_diff > 0:
        z, p = 0.0, 1.0
    else:
        z = (auc_a - auc_b) / math.sqrt(var_diff)
        p = float(min(1.0, 2 * norm.sf(abs(z))))
    return DeLongResult(auc_a, auc_b, float(S[0, 0]), float(S[1, 1]), float(S[0, 1]), var_diff, float(z), p)


def _pr_auc_fast(s, y):
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    tp = np.cumsum(y_sorted)
    last = np.r_[np.flatnonzero(np.diff(s_sorted)), len(s) - 1]
    recall = tp[last] / tp[-1]
    precision = tp[last] / (last + 1)
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def bootstrap_pr_test(scores_a, scores_b, labels, iterations: int = 2000, seed: int = 0) -> float:
    """Paired, class-stratified bootstrap p-value for a PR AUC difference.

    p is twice the fraction of resamples whose difference has the opposite
    sign to (or is zero against) the observed one, clamped to [0, 1].
    """
    if iterations < 100:
        raise ValidationError("bootstrap needs at least 100 iterations")
    a, y = _check(scores_a, labels)
    b, _ = _check(scores_b, labels)
    observed = _pr_auc_fast(a, y) - _pr_auc_fast(b, y)
    if observed == 0.0:
        return 1.0
    rng = np.random.default_rng(seed)
    pos, neg = np.flatnonzero(y), np.flatnonzero(~y)
    flipped = 0
    for _ in range(iterations):
        idx = np.r_[rng.choice(pos, len(pos)), rng.choice(neg, len(neg))]
        d = _pr_auc_fast(a[idx], y[idx]) - _pr_auc_fast(b[idx], y[idx])
        if (observed > 0 and d <= 0) or (observed < 0 and d >= 0):
            flipped += 1
    return float(min(1.0, 2.0 * flipped / iterations))


def discovery_rate(evictions_discovered: int, properties_visited: int) -> float:
    if properties_visited <= 0:
        raise ValidationError("discovery rate needs at least one visited property")
    return evictions_discovered / properties_visited


def lift(primary: float, alternative: float) -> float:
    """Percent by which ``primary`` exceeds ``alternative``."""
    if alternative == 0:
        return math.inf if primary > 0 else 0.0
    return (primary / alternative - 1.0) * 100.0


def round_half_up(value: float, digits: int = 1) -> float:
    if not math.isfinite(value):
        return value
    q = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))


def percent(fraction: float, digits: int = 1) -> float:
    return round_half_up(fraction * 100.0, digits)
