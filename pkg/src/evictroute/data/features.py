"""Feature construction: attorney rankings, ownership resolution, nested feature sets."""

from __future__ import annotations

import datetime as dt
from bisect import bisect_right
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .records import (
    BLOCK_FIELDS,
    BLOCK_GROUP_FIELDS,
    LOCATION_CLASSES,
    NEIGHBORHOOD_FIELDS,
    OwnerProfile,
    PeriodWindow,
    ValidationError,
    month_of,
)

FEATURE_SETS = ("E", "EN", "ENO")

OWNER_FIELDS = (
    "units",
    "owner_property_count",
    "owner_is_business",
    "owner_occupied",
    "attorney_top25",
    "attorney_top26_50",
) + tuple(f"owner_{c}" for c in LOCATION_CLASSES)


def quarter_slices(n_months: int) -> list[tuple[int, int]]:
    """Consecutive 3-month chunks of the window; the last one may be shorter."""
    return [(start, min(start + 3, n_months)) for start in range(0, n_months, 3)]


def eviction_columns(n_months: int) -> tuple[str, ...]:
    monthly = tuple(f"filings_m{i + 1}" for i in range(n_months))
    quarterly = tuple(f"filings_q{i + 1}" for i in range(len(quarter_slices(n_months))))
    return monthly + quarterly


def feature_columns(feature_set: str, n_months: int) -> tuple[str, ...]:
    if feature_set not in FEATURE_SETS:
        raise ValidationError(f"unknown feature set {feature_set!r}; expected one of {FEATURE_SETS}")
    cols = eviction_columns(n_months)
    if feature_set in ("EN", "ENO"):
        cols += NEIGHBORHOOD_FIELDS
    if feature_set == "ENO":
        cols += OWNER_FIELDS
    return cols


@dataclass
class LabeledDataset:
    property_ids: list
    X: np.ndarray
    y: np.ndarray
    feature_set: str
    feature_window: PeriodWindow
    label_window: PeriodWindow
    columns: tuple
    quality: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.X.shape != (len(self.property_ids), len(self.columns)):
            raise ValidationError(
                f"feature matrix shape {self.X.shape} does not match "
                f"{len(self.property_ids)} rows x {len(self.columns)} columns"
            )
        if self.y.shape != (len(self.property_ids),):
            raise ValidationError("label vector length does not match row count")

    def __len__(self):
        return len(self.property_ids)

    def subset(self, rows) -> "LabeledDataset":
        rows = np.asarray(rows)
        return LabeledDataset(
            [self.property_ids[i] for i in rows], self.X[rows], self.y[rows], self.feature_set,
            self.feature_window, self.label_window, self.columns, dict(self.quality),
        )


def base_rate(dataset) -> float:
    """Fraction of rows labelled 1."""
    y = dataset.y if hasattr(dataset, "y") else np.asarray(dataset)
    if len(y) == 0:
        raise ValidationError("base rate of an empty dataset is undefined")
    return float(np.count_nonzero(y)) / len(y)


def rank_attorneys(filings, window: PeriodWindow) -> list[str]:
    """Attorney ids by descending filing count inside ``window``; ties by id."""
    counts = Counter(f.attorney_id for f in filings if f.attorney_id and window.contains(f.filing_date))
    return sorted(counts, key=lambda a: (-counts[a], a))


def attorney_flags_by_owner(filings, ranking, owner_of) -> dict:
    """Map owner_id -> (top25, top26_50) for every owner with a ranked-attorney filing.

    ``filings`` should already be restricted to the ranking window.
    ``owner_of`` maps a filing to its owner id (callable) or a property id to an
    owner id (mapping).
    """
    rank = {a: i + 1 for i, a in enumerate(ranking)}
    resolve = owner_of if callable(owner_of) else (lambda f: owner_of.get(f.property_id))
    flags: dict = defaultdict(lambda: [False, False])
    for f in filings:
        r = rank.get(f.attorney_id)
        if r is None or r > 50:
            continue
        owner = resolve(f)
        if owner is None:
            continue
        flags[owner][0 if r <= 25 else 1] = True
    return {k: (v[0], v[1]) for k, v in flags.items()}


def owner_attorney_flags(owner_id, filings, ranking, owner_of) -> tuple[bool, bool]:
    """Whether ``owner_id`` filed through a rank 1-25 attorney and/or a rank 26-50 one."""
    return attorney_flags_by_owner(filings, ranking, owner_of).get(owner_id, (False, False))


class OwnershipIndex:
    """Resolves the owner of a property on a given day from tenure intervals.

    When intervals overlap (same-day transfers), the later-starting tenure wins.
    Properties without a matching tenure fall back to ``fallback_owner``.
    """

    def __init__(self, tenures, fallback_owner=None):
        by_prop = defaultdict(list)
        self._latest_profile = {}
        for t in tenures:
            by_prop[t.property_id].append(t)
            prev = self._latest_profile.get(t.owner_id)
            if prev is None or t.start >= prev.start:
                self._latest_profile[t.owner_id] = t
        self._by_prop = {}
        self._starts = {}
        for pid, items in by_prop.items():
            items.sort(key=lambda t: (t.start, t.owner_id))
            self._by_prop[pid] = items
            self._starts[pid] = [t.start for t in items]
        self._fallback = dict(fallback_owner or {})

    def tenure_at(self, property_id, day: dt.date):
        items = self._by_prop.get(property_id)
        if not items:
            return None
        i = bisect_right(self._starts[property_id], day) - 1
        while i >= 0:
            if items[i].contains(day):
                return items[i]
            i -= 1
        return None

    def owner_at(self, property_id, day: dt.date):
        t = self.tenure_at(property_id, day)
        if t is not None:
            return t.owner_id
        return self._fallback.get(property_id)

    def latest_tenure_of(self, owner_id):
        return self._latest_profile.get(owner_id)

    def holdings_at(self, day: dt.date) -> Counter:
        counts = Counter()
        for pid in self._by_prop:
            t = self.tenure_at(pid, day)
            if t is not None:
                counts[t.owner_id] += 1
        return counts


def resolve_owner_profiles(properties, ownership: OwnershipIndex, day: dt.date):
    """Owner profile per property on ``day``; also returns how many needed defaults."""
    holdings = ownership.holdings_at(day)
    profiles = {}
    unresolved = 0
    for p in properties:
        t = ownership.tenure_at(p.property_id, day)
        owner = t.owner_id if t is not None else p.owner_id
        src = t if t is not None else ownership.latest_tenure_of(owner)
        if src is None:
            unresolved += 1
            profiles[p.property_id] = OwnerProfile(owner, False, False, max(1, holdings.get(owner, 0)), "local")
            continue
        occupied = src.is_owner_occupied if t is not None else False
        profiles[p.property_id] = OwnerProfile(
            owner, src.is_business, occupied, max(1, holdings.get(owner, 0)), src.location_class
        )
    return profiles, unresolved


def _validate_windows(feature_window: PeriodWindow, label_window: PeriodWindow):
    if feature_window.overlaps(label_window) or feature_window.end_month >= label_window.start_month:
        raise ValidationError("feature window must end before the label window starts")


def build_dataset(properties, filings, neighborhoods, tenures, feature_window, label_window, feature_set):
    """Assemble one labelled feature matrix.

    Eviction features are monthly filing counts over the feature window plus
    3-month aggregates (months 1-3, 4-6, 7 for a 7-month window). Neighborhood
    fields come from the property's block and block group; missing values are
    replaced by the column median over admitted properties. Owner fields are
    resolved on the last day of the feature window. The label is 1 iff the
    property has a filing in the label window.
    """
    _validate_windows(feature_window, label_window)
    cols = feature_columns(feature_set, feature_window.n_months)
    n_months = feature_window.n_months
    pids = [p.property_id for p in properties]
    if len(set(pids)) != len(pids):
        raise ValidationError("duplicate property_id in property list")
    row_of = {pid: i for i, pid in enumerate(pids)}

    monthly = np.zeros((len(pids), n_months))
    y = np.zeros(len(pids), dtype=np.int8)
    feature_filings = []
    for f in filings:
        m = month_of(f.filing_date)
        in_feature = feature_window.start_month <= m <= feature_window.end_month
        if in_feature:
            feature_filings.append(f)
        i = row_of.get(f.property_id)
        if i is None:
            continue
        if in_feature:
            monthly[i, m - feature_window.start_month] += 1
        elif label_window.start_month <= m <= label_window.end_month:
            y[i] = 1
    quarterly = np.column_stack([monthly[:, a:b].sum(axis=1) for a, b in quarter_slices(n_months)])
    blocks = [monthly, quarterly]
    quality = {"rows": len(pids), "imputed": {}, "owners_unresolved": 0}

    if feature_set in ("EN", "ENO"):
        neigh = np.full((len(pids), len(NEIGHBORHOOD_FIELDS)), np.nan)
        for i, p in enumerate(properties):
            blk = neighborhoods.get(("block", p.block_id))
            grp = neighborhoods.get(("block_group", p.block_group_id))
            for j, name in enumerate(NEIGHBORHOOD_FIELDS):
                src = blk if name in BLOCK_FIELDS else grp
                if src is not None and src.values.get(name) is not None:
                    neigh[i, j] = src.values[name]
        for j, name in enumerate(NEIGHBORHOOD_FIELDS):
            missing = np.isnan(neigh[:, j])
            if missing.any():
                present = neigh[~missing, j]
                fill = float(np.median(present)) if present.size else 0.0
                neigh[missing, j] = fill
                quality["imputed"][name] = int(missing.sum())
        blocks.append(neigh)

    if feature_set == "ENO":
        fallback = {p.property_id: p.owner_id for p in properties}
        ownership = OwnershipIndex(tenures, fallback)
        ref_day = feature_window.last_day()
        profiles, unresolved = resolve_owner_profiles(properties, ownership, ref_day)
        quality["owners_unresolved"] = unresolved
        ranking = rank_attorneys(feature_filings, feature_window)
        flags = attorney_flags_by_owner(
            feature_filings, ranking, lambda f: ownership.owner_at(f.property_id, f.filing_date)
        )
        owner_block = np.zeros((len(pids), len(OWNER_FIELDS)))
        for i, p in enumerate(properties):
            prof = profiles[p.property_id]
            top25, top50 = flags.get(prof.owner_id, (False, False))
            onehot = [float(prof.location_class == c) for c in LOCATION_CLASSES]
            owner_block[i] = [
                p.units, prof.property_count, float(prof.is_business), float(prof.is_owner_occupied),
                float(top25), float(top50), *onehot,
            ]
        blocks.append(owner_block)

    X = np.hstack(blocks).astype(np.float64)
    return LabeledDataset(pids, X, y, feature_set, feature_window, label_window, cols, quality)
