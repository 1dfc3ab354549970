"""Seeded synthetic region with a planted logistic eviction model.

Each dwelling unit files independently each month with probability
``sigmoid(logit)``, where the logit is shared by all units of a property::

    logit = intercept
          + neighborhood * z_blockgroup
          + owner * owner_propensity
          + business * is_business
          + out_of_state * (location_class == "out_of_state")
          + owner_occupied * is_owner_occupied
          + property_effect   (per-property N(0, property_sd^2))

Neighborhood fields are noisy functions of the latent ``z_blockgroup``; owner
propensity shows up through business status, location and the choice of
high-volume attorneys. With every coefficient and ``property_sd`` set to zero
the monthly per-unit rate is ``sigmoid(intercept)``.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .records import (
    BLOCK_GROUP_FIELDS,
    EvictionFiling,
    GeoPoint,
    NeighborhoodAttributes,
    OwnerTenure,
    PropertyRecord,
    ValidationError,
    format_month,
    parse_month,
)

# (low, high) inclusive unit ranges and their probabilities.
DEFAULT_UNIT_BUCKETS = [[2, 4], [5, 9], [10, 24], [25, 49], [50, 99], [100, 250]]
DEFAULT_UNIT_WEIGHTS = [0.70, 0.14, 0.08, 0.04, 0.025, 0.015]


@dataclass
class RiskCoefficients:
    intercept: float = -8.3
    neighborhood: float = 1.6
    owner: float = 1.6
    business: float = 0.3
    out_of_state: float = 0.2
    owner_occupied: float = -0.7
    property_sd: float = 0.2

    def is_null(self) -> bool:
        return all(v == 0.0 for k, v in dataclasses.asdict(self).items() if k != "intercept")


@dataclass
class SyntheticConfig:
    n_properties: int = 2000
    lat_min: float = 38.55
    lat_max: float = 38.75
    lon_min: float = -90.45
    lon_max: float = -90.20
    grid_rows: int = 10
    grid_cols: int = 10
    blocks_per_side: int = 2
    unit_buckets: list = field(default_factory=lambda: [list(b) for b in DEFAULT_UNIT_BUCKETS])
    unit_weights: list = field(default_factory=lambda: list(DEFAULT_UNIT_WEIGHTS))
    single_unit_fraction: float = 0.03
    non_rental_fraction: float = 0.02
    owners_per_property: float = 0.35
    n_attorneys: int = 80
    transfer_fraction: float = 0.03
    missing_attribute_fraction: float = 0.01
    start_month: str = "2021-01"
    n_months: int = 13
    coefficients: RiskCoefficients = field(default_factory=RiskCoefficients)

    @classmethod
    def from_dict(cls, data: dict | None) -> "SyntheticConfig":
        data = dict(data or {})
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ValidationError(f"unknown synthetic config key(s): {', '.join(unknown)}")
        coef = data.pop("coefficients", None)
        if isinstance(coef, dict):
            coef_names = {f.name for f in dataclasses.fields(RiskCoefficients)}
            bad = sorted(set(coef) - coef_names)
            if bad:
                raise ValidationError(f"unknown coefficient key(s): {', '.join(bad)}")
            data["coefficients"] = RiskCoefficients(**coef)
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        if self.n_properties < 1:
            raise ValidationError("n_properties must be at least 1")
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise ValidationError("bounding box is empty")
        if self.grid_rows < 1 or self.grid_cols < 1 or self.blocks_per_side < 1:
            raise ValidationError("grid dimensions must be positive")
        if len(self.unit_buckets) != len(self.unit_weights) or not self.unit_buckets:
            raise ValidationError("unit_buckets and unit_weights must be non-empty and the same length")
        if any(lo < 2 or hi < lo for lo, hi in self.unit_buckets):
            raise ValidationError("unit buckets must satisfy 2 <= low <= high")
        if any(w < 0 for w in self.unit_weights) or sum(self.unit_weights) <= 0:
            raise ValidationError("unit_weights must be non-negative with a positive sum")
        for name in ("single_unit_fraction", "non_rental_fraction", "transfer_fraction", "missing_attribute_fraction"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValidationError(f"{name} must lie in [0, 1)")
        if self.owners_per_property <= 0 or self.n_attorneys < 1:
            raise ValidationError("owners_per_property and n_attorneys must be positive")
        if self.n_months < 1:
            raise ValidationError("n_months must be positive")
        parse_month(self.start_month)


class SyntheticWorld(NamedTuple):
    properties: list
    filings: list
    neighborhoods: dict
    tenures: list
    truth: dict


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def implied_label_rate(intercept: float, units, n_months: int = 3) -> float:
    """Expected fraction of properties with >= 1 filing over ``n_months`` under a null model."""
    p = 1.0 / (1.0 + math.exp(-intercept))
    units = np.asarray(units, dtype=float)
    return float(np.mean(1.0 - (1.0 - p) ** (units * n_months)))


def _smooth_field(rng, rows, cols):
    z = rng.standard_normal((rows, cols))
    for _ in range(2):
        padded = np.pad(z, 1, mode="edge")
        z = (padded[1:-1, 1:-1] * 2 + padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2] + padded[1:-1, 2:]) / 6
    sd = z.std()
    return (z - z.mean()) / sd if sd > 0 else z


def _month_start(index: int) -> dt.date:
    return dt.date(index // 12, index % 12 + 1, 1)


def _days_in_month(index: int) -> int:
    return (_month_start(index + 1) - _month_start(index)).days


def generate_synthetic(config: SyntheticConfig | None = None, seed: int = 0) -> SyntheticWorld:
    """Draw a synthetic region; identical ``(config, seed)`` gives identical output."""
    cfg = config or SyntheticConfig()
    cfg.validate()
    coef = cfg.coefficients
    rng = np.random.default_rng(seed)
    n = cfg.n_properties
    R, C, B = cfg.grid_rows, cfg.grid_cols, cfg.blocks_per_side

    # Geography: block-group grid with a smooth latent disadvantage field.
    z_grid = _smooth_field(rng, R, C)
    lat = rng.uniform(cfg.lat_min, cfg.lat_max, n)
    lon = rng.uniform(cfg.lon_min, cfg.lon_max, n)
    fr = (cfg.lat_max - lat) / (cfg.lat_max - cfg.lat_min)
    fc = (lon - cfg.lon_min) / (cfg.lon_max - cfg.lon_min)
    gr = np.minimum((fr * R).astype(int), R - 1)
    gc = np.minimum((fc * C).astype(int), C - 1)
    br = np.minimum((fr * R * B).astype(int) - gr * B, B - 1)
    bc = np.minimum((fc * C * B).astype(int) - gc * B, B - 1)
    z_prop = z_grid[gr, gc]

    # Units.
    weights = np.asarray(cfg.unit_weights, float)
    bucket = rng.choice(len(weights), size=n, p=weights / weights.sum())
    lo = np.array([cfg.unit_buckets[b][0] for b in bucket], float)
    hi = np.array([cfg.unit_buckets[b][1] for b in bucket], float)
    units = np.floor(np.exp(rng.uniform(np.log(lo), np.log(hi + 1)))).astype(int)
    units = np.clip(units, lo.astype(int), hi.astype(int))
    single = rng.random(n) < cfg.single_unit_fraction
    units[single] = 1
    is_rental = rng.random(n) >= cfg.non_rental_fraction

    # Owners: skewed holdings, latent propensity, observable traits.
    n_owners = max(1, int(round(n * cfg.owners_per_property)))
    propensity = rng.standard_normal(n_owners)
    is_business = rng.random(n_owners) < _sigmoid(-0.2 + 1.0 * propensity)
    loc_draw = rng.random(n_owners)
    oos_cut = _sigmoid(-2.0 + 0.8 * propensity)
    location = np.where(loc_draw < oos_cut, "out_of_state", np.where(loc_draw < oos_cut + 0.15, "in_state", "local"))
    owner_weight = 1.0 / np.arange(1, n_owners + 1) ** 0.7
    owner_weight *= np.exp(0.6 * propensity * is_business)
    owner_weight /= owner_weight.sum()
    owner_of = rng.choice(n_owners, size=n, p=owner_weight)
    occupied = (units <= 4) & (rng.random(n) < 0.12) & ~is_business[owner_of]

    # Attorney choice follows propensity: high-propensity owners retain high-volume firms.
    A = cfg.n_attorneys
    tier_hi, tier_mid = min(25, A), min(50, A)

    def pick_attorney(p_value):
        u = rng.random()
        if u < 0.2:
            return int(rng.integers(A))
        if p_value > 0.4 or tier_mid == tier_hi:
            return int(rng.integers(tier_hi))
        if p_value > -0.4 or tier_mid == A:
            return int(tier_hi + rng.integers(tier_mid - tier_hi)) if tier_mid > tier_hi else int(rng.integers(tier_hi))
        return int(tier_mid + rng.integers(A - tier_mid))

    owner_attorney = np.array([pick_attorney(p) for p in propensity])

    # Ownership transfers inside the horizon.
    first_month = parse_month(cfg.start_month)
    last_month = first_month + cfg.n_months - 1
    horizon_start = _month_start(first_month)
    horizon_days = (_month_start(last_month + 1) - horizon_start).days
    transfer = rng.random(n) < cfg.transfer_fraction
    transfer_day = horizon_start + np.array([dt.timedelta(days=int(d)) for d in rng.integers(1, horizon_days, n)])
    new_owner = rng.choice(n_owners, size=n, p=owner_weight)
    acquired = horizon_start - np.array([dt.timedelta(days=int(d)) for d in rng.integers(30, 3650, n)])

    prop_effect = coef.property_sd * rng.standard_normal(n)

    def logit_for(owner_idx, i):
        return (
            coef.intercept
            + coef.neighborhood * z_prop[i]
            + coef.owner * propensity[owner_idx]
            + coef.business * is_business[owner_idx]
            + coef.out_of_state * (location[owner_idx] == "out_of_state")
            + coef.owner_occupied * (occupied[i] if owner_idx == owner_of[i] else False)
            + prop_effect[i]
        )

    logit_initial = np.array([logit_for(owner_of[i], i) for i in range(n)])
    logit_after = np.array([logit_for(new_owner[i], i) if transfer[i] else logit_initial[i] for i in range(n)])

    pids = [f"P{i:06d}" for i in range(n)]
    owner_ids = [f"O{o:05d}" for o in range(n_owners)]
    attorney_ids = [f"A{a:03d}" for a in range(A)]

    # Filings, month by month.
    raw = []
    for m in range(first_month, last_month + 1):
        start = _month_start(m)
        ndays = _days_in_month(m)
        after = np.array([transfer[i] and transfer_day[i] < start for i in range(n)])
        p = _sigmoid(np.where(after, logit_after, logit_initial))
        counts = rng.binomial(units, p)
        for i in np.flatnonzero(counts):
            for _ in range(counts[i]):
                day = start + dt.timedelta(days=int(rng.integers(ndays)))
                owner_idx = new_owner[i] if transfer[i] and day >= transfer_day[i] else owner_of[i]
                attorney = None if rng.random() < 0.1 else attorney_ids[owner_attorney[owner_idx]]
                raw.append((day, pids[i], attorney))
    raw.sort(key=lambda r: (r[0], r[1]))
    filings = [EvictionFiling(f"C{k + 1:07d}", pid, day, att) for k, (day, pid, att) in enumerate(raw)]

    properties = []
    tenures = []
    for i in range(n):
        bg_id = f"BG{gr[i]:02d}{gc[i]:02d}"
        blk_id = f"{bg_id}-{br[i]}{bc[i]}"
        properties.append(
            PropertyRecord(
                pids[i], GeoPoint(round(float(lat[i]), 6), round(float(lon[i]), 6)), int(units[i]),
                owner_ids[new_owner[i] if transfer[i] else owner_of[i]], blk_id, bg_id, bool(is_rental[i]),
            )
        )
        o = owner_of[i]
        first_end = transfer_day[i] if transfer[i] else None
        tenures.append(
            OwnerTenure(pids[i], owner_ids[o], acquired[i], first_end, bool(is_business[o]), bool(occupied[i]), str(location[o]))
        )
        if transfer[i]:
            o2 = new_owner[i]
            tenures.append(
                OwnerTenure(pids[i], owner_ids[o2], transfer_day[i], None, bool(is_business[o2]), False, str(location[o2]))
            )

    neighborhoods = _neighborhood_tables(rng, cfg, z_grid)
    truth = {
        "seed": seed,
        "coefficients": dataclasses.asdict(coef),
        "horizon": {"start": format_month(first_month), "end": format_month(last_month)},
        "property_logit": {pids[i]: round(float(logit_initial[i]), 10) for i in range(n)},
        "blockgroup_latent": {
            f"BG{r:02d}{c:02d}": round(float(z_grid[r, c]), 10) for r in range(R) for c in range(C)
        },
        "owner_propensity": {owner_ids[o]: round(float(propensity[o]), 10) for o in range(n_owners)},
    }
    return SyntheticWorld(properties, filings, neighborhoods, tenures, truth)


def _neighborhood_tables(rng, cfg, z_grid):
    R, C, B = cfg.grid_rows, cfg.grid_cols, cfg.blocks_per_side
    miss = cfg.missing_attribute_fraction
    out = {}

    def rate(center, slope, z, noise=0.04):
        return float(np.clip(center + slope * z + noise * rng.standard_normal(), 0.0, 1.0))

    # z > 0 means more disadvantaged; signs below follow that reading.
    bg_specs = {
        "median_household_income": lambda z: float(max(8000.0, 52000 - 14000 * z + 4000 * rng.standard_normal())),
        "median_gross_rent": lambda z: float(max(300.0, 900 - 120 * z + 60 * rng.standard_normal())),
        "grapi": lambda z: rate(0.30, 0.05, z),
        "pct_renter_occupied": lambda z: rate(0.45, 0.10, z),
        "pct_renter_multi_occupant": lambda z: rate(0.55, 0.06, z),
        "pct_below_poverty": lambda z: rate(0.18, 0.08, z),
        "pct_mortgage": lambda z: rate(0.40, -0.08, z),
        "pct_snap": lambda z: rate(0.15, 0.07, z),
        "pct_health_insurance": lambda z: rate(0.88, -0.04, z),
        "pct_female_head_children": lambda z: rate(0.10, 0.05, z),
        "pct_high_school": lambda z: rate(0.86, -0.05, z),
        "pct_veteran": lambda z: rate(0.07, 0.0, z, 0.02),
    }
    for r in range(R):
        for c in range(C):
            z = z_grid[r, c]
            bg_id = f"BG{r:02d}{c:02d}"
            values = {name: bg_specs[name](z) for name in BLOCK_GROUP_FIELDS}
            for name in BLOCK_GROUP_FIELDS:
                if rng.random() < miss:
                    values[name] = None
            out[("block_group", bg_id)] = NeighborhoodAttributes("block_group", bg_id, values)
            for i in range(B):
                for j in range(B):
                    zb = z + 0.3 * rng.standard_normal()
                    black = rate(0.40, 0.20, zb, 0.08)
                    hispanic = rate(0.04, 0.0, zb, 0.02)
                    other = rate(0.05, 0.0, zb, 0.02)
                    white = max(0.0, 1.0 - black - hispanic - other)
                    values = {
                        "pct_under_18": rate(0.22, 0.03, zb),
                        "pct_units_occupied": rate(0.85, -0.06, zb),
                        "pct_white": white,
                        "pct_black": black,
                        "pct_hispanic": hispanic,
                        "pct_other_race": other,
                    }
                    for name in list(values):
                        if rng.random() < miss:
                            values[name] = None
                    blk_id = f"{bg_id}-{i}{j}"
                    out[("block", blk_id)] = NeighborhoodAttributes("block", blk_id, values)
    return out
