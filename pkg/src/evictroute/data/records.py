"""Core record types shared by ingestion, feature construction and routing."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Optional

LOCATION_CLASSES = ("local", "in_state", "out_of_state")

# Decennial block-level rates.
BLOCK_FIELDS = (
    "pct_under_18",
    "pct_units_occupied",
    "pct_white",
    "pct_black",
    "pct_hispanic",
    "pct_other_race",
)

# ACS block-group fields; the two dollar amounts are levels, the rest are rates.
BLOCK_GROUP_FIELDS = (
    "median_household_income",
    "median_gross_rent",
    "grapi",
    "pct_renter_occupied",
    "pct_renter_multi_occupant",
    "pct_below_poverty",
    "pct_mortgage",
    "pct_snap",
    "pct_health_insurance",
    "pct_female_head_children",
    "pct_high_school",
    "pct_veteran",
)

LEVEL_FIELDS = frozenset({"median_household_income", "median_gross_rent"})

NEIGHBORHOOD_FIELDS = BLOCK_FIELDS + BLOCK_GROUP_FIELDS


class ValidationError(ValueError):
    """Input data violates a documented schema or invariant."""


@dataclass(frozen=True, order=True)
class GeoPoint:
    latitude: float
    longitude: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValidationError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValidationError(f"longitude {self.longitude} outside [-180, 180]")


@dataclass(frozen=True)
class PropertyRecord:
    property_id: str
    location: GeoPoint
    units: int
    owner_id: str
    block_id: str
    block_group_id: str
    is_rental: bool = True


@dataclass(frozen=True)
class EvictionFiling:
    case_id: str
    property_id: str
    filing_date: dt.date
    attorney_id: Optional[str] = None


@dataclass(frozen=True)
class OwnerTenure:
    """One owner-property pair with its ownership interval.

    ``end`` is inclusive; ``None`` means the tenure is still open.
    """

    property_id: str
    owner_id: str
    start: dt.date
    end: Optional[dt.date]
    is_business: bool
    is_owner_occupied: bool
    location_class: str

    def __post_init__(self):
        if self.location_class not in LOCATION_CLASSES:
            raise ValidationError(f"unknown location_class {self.location_class!r}")
        if self.end is not None and self.end < self.start:
            raise ValidationError(f"tenure for {self.property_id}/{self.owner_id} ends before it starts")

    def contains(self, day: dt.date) -> bool:
        return self.start <= day and (self.end is None or day <= self.end)


@dataclass(frozen=True)
class OwnerProfile:
    owner_id: str
    is_business: bool
    is_owner_occupied: bool
    property_count: int
    location_class: str


@dataclass
class NeighborhoodAttributes:
    """Attributes for one block or block group. Missing values are ``None``."""

    geo_level: str  # "block" or "block_group"
    geo_id: str
    values: dict = field(default_factory=dict)


# Months are handled as integer indices (year * 12 + month - 1) so windows are
# simple closed integer ranges.


def month_index(year: int, month: int) -> int:
    return year * 12 + month - 1


def parse_month(text: str) -> int:
    year, month = text.strip().split("-")[:2]
    month = int(month)
    if not 1 <= month <= 12:
        raise ValidationError(f"bad month {text!r}")
    return month_index(int(year), month)


def format_month(index: int) -> str:
    return f"{index // 12:04d}-{index % 12 + 1:02d}"


def month_of(day: dt.date) -> int:
    return month_index(day.year, day.month)


@dataclass(frozen=True)
class PeriodWindow:
    """Inclusive range of calendar months."""

    start_month: int
    end_month: int
    role: str = "feature"

    def __post_init__(self):
        if self.end_month < self.start_month:
            raise ValidationError(
                f"window {format_month(self.start_month)}..{format_month(self.end_month)} is empty"
            )
        if self.role not in ("feature", "label"):
            raise ValidationError(f"unknown window role {self.role!r}")

    @classmethod
    def parse(cls, start: str, end: str, role: str = "feature") -> "PeriodWindow":
        return cls(parse_month(start), parse_month(end), role)

    @property
    def n_months(self) -> int:
        return self.end_month - self.start_month + 1

    def contains(self, day: dt.date) -> bool:
        return self.start_month <= month_of(day) <= self.end_month

    def overlaps(self, other: "PeriodWindow") -> bool:
        return not (self.end_month < other.start_month or other.end_month < self.start_month)

    def first_day(self) -> dt.date:
        return dt.date(self.start_month // 12, self.start_month % 12 + 1, 1)

    def last_day(self) -> dt.date:
        nxt = self.end_month + 1
        return dt.date(nxt // 12, nxt % 12 + 1, 1) - dt.timedelta(days=1)

    def as_dict(self) -> dict:
        return {"start": format_month(self.start_month), "end": format_month(self.end_month), "role": self.role}
