"""Distance and time costs for canvassing routes.

Travel time for one leg is ``d / s(d)`` hours where ``s`` is a piecewise
constant speed in mph keyed on the leg distance ``d`` in miles. Each dwelling
unit at a visited property adds a fixed knock time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data.records import GeoPoint, ValidationError

EARTH_RADIUS_MILES = 3958.7613

# (upper distance bound in miles, speed in mph); the final bound is open.
DEFAULT_SPEED_TABLE = ((1.0, 4.0), (3.0, 15.0), (5.0, 30.0), (math.inf, 55.0))


@dataclass(frozen=True)
class CostParams:
    knock_hours_per_unit: float = 0.1
    speed_table: tuple = field(default=DEFAULT_SPEED_TABLE)

    def __post_init__(self):
        table = tuple((float(b), float(s)) for b, s in self.speed_table)
        object.__setattr__(self, "speed_table", table)
        if not self.knock_hours_per_unit > 0:
            raise ValidationError("knock_hours_per_unit must be positive")
        if not table:
            raise ValidationError("speed_table is empty")
        bounds = [b for b, _ in table]
        if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
            raise ValidationError("speed_table breakpoints must be strictly increasing")
        if any(s <= 0 for _, s in table):
            raise ValidationError("speeds must be positive")
        if bounds[-1] != math.inf:
            raise ValidationError("last speed_table breakpoint must be unbounded")

    @classmethod
    def from_dict(cls, data: dict | None) -> "CostParams":
        data = dict(data or {})
        unknown = set(data) - {"knock_hours_per_unit", "speed_table"}
        if unknown:
            raise ValidationError(f"unknown cost parameter(s): {', '.join(sorted(unknown))}")
        if "speed_table" in data:
            rows = []
            for row in data["speed_table"]:
                bound, speed = (row["max_miles"], row["mph"]) if isinstance(row, dict) else row
                rows.append((math.inf if bound is None else float(bound), float(speed)))
            data["speed_table"] = tuple(rows)
        return cls(**data)

    def as_dict(self) -> dict:
        return {
            "knock_hours_per_unit": self.knock_hours_per_unit,
            "speed_table": [
                {"max_miles": None if math.isinf(b) else b, "mph": s} for b, s in self.speed_table
            ],
        }


def geodesic_miles(a: GeoPoint, b: GeoPoint) -> float:
    """Haversine great-circle distance in statute miles."""
    lat1, lon1 = math.radians(a.latitude), math.radians(a.longitude)
    lat2, lon2 = math.radians(b.latitude), math.radians(b.longitude)
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_MILES * math.asin(min(1.0, math.sqrt(h)))


def distance_matrix(lats, lons) -> np.ndarray:
    """Pairwise haversine miles for coordinate arrays (degrees)."""
    lat = np.radians(np.asarray(lats, float))
    lon = np.radians(np.asarray(lons, float))
    dlat = lat[:, None] - lat[None, :]
    dlon = lon[:, None] - lon[None, :]
    h = np.sin(dlat / 2) ** 2 + np.cos(lat)[:, None] * np.cos(lat)[None, :] * np.sin(dlon / 2) ** 2
    d = 2 * EARTH_RADIUS_MILES * np.arcsin(np.minimum(1.0, np.sqrt(h)))
    # exact symmetry regardless of floating-point evaluation order
    d = np.minimum(d, d.T)
    np.fill_diagonal(d, 0.0)
    return d


def speed_for_distance(d: float, params: CostParams = CostParams()) -> float:
    if d < 0:
        raise ValidationError(f"distance must be non-negative, got {d}")
    for bound, speed in params.speed_table:
        if d <= bound:
            return speed
    return params.speed_table[-1][1]


def leg_time(d: float, params: CostParams = CostParams()) -> float:
    """Hours to travel ``d`` miles."""
    if d == 0:
        return 0.0
    return d / speed_for_distance(d, params)


def leg_time_matrix(dist: np.ndarray, params: CostParams = CostParams()) -> np.ndarray:
    dist = np.asarray(dist, float)
    if (dist < 0).any():
        raise ValidationError("distances must be non-negative")
    bounds = np.array([b for b, _ in params.speed_table])
    speeds = np.array([s for _, s in params.speed_table])
    idx = np.searchsorted(bounds, dist, side="left")
    return dist / speeds[np.minimum(idx, len(speeds) - 1)]


def knock_time(units: int, params: CostParams = CostParams()) -> float:
    if units < 0:
        raise ValidationError(f"units must be non-negative, got {units}")
    return params.knock_hours_per_unit * units
