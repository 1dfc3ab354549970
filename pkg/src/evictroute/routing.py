"""Open-path TSP heuristics and budget-constrained property selection.

Tours are open paths starting at the northwesternmost stop (largest
``latitude - longitude``, ties by property id). Construction is nearest
neighbour on leg travel time. Improvement alternates first-improvement 2-opt
(scanned in index order) with or-opt segment moves until neither finds an
improving move, so every returned path is 2-opt stable unless the sweep cap
was hit. A few seeded random restarts go through the same local search and the
cheapest path wins; the nearest-neighbour start is always one of the
candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .data.records import GeoPoint, ValidationError
from .geo_cost import CostParams, distance_matrix, knock_time, leg_time_matrix

IMPROVEMENT_EPS = 1e-12
DEFAULT_MAX_SWEEPS = 50
DEFAULT_RESTARTS = 2
# restarts are skipped above this many stops to bound runtime
RESTART_MAX_STOPS = 60
# Above this many stops, segment moves only consider the nearest neighbours
# of the segment ends as insertion points.
NEIGHBOR_LIST_MIN_STOPS = 80
NEIGHBOR_LIST_SIZE = 12
BOUND_MARGIN = 1e-9


@dataclass
class RoutePlan:
    visit_order: list = field(default_factory=list)
    leg_times: list = field(default_factory=list)
    knock_times: list = field(default_factory=list)
    total_time: float = 0.0
    total_units: int = 0
    total_properties: int = 0
    locations: list = field(default_factory=list)
    units: list = field(default_factory=list)
    sweeps: int = 0
    sweep_cap_hit: bool = False

    def __post_init__(self):
        if len(set(self.visit_order)) != len(self.visit_order):
            raise ValidationError("visit_order contains duplicates")

    @property
    def travel_time(self) -> float:
        return math.fsum(self.leg_times)

    def to_dict(self) -> dict:
        return {
            "total_time_hours": self.total_time,
            "travel_time_hours": self.travel_time,
            "total_units": self.total_units,
            "total_properties": self.total_properties,
            "two_opt_sweeps": self.sweeps,
            "sweep_cap_hit": self.sweep_cap_hit,
            "visits": [
                {
                    "order": i + 1,
                    "property_id": pid,
                    "latitude": loc.latitude,
                    "longitude": loc.longitude,
                    "units": u,
                    "leg_hours_from_previous": self.leg_times[i - 1] if i > 0 else 0.0,
                    "knock_hours": kt,
                }
                for i, (pid, loc, u, kt) in enumerate(zip(self.visit_order, self.locations, self.units, self.knock_times))
            ],
        }

    def to_geojson(self, **properties) -> dict:
        features = []
        if len(self.locations) >= 2:
            features.append({
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[loc.longitude, loc.latitude] for loc in self.locations],
                },
                "properties": dict(properties, kind="route", total_time_hours=self.total_time),
            })
        for i, (pid, loc, u) in enumerate(zip(self.visit_order, self.locations, self.units)):
            features.append({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [loc.longitude, loc.latitude]},
                "properties": {"kind": "visit", "order": i + 1, "property_id": pid, "units": u},
            })
        return {"type": "FeatureCollection", "features": features}


def route_time(plan: RoutePlan) -> float:
    """Recompute total outreach hours from a plan's legs and knocks."""
    return math.fsum(plan.leg_times) + math.fsum(plan.knock_times)


def _as_stops(points):
    stops = []
    for item in points:
        pid, loc, units = item
        if not isinstance(loc, GeoPoint):
            loc = GeoPoint(*loc)
        stops.append((pid, loc, int(units)))
    return stops


def northwest_start(stops) -> int:
    best = 0
    for i in range(1, len(stops)):
        key = stops[i][1].latitude - stops[i][1].longitude
        ref = stops[best][1].latitude - stops[best][1].longitude
        if key > ref or (key == ref and stops[i][0] < stops[best][0]):
            best = i
    return best


@numba.njit(cache=True)
def _nearest_neighbor(T, start):
    k = T.shape[0]
    path = np.empty(k, np.int64)
    used = np.zeros(k, np.bool_)
    path[0] = start
    used[start] = True
    cur = start
    for pos in range(1, k):
        best = -1
        best_t = np.inf
        for j in range(k):
            if not used[j] and T[cur, j] < best_t:
                best_t = T[cur, j]
                best = j
        path[pos] = best
        used[best] = True
        cur = best
    return path


@numba.njit(cache=True)
def _two_opt(path, T, max_sweeps, eps):
    k = path.shape[0]
    sweeps = 0
    improved = True
    while improved and sweeps < max_sweeps:
        improved = False
        sweeps += 1
        for i in range(1, k - 1):
            j = i + 1
            while j < k:
                a = path[i - 1]
                b = path[i]
                c = path[j]
                delta = T[a, c] - T[a, b]
                if j < k - 1:
                    d = path[j + 1]
                    delta += T[b, d] - T[c, d]
                if delta < -eps:
                    lo = i
                    hi = j
                    while lo < hi:
                        tmp = path[lo]
                        path[lo] = path[hi]
                        path[hi] = tmp
                        lo += 1
                        hi -= 1
                    improved = True
                j += 1
    return sweeps, improved


@numba.njit(cache=True)
def _or_opt(path, T, eps):
    """Move segments of 1-3 stops (either orientation) to their best position."""
    k = path.shape[0]
    improved_any = False
    moved = True
    while moved:
        moved = False
        for L in range(1, 4):
            i = 1
            while i + L - 1 < k:
                s0 = path[i]
                s1 = path[i + L - 1]
                prev = path[i - 1]
                removal = -T[prev, s0]
                if i + L < k:
                    nxt = path[i + L]
                    removal += T[prev, nxt] - T[s1, nxt]
                best = -eps
                best_j = -1
                best_rev = False
                for j in range(k):
                    if i - 1 <= j <= i + L - 1:
                        continue
                    a = path[j]
                    jn = j + 1
                    if jn == i:
                        jn = i + L
                    for rev in range(2):
                        first = s0 if rev == 0 else s1
                        last = s1 if rev == 0 else s0
                        delta = removal + T[a, first]
                        if jn < k:
                            b = path[jn]
                            delta += T[last, b] - T[a, b]
                        if delta < best:
                            best = delta
                            best_j = j
                            best_rev = rev == 1
                if best_j >= 0:
                    seg = path[i:i + L].copy()
                    if best_rev:
                        seg = seg[::-1].copy()
                    rest = np.concatenate((path[:i], path[i + L:]))
                    pos = best_j if best_j < i else best_j - L
                    path[:] = np.concatenate((rest[:pos + 1], seg, rest[pos + 1:]))
                    moved = True
                    improved_any = True
                i += 1
    return improved_any


@numba.njit(cache=True)
def _or_opt_nb(path, T, nbrs, eps):
    """Segment moves restricted to insertion next to a near neighbour of either end."""
    k = path.shape[0]
    pos = np.empty(k, np.int64)
    for idx in range(k):
        pos[path[idx]] = idx
    improved_any = False
    moved = True
    while moved:
        moved = False
        for L in range(1, 4):
            i = 1
            while i + L - 1 < k:
                s0 = path[i]
                s1 = path[i + L - 1]
                prev = path[i - 1]
                removal = -T[prev, s0]
                if i + L < k:
                    nxt = path[i + L]
                    removal += T[prev, nxt] - T[s1, nxt]
                best = -eps
                best_j = -1
                best_rev = False
                for end in range(2):
                    e = s0 if end == 0 else s1
                    for m in range(nbrs.shape[1]):
                        pv = pos[nbrs[e, m]]
                        for j in (pv - 1, pv):
                            if j < 0 or (i - 1 <= j <= i + L - 1):
                                continue
                            a = path[j]
                            jn = j + 1
                            for rev in range(2):
                                first = s0 if rev == 0 else s1
                                last = s1 if rev == 0 else s0
                                delta = removal + T[a, first]
                                if jn < k:
                                    b = path[jn]
                                    delta += T[last, b] - T[a, b]
                                if delta < best:
                                    best = delta
                                    best_j = j
                                    best_rev = rev == 1
                if best_j >= 0:
                    seg = path[i:i + L].copy()
                    if best_rev:
                        seg = seg[::-1].copy()
                    rest = np.concatenate((path[:i], path[i + L:]))
                    p = best_j if best_j < i else best_j - L
                    path[:] = np.concatenate((rest[:p + 1], seg, rest[p + 1:]))
                    for idx in range(k):
                        pos[path[idx]] = idx
                    moved = True
                    improved_any = True
                i += 1
    return improved_any


def _neighbor_lists(T, size):
    T = T + T.T
    np.fill_diagonal(T, np.inf)
    size = min(size, T.shape[0] - 1)
    near = np.argpartition(T, size - 1, axis=1)[:, :size]
    order = np.argsort(np.take_along_axis(T, near, axis=1), axis=1, kind="stable")
    return np.ascontiguousarray(np.take_along_axis(near, order, axis=1))


def _local_search(path, T, max_sweeps):
    sweeps = 0
    capped = False
    nbrs = _neighbor_lists(T, NEIGHBOR_LIST_SIZE) if len(path) >= NEIGHBOR_LIST_MIN_STOPS else None
    while True:
        if nbrs is None:
            moved = _or_opt(path, T, IMPROVEMENT_EPS)
        else:
            moved = _or_opt_nb(path, T, nbrs, IMPROVEMENT_EPS)
        n_sweeps, still_improving = _two_opt(path, T, max_sweeps, IMPROVEMENT_EPS)
        sweeps += int(n_sweeps)
        if still_improving:
            capped = True
            break
        if not moved and n_sweeps == 1:
            break
    return sweeps, capped


def _travel_matrix(stops, params):
    lats = [s[1].latitude for s in stops]
    lons = [s[1].longitude for s in stops]
    return leg_time_matrix(distance_matrix(lats, lons), params)


def path_travel_time(path, T) -> float:
    return math.fsum(T[path[i], path[i + 1]] for i in range(len(path) - 1))


def find_improving_swap(path, T, eps: float = IMPROVEMENT_EPS):
    """Exhaustive scan for a 2-opt reversal that shortens the open path; ``None`` if stable."""
    k = len(path)
    for i in range(1, k - 1):
        for j in range(i + 1, k):
            delta = T[path[i - 1], path[j]] - T[path[i - 1], path[i]]
            if j < k - 1:
                delta += T[path[i], path[j + 1]] - T[path[j], path[j + 1]]
            if delta < -eps:
                return i, j
    return None


def plan_from_path(stops, path, T, params: CostParams, sweeps: int = 0, capped: bool = False) -> RoutePlan:
    order = [stops[i] for i in path]
    legs = [float(T[path[i], path[i + 1]]) for i in range(len(path) - 1)]
    knocks = [knock_time(s[2], params) for s in order]
    return RoutePlan(
        visit_order=[s[0] for s in order],
        leg_times=legs,
        knock_times=knocks,
        total_time=math.fsum(legs) + math.fsum(knocks),
        total_units=sum(s[2] for s in order),
        total_properties=len(order),
        locations=[s[1] for s in order],
        units=[s[2] for s in order],
        sweeps=sweeps,
        sweep_cap_hit=capped,
    )


def solve_path(T, start: int, max_sweeps: int = DEFAULT_MAX_SWEEPS, improve: bool = True,
               seed: int = 0, restarts: int = DEFAULT_RESTARTS):
    """Best open path from ``start``: nearest neighbour plus local search and restarts.

    Returns ``(path, sweeps, cap_hit)``. With ``improve=False`` the raw
    nearest-neighbour path is returned.
    """
    T = np.ascontiguousarray(T, dtype=np.float64)
    k = T.shape[0]
    if k == 0:
        return np.empty(0, np.int64), 0, False
    path = _nearest_neighbor(T, start)
    if not improve or k < 3:
        return path, 0, False
    sweeps, capped = _local_search(path, T, max_sweeps)
    best, best_time = path, path_travel_time(path, T)
    if restarts > 0 and k > 3 and k <= RESTART_MAX_STOPS:
        rng = np.random.default_rng(seed)
        others = np.array([i for i in range(k) if i != start], dtype=np.int64)
        for _ in range(restarts):
            cand = np.concatenate(([start], rng.permutation(others))).astype(np.int64)
            s, c = _local_search(cand, T, max_sweeps)
            sweeps += s
            capped = capped or c
            t = path_travel_time(cand, T)
            if t < best_time - IMPROVEMENT_EPS:
                best, best_time = cand, t
    return best, sweeps, capped


def route_tsp(points, params: CostParams = CostParams(), seed: int = 0, max_sweeps: int = DEFAULT_MAX_SWEEPS,
              travel_matrix=None, restarts: int = DEFAULT_RESTARTS) -> RoutePlan:
    """Approximate shortest open tour over ``points`` = [(property_id, GeoPoint, units)].

    ``seed`` drives the restart permutations only; identical inputs and seed
    give an identical plan.
    """
    stops = _as_stops(points)
    if not stops:
        raise ValidationError("cannot route an empty set of properties")
    T = _travel_matrix(stops, params) if travel_matrix is None else travel_matrix
    path, sweeps, capped = solve_path(T, northwest_start(stops), max_sweeps, seed=seed, restarts=restarts)
    return plan_from_path(stops, path, T, params, sweeps, capped)


class _PrefixRouter:
    """Routes prefixes of a ranked list, growing the travel matrix on demand."""

    def __init__(self, stops, params, max_sweeps, seed):
        self.stops = stops
        self.params = params
        self.max_sweeps = max_sweeps
        self.seed = seed
        self._T = np.zeros((0, 0))
        self._knock_prefix = np.cumsum([0.0] + [knock_time(s[2], params) for s in stops])
        self._cache = {}

    def _matrix(self, k):
        if self._T.shape[0] < k:
            m = min(len(self.stops), max(k, 2 * self._T.shape[0], 64))
            self._T = _travel_matrix(self.stops[:m], self.params)
        return self._T[:k, :k]

    def knock_lower_bound(self, k) -> float:
        return float(self._knock_prefix[k])

    def plan(self, k) -> RoutePlan:
        if k == 0:
            return RoutePlan()
        if k not in self._cache:
            sub = self.stops[:k]
            T = np.ascontiguousarray(self._matrix(k))
            path, sweeps, capped = solve_path(T, northwest_start(sub), self.max_sweeps, seed=self.seed)
            self._cache[k] = plan_from_path(sub, path, T, self.params, sweeps, capped)
        return self._cache[k]

    def exceeds(self, k, budget) -> bool:
        # Local search never lengthens the nearest-neighbour path, so its time
        # bounds the plan from above just as the knock sum bounds it from
        # below. The margin keeps rounding from deciding a boundary case.
        if k not in self._cache:
            if self.knock_lower_bound(k) > budget + BOUND_MARGIN:
                return True
            T = np.ascontiguousarray(self._matrix(k))
            nn = _nearest_neighbor(T, northwest_start(self.stops[:k]))
            if path_travel_time(nn, T) + self.knock_lower_bound(k) <= budget - BOUND_MARGIN:
                return False
        return self.plan(k).total_time > budget


def select_topk_within_time(ranked, budget_hours: float, params: CostParams = CostParams(), seed: int = 0,
                            mode: str = "incremental", max_sweeps: int = DEFAULT_MAX_SWEEPS):
    """Largest prefix ``k`` of ``ranked`` whose heuristic route fits in ``budget_hours``.

    ``incremental`` grows ``k`` one at a time and stops at the first prefix
    whose route exceeds the budget, returning the previous one. ``bisect``
    gallops then bisects for the same boundary and agrees with
    ``incremental`` whenever route time is monotone over the prefixes it
    probes. Returns ``(k, plan)``.
    """
    if not budget_hours > 0:
        raise ValidationError("budget_hours must be positive")
    stops = _as_stops(ranked)
    router = _PrefixRouter(stops, params, max_sweeps, seed)
    n = len(stops)
    if mode == "incremental":
        for k in range(1, n + 1):
            if router.exceeds(k, budget_hours):
                return k - 1, router.plan(k - 1)
        return n, router.plan(n)
    if mode == "bisect":
        if n == 0:
            return 0, RoutePlan()
        lo, hi = 0, 1
        while not router.exceeds(hi, budget_hours):
            if hi == n:
                return n, router.plan(n)
            lo, hi = hi, min(2 * hi, n)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if router.exceeds(mid, budget_hours):
                hi = mid
            else:
                lo = mid
        return lo, router.plan(lo)
    raise ValidationError(f"unknown search mode {mode!r}")


def select_within_units(ranked, unit_budget: int) -> list:
    """Longest prefix of ``ranked`` whose cumulative units stay within ``unit_budget``."""
    if unit_budget <= 0:
        raise ValidationError("unit_budget must be positive")
    out = []
    total = 0
    for item in ranked:
        units = int(item[2])
        if total + units > unit_budget:
            break
        total += units
        out.append(item)
    return out
