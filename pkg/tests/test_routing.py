from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evictroute.data.records import GeoPoint, ValidationError
from evictroute.geo_cost import CostParams, distance_matrix, leg_time_matrix
from evictroute.routing import (
    NEIGHBOR_LIST_MIN_STOPS,
    RoutePlan,
    find_improving_swap,
    northwest_start,
    path_travel_time,
    route_time,
    route_tsp,
    select_topk_within_time,
    select_within_units,
    solve_path,
)


def random_stops(rng, n, spread=0.05, max_units=12):
    lats = 38.6 + rng.uniform(-spread, spread, n)
    lons = -90.3 + rng.uniform(-spread, spread, n)
    units = rng.integers(2, max_units + 1, n)
    return [(f"P{i:03d}", GeoPoint(float(a), float(o)), int(u)) for i, (a, o, u) in enumerate(zip(lats, lons, units))]


def travel_matrix(stops, params=CostParams()):
    lat = [s[1].latitude for s in stops]
    lon = [s[1].longitude for s in stops]
    return leg_time_matrix(distance_matrix(lat, lon), params)


def brute_force_from(T, start):
    others = [i for i in range(T.shape[0]) if i != start]
    return min(path_travel_time([start, *perm], T) for perm in itertools.permutations(others))


def test_route_time_sums_legs_and_knocks():
    assert route_time(RoutePlan(["a"], [], [1.0])) == 1.0
    plan = RoutePlan(["a", "b", "c"], [0.125, 0.2], [0.2, 0.3, 0.5])
    assert route_time(plan) == pytest.approx(1.325, abs=1e-12)


def test_single_point_is_knock_only():
    plan = route_tsp([("A", GeoPoint(38.6, -90.3), 10)])
    assert plan.leg_times == []
    assert plan.total_time == pytest.approx(1.0)
    assert plan.visit_order == ["A"]


def test_three_collinear_points_match_brute_force():
    stops = [("M", GeoPoint(38.60, -90.30), 2), ("W", GeoPoint(38.60, -90.32), 2), ("E", GeoPoint(38.60, -90.28), 2)]
    plan = route_tsp(stops)
    T = travel_matrix(stops)
    assert plan.travel_time == pytest.approx(brute_force_from(T, northwest_start(stops)), abs=1e-12)
    assert plan.visit_order == ["W", "M", "E"]


def test_empty_route_rejected():
    with pytest.raises(ValidationError):
        route_tsp([])


def test_northwest_start_ties_by_id():
    stops = [("B", GeoPoint(38.6, -90.3), 2), ("A", GeoPoint(38.6, -90.3), 2), ("C", GeoPoint(38.5, -90.3), 2)]
    assert stops[northwest_start(stops)][0] == "A"


def test_budget_below_first_property():
    stops = [("A", GeoPoint(38.6, -90.3), 2)]
    k, plan = select_topk_within_time(stops, 0.05)
    assert k == 0 and plan.visit_order == []


@pytest.mark.parametrize("mode", ["incremental", "bisect"])
def test_budget_equal_to_route_time_is_inclusive(mode):
    rng = np.random.default_rng(4)
    stops = random_stops(rng, 6)
    budget = route_tsp(stops[:3]).total_time
    k, plan = select_topk_within_time(stops, budget, mode=mode)
    assert k >= 3
    assert plan.total_time <= budget
    if k == 3:
        assert plan.visit_order == route_tsp(stops[:3]).visit_order


def test_unknown_search_mode():
    with pytest.raises(ValidationError):
        select_topk_within_time(random_stops(np.random.default_rng(0), 3), 5.0, mode="greedy")


@pytest.mark.parametrize("units,budget,taken", [
    ([50, 60], 100, 1),
    ([50, 60], 1000, 2),
    ([40, 40, 40], 120, 3),
])
def test_select_within_units(units, budget, taken):
    ranked = [(f"P{i}", GeoPoint(38.6, -90.3), u) for i, u in enumerate(units)]
    chosen = select_within_units(ranked, budget)
    assert len(chosen) == taken
    assert sum(c[2] for c in chosen) <= budget


def test_route_serialisation():
    stops = random_stops(np.random.default_rng(1), 5)
    plan = route_tsp(stops)
    doc = plan.to_dict()
    assert [v["property_id"] for v in doc["visits"]] == plan.visit_order
    assert doc["total_time_hours"] == plan.total_time
    gj = plan.to_geojson(policy="x")
    kinds = [f["geometry"]["type"] for f in gj["features"]]
    assert kinds == ["LineString"] + ["Point"] * 5
    for f in gj["features"][1:]:
        lon, lat = f["geometry"]["coordinates"]
        assert -180 <= lon <= 180 and -90 <= lat <= 90


# --- properties -------------------------------------------------------------------


instance = st.tuples(st.integers(0, 10_000), st.integers(2, 25))


@settings(max_examples=60, deadline=None)
@given(instance)
def test_local_search_is_two_opt_stable_and_beats_nn(inst):
    seed, n = inst
    stops = random_stops(np.random.default_rng(seed), n)
    T = travel_matrix(stops)
    start = northwest_start(stops)
    nn, _, _ = solve_path(T, start, improve=False)
    best, _, cap = solve_path(T, start, seed=seed)
    assert sorted(best.tolist()) == list(range(n))
    assert best[0] == start
    assert not cap
    assert find_improving_swap(list(best), T) is None
    assert path_travel_time(best, T) <= path_travel_time(nn, T) + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_route_is_deterministic(seed):
    stops = random_stops(np.random.default_rng(seed), 15)
    assert route_tsp(stops, seed=seed).visit_order == route_tsp(stops, seed=seed).visit_order


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.5, 12.0))
def test_time_budget_contract(seed, budget):
    stops = random_stops(np.random.default_rng(seed), 30)
    for mode in ("incremental", "bisect"):
        k, plan = select_topk_within_time(stops, budget, mode=mode, seed=seed)
        assert plan.total_time <= budget
        assert plan.total_properties == k
        assert plan.visit_order == [] or set(plan.visit_order) == {s[0] for s in stops[:k]}
        if k < len(stops):
            assert route_tsp(stops[: k + 1], seed=seed).total_time > budget


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 300), min_size=1, max_size=40), st.integers(1, 2000))
def test_unit_budget_contract(units, budget):
    ranked = [(f"P{i}", GeoPoint(38.6, -90.3), u) for i, u in enumerate(units)]
    chosen = select_within_units(ranked, budget)
    assert sum(c[2] for c in chosen) <= budget
    assert chosen == ranked[: len(chosen)]
    if len(chosen) < len(ranked):
        assert sum(c[2] for c in chosen) + ranked[len(chosen)][2] > budget


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 300), min_size=2, max_size=40))
def test_knock_sum_monotone_over_prefixes(units):
    params = CostParams()
    sums = [math.fsum(params.knock_hours_per_unit * u for u in units[:k]) for k in range(len(units) + 1)]
    assert all(a <= b for a, b in zip(sums, sums[1:]))


def test_neighbor_list_search_on_large_route():
    n = NEIGHBOR_LIST_MIN_STOPS + 40
    stops = random_stops(np.random.default_rng(9), n, spread=0.1)
    T = travel_matrix(stops)
    start = northwest_start(stops)
    nn, _, _ = solve_path(T, start, improve=False)
    plan = route_tsp(stops)
    assert sorted(plan.visit_order) == sorted(s[0] for s in stops)
    idx = {s[0]: i for i, s in enumerate(stops)}
    path = [idx[p] for p in plan.visit_order]
    assert find_improving_swap(path, T) is None
    assert plan.travel_time <= path_travel_time(nn, T) + 1e-12


def test_bisect_and_incremental_agree_on_typical_lists():
    agree = 0
    for seed in range(20):
        stops = random_stops(np.random.default_rng(seed), 60)
        budget = 3.0 + seed * 0.5
        ki, _ = select_topk_within_time(stops, budget, mode="incremental")
        kb, _ = select_topk_within_time(stops, budget, mode="bisect")
        agree += ki == kb
    assert agree >= 18
