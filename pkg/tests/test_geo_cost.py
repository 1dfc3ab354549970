from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evictroute.data.records import GeoPoint, ValidationError
from evictroute.geo_cost import (
    CostParams,
    distance_matrix,
    geodesic_miles,
    knock_time,
    leg_time,
    leg_time_matrix,
    speed_for_distance,
)


def test_zero_distance():
    p = GeoPoint(38.6, -90.2)
    assert geodesic_miles(p, p) == 0.0


def test_one_degree_of_longitude_on_equator():
    # 2 * pi * 3958.7613 / 360
    d = geodesic_miles(GeoPoint(0.0, 0.0), GeoPoint(0.0, 1.0))
    assert d == pytest.approx(69.09, abs=0.2)
    assert d == pytest.approx(2 * math.pi * 3958.7613 / 360, rel=1e-12)


@pytest.mark.parametrize("d,mph", [(0.5, 4), (1.0, 4), (1.01, 15), (3.0, 15), (4.0, 30), (5.0, 30), (10.0, 55)])
def test_speed_table(d, mph):
    assert speed_for_distance(d) == mph


@pytest.mark.parametrize("d,hours", [(0.0, 0.0), (0.5, 0.125), (11.0, 0.2)])
def test_leg_time(d, hours):
    assert leg_time(d) == pytest.approx(hours, abs=1e-15)


@pytest.mark.parametrize("units,hours", [(10, 1.0), (0, 0.0), (35, 3.5), (1, 0.1)])
def test_knock_time(units, hours):
    assert knock_time(units) == pytest.approx(hours, abs=1e-12)


def test_negative_inputs_rejected():
    with pytest.raises(ValidationError):
        speed_for_distance(-1.0)
    with pytest.raises(ValidationError):
        knock_time(-2)


def test_cost_params_validation():
    with pytest.raises(ValidationError):
        CostParams(knock_hours_per_unit=0)
    with pytest.raises(ValidationError):
        CostParams(speed_table=((1.0, 4.0), (3.0, 15.0)))
    with pytest.raises(ValidationError):
        CostParams(speed_table=((3.0, 4.0), (1.0, 15.0), (math.inf, 55.0)))
    p = CostParams.from_dict({"speed_table": [{"max_miles": 2, "mph": 10}, {"max_miles": None, "mph": 40}]})
    assert speed_for_distance(2.0, p) == 10 and speed_for_distance(2.5, p) == 40
    assert CostParams.from_dict(CostParams().as_dict()) == CostParams()


lat = st.floats(38.0, 39.0, allow_nan=False)
lon = st.floats(-91.0, -90.0, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(lat, lon, lat, lon)
def test_distance_symmetric_and_matches_matrix(a1, o1, a2, o2):
    a, b = GeoPoint(a1, o1), GeoPoint(a2, o2)
    d = geodesic_miles(a, b)
    assert d >= 0
    assert d == pytest.approx(geodesic_miles(b, a), rel=1e-12, abs=1e-12)
    m = distance_matrix([a1, a2], [o1, o2])
    assert m[0, 1] == m[1, 0]
    assert m[0, 1] == pytest.approx(d, rel=1e-9, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 50.0, allow_nan=False))
def test_vectorised_leg_time_agrees(d):
    assert leg_time_matrix(np.array([d]))[0] == pytest.approx(leg_time(d), rel=1e-15, abs=0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 50.0, allow_nan=False), st.floats(0.0, 50.0, allow_nan=False))
def test_speed_monotone_in_distance(d1, d2):
    lo, hi = sorted((d1, d2))
    assert speed_for_distance(lo) <= speed_for_distance(hi)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 500), st.integers(0, 500))
def test_knock_time_additive(u1, u2):
    assert knock_time(u1 + u2) == pytest.approx(knock_time(u1) + knock_time(u2), abs=1e-9)
