from __future__ import annotations

import datetime as dt

import pytest

from evictroute.data.records import EvictionFiling, GeoPoint, PeriodWindow, PropertyRecord


def make_property(pid, lat=38.6, lon=-90.3, units=4, owner="O1", block="B1", group="G1", rental=True):
    return PropertyRecord(pid, GeoPoint(lat, lon), units, owner, block, group, rental)


def make_filing(case_id, pid, day, attorney=None):
    if isinstance(day, str):
        day = dt.date.fromisoformat(day)
    return EvictionFiling(case_id, pid, day, attorney)


@pytest.fixture
def window_2021():
    return PeriodWindow.parse("2021-01", "2021-07", "feature")


@pytest.fixture
def label_window_2021():
    return PeriodWindow.parse("2021-08", "2021-10", "label")
