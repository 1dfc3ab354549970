from __future__ import annotations

import csv
import dataclasses
import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_filing, make_property
from evictroute.data import (
    OwnershipIndex,
    base_rate,
    build_dataset,
    feature_columns,
    generate_synthetic,
    load_properties,
    owner_attorney_flags,
    rank_attorneys,
)
from evictroute.data.features import quarter_slices
from evictroute.data.io import load_dataset_dir, write_filings, write_neighborhoods, write_owner_tenures, write_properties
from evictroute.data.records import GeoPoint, OwnerTenure, PeriodWindow, ValidationError, format_month, parse_month
from evictroute.data.synthetic import RiskCoefficients, SyntheticConfig, implied_label_rate
from evictroute.pipeline import Tables, Timeline

HEADER = ["property_id", "latitude", "longitude", "units", "owner_id", "block_id", "block_group_id", "is_rental"]


def _write_props(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HEADER)
        w.writerows(rows)


# --- loading ------------------------------------------------------------------


def test_load_three_valid_rows(tmp_path):
    p = tmp_path / "properties.csv"
    _write_props(p, [
        ["P1", 38.6, -90.3, 4, "O1", "B1", "G1", "true"],
        ["P2", 38.61, -90.31, 12, "O2", "B1", "G1", "true"],
        ["P3", 38.62, -90.32, 2, "O1", "B2", "G1", "1"],
    ])
    records, report = load_properties(p)
    assert [r.property_id for r in records] == ["P1", "P2", "P3"]
    assert report.admitted == 3
    assert report.excluded_min_units == 0 and report.excluded_non_rental == 0


def test_single_unit_row_is_filtered_and_counted(tmp_path):
    p = tmp_path / "properties.csv"
    _write_props(p, [
        ["P1", 38.6, -90.3, 4, "O1", "B1", "G1", "true"],
        ["P2", 38.61, -90.31, 1, "O2", "B1", "G1", "true"],
    ])
    records, report = load_properties(p, min_units=2)
    assert [r.property_id for r in records] == ["P1"]
    assert report.excluded_min_units == 1
    assert report.excluded_rows == [2]


def test_latitude_out_of_range_names_row_and_field(tmp_path):
    p = tmp_path / "properties.csv"
    _write_props(p, [
        ["P1", 38.6, -90.3, 4, "O1", "B1", "G1", "true"],
        ["P2", 95, -90.3, 4, "O1", "B1", "G1", "true"],
    ])
    with pytest.raises(ValidationError, match=r"row 2.*latitude"):
        load_properties(p)


def test_non_rental_filtered(tmp_path):
    p = tmp_path / "properties.csv"
    _write_props(p, [["P1", 38.6, -90.3, 4, "O1", "B1", "G1", "false"]])
    records, report = load_properties(p)
    assert records == [] and report.excluded_non_rental == 1
    records, _ = load_properties(p, rental_only=False)
    assert len(records) == 1


def test_duplicate_property_rejected(tmp_path):
    p = tmp_path / "properties.csv"
    row = ["P1", 38.6, -90.3, 4, "O1", "B1", "G1", "true"]
    _write_props(p, [row, row])
    with pytest.raises(ValidationError, match="duplicate"):
        load_properties(p)


def test_geopoint_bounds():
    with pytest.raises(ValidationError):
        GeoPoint(91.0, 0.0)
    with pytest.raises(ValidationError):
        GeoPoint(0.0, -181.0)


def test_month_round_trip():
    assert format_month(parse_month("2021-07")) == "2021-07"
    w = PeriodWindow.parse("2021-02", "2021-02")
    assert w.first_day() == dt.date(2021, 2, 1)
    assert w.last_day() == dt.date(2021, 2, 28)
    with pytest.raises(ValidationError):
        PeriodWindow.parse("2021-05", "2021-04")


# --- attorneys ------------------------------------------------------------------


def test_rank_attorneys_ties_by_id(window_2021):
    filings = []
    for att, n in (("C", 3), ("A", 5), ("B", 3)):
        filings += [make_filing(f"{att}{i}", "P1", "2021-03-01", att) for i in range(n)]
    assert rank_attorneys(filings, window_2021) == ["A", "B", "C"]


def test_rank_attorneys_trivial_cases(window_2021):
    assert rank_attorneys([], window_2021) == []
    outside = [make_filing("x", "P1", "2022-03-01", "A")]
    assert rank_attorneys(outside, window_2021) == []
    assert rank_attorneys([make_filing("x", "P1", "2021-03-01", "Z")], window_2021) == ["Z"]


def _ranked_attorneys(n):
    return [f"A{i:03d}" for i in range(1, n + 1)]


def test_owner_attorney_flags_by_rank():
    ranking = _ranked_attorneys(60)
    owner_of = {"P1": "O1", "P2": "O2", "P3": "O3"}
    filings = [
        make_filing("c1", "P1", "2021-02-01", ranking[2]),    # rank 3
        make_filing("c2", "P2", "2021-02-01", ranking[39]),   # rank 40
        make_filing("c3", "P3", "2021-02-01", ranking[54]),   # rank 55, unflagged
    ]
    assert owner_attorney_flags("O1", filings, ranking, owner_of) == (True, False)
    assert owner_attorney_flags("O2", filings, ranking, owner_of) == (False, True)
    assert owner_attorney_flags("O3", filings, ranking, owner_of) == (False, False)
    assert owner_attorney_flags("nobody", filings, ranking, owner_of) == (False, False)


# --- feature construction ---------------------------------------------------------


def test_quarter_partition():
    assert quarter_slices(7) == [(0, 3), (3, 6), (6, 7)]


def test_monthly_and_quarterly_counts(window_2021, label_window_2021):
    props = [make_property("P1"), make_property("P2", block="B2")]
    filings = [
        make_filing("c1", "P1", "2021-02-03"),
        make_filing("c2", "P1", "2021-02-20"),
        make_filing("c3", "P1", "2021-05-11"),
        make_filing("c4", "P2", "2021-09-01"),
    ]
    ds = build_dataset(props, filings, {}, [], window_2021, label_window_2021, "E")
    assert ds.X[0].tolist() == [0, 2, 0, 0, 1, 0, 0, 2, 1, 0]
    assert ds.y.tolist() == [0, 1]
    assert ds.columns == feature_columns("E", 7)


def test_feature_windows_must_precede_labels(window_2021):
    with pytest.raises(ValidationError):
        build_dataset([make_property("P1")], [], {}, [], window_2021, PeriodWindow.parse("2021-06", "2021-08", "label"), "E")


def test_feature_sets_are_nested():
    e, en, eno = (feature_columns(fs, 7) for fs in ("E", "EN", "ENO"))
    assert set(e) < set(en) < set(eno)
    assert en[: len(e)] == e and eno[: len(en)] == en
    with pytest.raises(ValidationError):
        feature_columns("X", 7)


def test_missing_neighborhood_is_imputed_and_counted(window_2021, label_window_2021):
    world = generate_synthetic(SyntheticConfig(n_properties=60), seed=1)
    tables = Tables.from_world(world)
    lonely = dataclasses.replace(tables.properties[0], property_id="ZZZ", block_id="nowhere", block_group_id="nowhere")
    ds = build_dataset(tables.properties + [lonely], tables.filings, tables.neighborhoods, tables.tenures,
                       window_2021, label_window_2021, "EN")
    assert np.isfinite(ds.X).all()
    assert ds.quality["imputed"]
    assert all(v >= 1 for v in ds.quality["imputed"].values())


def test_owner_resolved_from_tenure_on_reference_day(window_2021, label_window_2021):
    props = [make_property("P1", owner="OLD")]
    tenures = [
        OwnerTenure("P1", "OLD", dt.date(2015, 1, 1), dt.date(2021, 3, 31), False, True, "local"),
        OwnerTenure("P1", "NEW", dt.date(2021, 4, 1), None, True, False, "out_of_state"),
    ]
    idx = OwnershipIndex(tenures)
    assert idx.owner_at("P1", dt.date(2021, 3, 31)) == "OLD"
    assert idx.owner_at("P1", dt.date(2021, 4, 1)) == "NEW"
    ds = build_dataset(props, [], {}, tenures, window_2021, label_window_2021, "ENO")
    row = dict(zip(ds.columns, ds.X[0]))
    assert row["owner_is_business"] == 1.0
    assert row["owner_occupied"] == 0.0
    assert row["owner_out_of_state"] == 1.0


def test_eno_row_length(window_2021, label_window_2021):
    world = generate_synthetic(SyntheticConfig(n_properties=80), seed=3)
    t = Tables.from_world(world)
    ds = build_dataset(t.properties, t.filings, t.neighborhoods, t.tenures, window_2021, label_window_2021, "ENO")
    assert ds.X.shape == (len(t.properties), len(feature_columns("ENO", 7)))


# --- base rate ----------------------------------------------------------------------


@pytest.mark.parametrize("positives,expected", [(32, 0.032), (0, 0.0), (19, 0.019)])
def test_base_rate(positives, expected):
    y = np.zeros(1000, dtype=int)
    y[:positives] = 1
    assert base_rate(y) == pytest.approx(expected, abs=1e-15)


def test_base_rate_empty():
    with pytest.raises(ValidationError):
        base_rate(np.array([]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=200))
def test_base_rate_in_unit_interval(labels):
    r = base_rate(np.array(labels))
    assert 0.0 <= r <= 1.0
    assert r == pytest.approx(sum(labels) / len(labels))


# --- synthetic generator ----------------------------------------------------------------


def _dump(world, directory):
    directory.mkdir()
    write_properties(directory / "properties.csv", world.properties)
    write_filings(directory / "filings.csv", world.filings)
    write_neighborhoods(directory / "neighborhoods.csv", world.neighborhoods)
    write_owner_tenures(directory / "owners.csv", world.tenures)
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_synthetic_is_deterministic(tmp_path):
    cfg = SyntheticConfig(n_properties=150)
    a = _dump(generate_synthetic(cfg, seed=7), tmp_path / "a")
    b = _dump(generate_synthetic(cfg, seed=7), tmp_path / "b")
    c = _dump(generate_synthetic(cfg, seed=8), tmp_path / "c")
    assert a == b
    assert a != c


def test_synthetic_round_trips_through_files(tmp_path):
    world = generate_synthetic(SyntheticConfig(n_properties=120), seed=2)
    _dump(world, tmp_path / "d")
    props, filings, neigh, tenures, report = load_dataset_dir(tmp_path / "d")
    admitted = Tables.from_world(world).properties
    assert [p.property_id for p in props] == [p.property_id for p in admitted]
    assert len(filings) == len(world.filings)
    assert set(neigh) == set(world.neighborhoods)
    assert len(tenures) == len(world.tenures)


def test_null_coefficients_match_intercept_rate():
    # With every effect switched off, each property's label is Bernoulli with
    # p_i = 1 - (1 - q)^(3 * units_i); the empirical count must sit within 3
    # binomial standard deviations of the expected count.
    coef = RiskCoefficients(intercept=-6.0, neighborhood=0.0, owner=0.0, business=0.0, out_of_state=0.0,
                            owner_occupied=0.0, property_sd=0.0)
    assert coef.is_null()
    world = generate_synthetic(SyntheticConfig(n_properties=2000, coefficients=coef), seed=11)
    tables = Tables.from_world(world)
    tl = Timeline()
    ds = build_dataset(tables.properties, tables.filings, {}, [], tl.train_feature, tl.train_label, "E")
    units = np.array([p.units for p in tables.properties])
    q = 1.0 / (1.0 + np.exp(6.0))
    p_i = 1.0 - (1.0 - q) ** (3 * units)
    expected = p_i.sum()
    sd = np.sqrt(np.sum(p_i * (1 - p_i)))
    assert abs(ds.y.sum() - expected) <= 3 * sd
    assert implied_label_rate(-6.0, units) == pytest.approx(expected / len(units))
