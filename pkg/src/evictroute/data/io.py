"""CSV readers and writers for the four input tables.

Column layouts::

    properties.csv    property_id,latitude,longitude,units,owner_id,block_id,block_group_id,is_rental
    filings.csv       case_id,property_id,filing_date,attorney_id
    neighborhoods.csv geo_level,geo_id,<one column per neighborhood field>
    owners.csv        property_id,owner_id,start_date,end_date,is_business,is_owner_occupied,location_class

Empty cells mean "missing" for neighborhood fields, "open" for ``end_date`` and
"unknown" for ``attorney_id``.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path

from .records import (
    NEIGHBORHOOD_FIELDS,
    EvictionFiling,
    GeoPoint,
    NeighborhoodAttributes,
    OwnerTenure,
    PropertyRecord,
    ValidationError,
)

PROPERTY_COLUMNS = ("property_id", "latitude", "longitude", "units", "owner_id", "block_id", "block_group_id", "is_rental")
FILING_COLUMNS = ("case_id", "property_id", "filing_date", "attorney_id")
NEIGHBORHOOD_COLUMNS = ("geo_level", "geo_id") + NEIGHBORHOOD_FIELDS
OWNER_COLUMNS = ("property_id", "owner_id", "start_date", "end_date", "is_business", "is_owner_occupied", "location_class")

_TRUE = {"1", "true", "t", "yes", "y"}
_FALSE = {"0", "false", "f", "no", "n"}


@dataclass
class LoadReport:
    rows_read: int = 0
    admitted: int = 0
    excluded_min_units: int = 0
    excluded_non_rental: int = 0
    excluded_rows: list = field(default_factory=list)
    known_ids: set = field(default_factory=set, repr=False)

    def as_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "admitted": self.admitted,
            "excluded_min_units": self.excluded_min_units,
            "excluded_non_rental": self.excluded_non_rental,
            "excluded_rows": list(self.excluded_rows),
        }


def _parse_bool(text: str, row: int, name: str) -> bool:
    value = text.strip().lower()
    if value in _TRUE:
        return True
    if value in _FALSE:
        return False
    raise ValidationError(f"row {row}: field {name!r} is not a boolean: {text!r}")


def _parse_date(text: str, row: int, name: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise ValidationError(f"row {row}: field {name!r} is not an ISO date: {text!r}") from None


def _reader(path, required):
    handle = open(path, newline="", encoding="utf-8")
    reader = csv.DictReader(handle)
    missing = [c for c in required if c not in (reader.fieldnames or [])]
    if missing:
        handle.close()
        raise ValidationError(f"{path}: missing required column(s) {', '.join(missing)}")
    return handle, reader


def load_properties(path, min_units: int = 2, rental_only: bool = True):
    """Read and validate the property table.

    Returns ``(records, report)``. Rows that parse but fail the unit/rental
    filters are dropped and counted in the report; rows that fail to parse or
    violate an invariant raise :class:`ValidationError` naming the row (1-based,
    header excluded) and field.
    """
    report = LoadReport()
    records: list[PropertyRecord] = []
    seen: set[str] = set()
    handle, reader = _reader(path, PROPERTY_COLUMNS)
    with handle:
        for row_no, row in enumerate(reader, start=1):
            report.rows_read += 1
            pid = row["property_id"].strip()
            if not pid:
                raise ValidationError(f"row {row_no}: field 'property_id' is empty")
            if pid in seen:
                raise ValidationError(f"row {row_no}: duplicate property_id {pid!r}")
            seen.add(pid)
            report.known_ids.add(pid)
            values = {}
            for name in ("latitude", "longitude"):
                try:
                    values[name] = float(row[name])
                except ValueError:
                    raise ValidationError(f"row {row_no}: field {name!r} is not a number: {row[name]!r}") from None
            if not -90.0 <= values["latitude"] <= 90.0:
                raise ValidationError(f"row {row_no}: field 'latitude' out of range: {values['latitude']}")
            if not -180.0 <= values["longitude"] <= 180.0:
                raise ValidationError(f"row {row_no}: field 'longitude' out of range: {values['longitude']}")
            try:
                units = int(row["units"])
            except ValueError:
                raise ValidationError(f"row {row_no}: field 'units' is not an integer: {row['units']!r}") from None
            if units < 1:
                raise ValidationError(f"row {row_no}: field 'units' must be positive, got {units}")
            is_rental = _parse_bool(row["is_rental"], row_no, "is_rental")
            for name in ("owner_id", "block_id", "block_group_id"):
                if not row[name].strip():
                    raise ValidationError(f"row {row_no}: field {name!r} is empty")

            if units < min_units:
                report.excluded_min_units += 1
                report.excluded_rows.append(row_no)
                continue
            if rental_only and not is_rental:
                report.excluded_non_rental += 1
                report.excluded_rows.append(row_no)
                continue
            records.append(
                PropertyRecord(
                    property_id=pid,
                    location=GeoPoint(values["latitude"], values["longitude"]),
                    units=units,
                    owner_id=row["owner_id"].strip(),
                    block_id=row["block_id"].strip(),
                    block_group_id=row["block_group_id"].strip(),
                    is_rental=is_rental,
                )
            )
    report.admitted = len(records)
    return records, report


def admit_properties(records, min_units: int = 2, rental_only: bool = True) -> list[PropertyRecord]:
    """In-memory version of the load-time unit and rental filters."""
    return [p for p in records if p.units >= min_units and (p.is_rental or not rental_only)]


def load_filings(path, known_properties=None) -> list[EvictionFiling]:
    """Read filings; every property_id must be in ``known_properties`` when given."""
    filings = []
    seen = set()
    handle, reader = _reader(path, FILING_COLUMNS)
    with handle:
        for row_no, row in enumerate(reader, start=1):
            case_id = row["case_id"].strip()
            if case_id in seen:
                raise ValidationError(f"row {row_no}: duplicate case_id {case_id!r}")
            seen.add(case_id)
            pid = row["property_id"].strip()
            if known_properties is not None and pid not in known_properties:
                raise ValidationError(f"row {row_no}: unknown property_id {pid!r}")
            attorney = row["attorney_id"].strip() or None
            filings.append(EvictionFiling(case_id, pid, _parse_date(row["filing_date"], row_no, "filing_date"), attorney))
    return filings


def load_neighborhoods(path) -> dict:
    """Read neighborhood attributes keyed by ``(geo_level, geo_id)``."""
    out = {}
    handle, reader = _reader(path, ("geo_level", "geo_id"))
    with handle:
        for row_no, row in enumerate(reader, start=1):
            level = row["geo_level"].strip()
            if level not in ("block", "block_group"):
                raise ValidationError(f"row {row_no}: field 'geo_level' must be block or block_group, got {level!r}")
            values = {}
            for name in NEIGHBORHOOD_FIELDS:
                text = (row.get(name) or "").strip()
                if not text:
                    continue
                try:
                    values[name] = float(text)
                except ValueError:
                    raise ValidationError(f"row {row_no}: field {name!r} is not a number: {text!r}") from None
                if name.startswith("pct_") and not 0.0 <= values[name] <= 1.0:
                    raise ValidationError(f"row {row_no}: field {name!r} outside [0, 1]: {values[name]}")
            key = (level, row["geo_id"].strip())
            if key in out:
                raise ValidationError(f"row {row_no}: duplicate {level} {key[1]!r}")
            out[key] = NeighborhoodAttributes(level, key[1], values)
    return out


def load_owner_tenures(path) -> list[OwnerTenure]:
    tenures = []
    handle, reader = _reader(path, OWNER_COLUMNS)
    with handle:
        for row_no, row in enumerate(reader, start=1):
            end = row["end_date"].strip()
            try:
                tenures.append(
                    OwnerTenure(
                        property_id=row["property_id"].strip(),
                        owner_id=row["owner_id"].strip(),
                        start=_parse_date(row["start_date"], row_no, "start_date"),
                        end=_parse_date(end, row_no, "end_date") if end else None,
                        is_business=_parse_bool(row["is_business"], row_no, "is_business"),
                        is_owner_occupied=_parse_bool(row["is_owner_occupied"], row_no, "is_owner_occupied"),
                        location_class=row["location_class"].strip(),
                    )
                )
            except ValidationError as exc:
                if str(exc).startswith("row "):
                    raise
                raise ValidationError(f"row {row_no}: {exc}") from None
    return tenures


def _bool_text(value: bool) -> str:
    return "true" if value else "false"


def write_properties(path, properties) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROPERTY_COLUMNS)
        for p in properties:
            w.writerow([
                p.property_id, repr(p.location.latitude), repr(p.location.longitude), p.units,
                p.owner_id, p.block_id, p.block_group_id, _bool_text(p.is_rental),
            ])


def write_filings(path, filings) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FILING_COLUMNS)
        for f in filings:
            w.writerow([f.case_id, f.property_id, f.filing_date.isoformat(), f.attorney_id or ""])


def write_neighborhoods(path, neighborhoods) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NEIGHBORHOOD_COLUMNS)
        for key in sorted(neighborhoods):
            attrs = neighborhoods[key]
            w.writerow([attrs.geo_level, attrs.geo_id] + [
                "" if attrs.values.get(name) is None else repr(float(attrs.values[name])) for name in NEIGHBORHOOD_FIELDS
            ])


def write_owner_tenures(path, tenures) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OWNER_COLUMNS)
        for t in tenures:
            w.writerow([
                t.property_id, t.owner_id, t.start.isoformat(), t.end.isoformat() if t.end else "",
                _bool_text(t.is_business), _bool_text(t.is_owner_occupied), t.location_class,
            ])


def load_dataset_dir(directory, min_units: int = 2, rental_only: bool = True):
    """Load the four standard files from one directory."""
    directory = Path(directory)
    properties, report = load_properties(directory / "properties.csv", min_units, rental_only)
    filings = load_filings(directory / "filings.csv", report.known_ids)
    neighborhoods = load_neighborhoods(directory / "neighborhoods.csv")
    tenures = load_owner_tenures(directory / "owners.csv")
    return properties, filings, neighborhoods, tenures, report
