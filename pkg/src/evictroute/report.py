"""Report writers: JSON documents, membership overlays, routes and the unit-size histogram.

Every JSON file is written with sorted keys and a trailing newline so two
runs with the same config and seed produce identical bytes. Nothing here
records wall-clock time.
"""

from __future__ import annotations

import csv
import json
import platform
from pathlib import Path

import numba
import numpy as np
import scipy
import yaml

from . import __version__
from .metrics import percent
from .risk_model import RISK_THRESHOLDS, RiskGroup, bin_risk

MEMBERSHIP = ("primary_only", "alternative_only", "both")


def provenance(config) -> dict:
    return {
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "versions": {
            "evictroute": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba.__version__,
            "pyyaml": yaml.__version__,
        },
    }


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False, default=_jsonable)
        fh.write("\n")


def _jsonable(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    raise TypeError(f"cannot serialise {type(value).__name__}")


def membership(primary_ids, alternative_ids) -> dict:
    """Split the union of two visit sets into primary-only, alternative-only and shared ids."""
    a, b = set(primary_ids), set(alternative_ids)
    return {"primary_only": sorted(a - b), "alternative_only": sorted(b - a), "both": sorted(a & b)}


def overlap_stats(primary_ids, alternative_ids) -> dict:
    groups = membership(primary_ids, alternative_ids)
    n_a = len(groups["primary_only"]) + len(groups["both"])
    n_b = len(groups["alternative_only"]) + len(groups["both"])
    both = len(groups["both"])
    return {
        "primary_only": len(groups["primary_only"]),
        "alternative_only": len(groups["alternative_only"]),
        "both": both,
        "primary_total": n_a,
        "alternative_total": n_b,
        "pct_of_primary_shared": percent(both / n_a) if n_a else 0.0,
        "pct_of_alternative_shared": percent(both / n_b) if n_b else 0.0,
    }


def overlay_geojson(primary_plan, alternative_plan, primary_name: str, alternative_name: str) -> dict:
    """Point features for every visited property, tagged by which plan(s) visit it.

    Overlap counts and percentages ride along as members of the feature
    collection so a viewer gets the legend numbers with the map.
    """
    where = {}
    for plan in (primary_plan, alternative_plan):
        for pid, loc in zip(plan.visit_order, plan.locations):
            where[pid] = loc
    groups = membership(primary_plan.visit_order, alternative_plan.visit_order)
    features = []
    for tag in MEMBERSHIP:
        for pid in groups[tag]:
            loc = where[pid]
            features.append({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [loc.longitude, loc.latitude]},
                "properties": {"property_id": pid, "membership": tag},
            })
    return {
        "type": "FeatureCollection",
        "primary": primary_name,
        "alternative": alternative_name,
        "overlap": overlap_stats(primary_plan.visit_order, alternative_plan.visit_order),
        "features": features,
    }


def _bucket_label(lo, hi) -> str:
    return f"{lo}+" if hi is None else f"{lo}-{hi}"


def bucket_of(units: int, buckets):
    for lo, hi in buckets:
        if units >= lo and (hi is None or units <= hi):
            return _bucket_label(lo, hi)
    return None


def risk_histogram(properties, scores, buckets, thresholds=RISK_THRESHOLDS) -> list[dict]:
    """Per unit-size bucket, count and share of properties in each risk group.

    Empty buckets are kept with zero counts and zero shares. Properties whose
    size falls outside every bucket are skipped.
    """
    groups = list(RiskGroup)
    table = {_bucket_label(lo, hi): {g: 0 for g in groups} for lo, hi in buckets}
    for p in properties:
        label = bucket_of(p.units, buckets)
        if label is None or p.property_id not in scores:
            continue
        table[label][bin_risk(scores[p.property_id], thresholds)] += 1
    rows = []
    for (lo, hi) in buckets:
        label = _bucket_label(lo, hi)
        counts = table[label]
        n = sum(counts.values())
        rows.append({
            "bucket": label,
            "min_units": lo,
            "max_units": hi,
            "n": n,
            "counts": {g.name: counts[g] for g in groups},
            "proportions": {g.name: (counts[g] / n if n else 0.0) for g in groups},
        })
    return rows


def write_histogram_csv(path, rows) -> None:
    names = [g.name for g in RiskGroup]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bucket", "n"] + [f"n_{g}" for g in names] + [f"share_{g}" for g in names])
        for r in rows:
            w.writerow([r["bucket"], r["n"]] + [r["counts"][g] for g in names]
                       + [repr(r["proportions"][g]) for g in names])


def route_document(plan, name: str) -> dict:
    body = plan.to_dict()
    body["policy"] = name
    return body
