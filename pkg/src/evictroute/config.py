"""Run configuration: one YAML file, every key optional, unknown keys rejected.

Top-level keys and their defaults::

    seed: 0                      # drives the generator, CV folds, routing restarts, bootstrap
    data_dir: null               # directory holding the four CSV tables; null -> <out>/data
    min_units: 2                 # load-time filter
    rental_only: true
    synthetic: {...}             # SyntheticConfig fields, used by ``gen``
    timeline: {start: "2021-01", feature_months: 7, label_months: 3}
    feature_sets: [E, EN, ENO]
    hyperparams: {E: {...}, EN: {...}, ENO: {...}}   # per-set GBDT settings
    grid: null                   # {param: [values]} -> 5-fold grid search instead
    cv_folds: 5
    score_files: null            # {E: path, ...} to import scores instead of training
    cost: {knock_hours_per_unit: 0.1, speed_table: [{max_miles: 1, mph: 4}, ...]}
    risk_thresholds: [0.05, 0.2, 0.8]
    policies: [{kind: NEO_T_O, control: time}, ...]
    search_mode: bisect          # or incremental
    prior_include_zero: true     # prior-count policy falls back to properties without prior filings
    bootstrap_iterations: 2000
    histogram_buckets: [[2, 4], [5, 9], [10, 24], [25, 49], [50, 99], [100, null]]
    out: out
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .data.features import FEATURE_SETS
from .data.records import ValidationError, parse_month
from .data.synthetic import SyntheticConfig
from .geo_cost import CostParams
from .pipeline import Timeline
from .policies import DEFAULT_POLICIES, PolicySpec
from .risk_model import DEFAULT_HYPERPARAMS, RISK_THRESHOLDS, Hyperparams

DEFAULT_HISTOGRAM_BUCKETS = ((2, 4), (5, 9), (10, 24), (25, 49), (50, 99), (100, None))
SEARCH_MODES = ("bisect", "incremental")


def _default_hyperparams():
    return {k: v for k, v in DEFAULT_HYPERPARAMS.items()}


@dataclass
class RunConfig:
    seed: int = 0
    data_dir: str | None = None
    min_units: int = 2
    rental_only: bool = True
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    timeline: Timeline = field(default_factory=Timeline)
    feature_sets: tuple = FEATURE_SETS
    hyperparams: dict = field(default_factory=_default_hyperparams)
    grid: dict | None = None
    cv_folds: int = 5
    score_files: dict | None = None
    cost: CostParams = field(default_factory=CostParams)
    risk_thresholds: tuple = RISK_THRESHOLDS
    policies: tuple = DEFAULT_POLICIES
    search_mode: str = "bisect"
    prior_include_zero: bool = True
    bootstrap_iterations: int = 2000
    histogram_buckets: tuple = DEFAULT_HISTOGRAM_BUCKETS
    out: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ValidationError("seed must be a non-negative integer")
        if self.min_units < 1:
            raise ValidationError("min_units must be at least 1")
        bad = [s for s in self.feature_sets if s not in FEATURE_SETS]
        if bad or not self.feature_sets:
            raise ValidationError(f"feature_sets must be a non-empty subset of {list(FEATURE_SETS)}")
        missing = [s for s in self.feature_sets if s not in self.hyperparams]
        if missing and not self.grid:
            raise ValidationError(f"no hyperparameters for feature set(s) {missing}")
        if self.cv_folds < 2:
            raise ValidationError("cv_folds must be at least 2")
        t = tuple(self.risk_thresholds)
        if len(t) != 3 or not 0 < t[0] < t[1] < t[2] < 1:
            raise ValidationError("risk_thresholds must be three increasing values inside (0, 1)")
        if self.search_mode not in SEARCH_MODES:
            raise ValidationError(f"search_mode must be one of {SEARCH_MODES}")
        if self.bootstrap_iterations < 100:
            raise ValidationError("bootstrap_iterations must be at least 100")
        if not self.policies:
            raise ValidationError("policies must not be empty")
        _check_buckets(self.histogram_buckets)
        if self.data_dir is None:
            start = self.timeline.train_feature.start_month
            end = self.timeline.test_label.end_month
            s0 = parse_month(self.synthetic.start_month)
            if start < s0 or end > s0 + self.synthetic.n_months - 1:
                raise ValidationError("timeline does not fit inside the synthetic horizon")

    @classmethod
    def from_dict(cls, data: dict | None) -> "RunConfig":
        data = dict(data or {})
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ValidationError(f"unknown config key(s): {', '.join(unknown)}")
        kw = {}
        for key, value in data.items():
            if key == "synthetic":
                kw[key] = SyntheticConfig.from_dict(value)
            elif key == "timeline":
                kw[key] = _timeline_from_dict(value)
            elif key == "hyperparams":
                kw[key] = _hyperparams_from_dict(value)
            elif key == "cost":
                kw[key] = CostParams.from_dict(value)
            elif key == "policies":
                kw[key] = tuple(_policy_from(p) for p in value or ())
            elif key in ("feature_sets", "risk_thresholds"):
                kw[key] = tuple(value)
            elif key == "histogram_buckets":
                kw[key] = tuple((int(lo), None if hi is None else int(hi)) for lo, hi in value)
            else:
                kw[key] = value
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ValidationError(str(exc)) from None

    def as_dict(self) -> dict:
        return {
            "seed": self.seed,
            "data_dir": self.data_dir,
            "min_units": self.min_units,
            "rental_only": self.rental_only,
            "synthetic": self.synthetic.as_dict(),
            "timeline": {k: getattr(self.timeline, k) for k in ("start", "feature_months", "label_months")},
            "feature_sets": list(self.feature_sets),
            "hyperparams": {k: v.as_dict() for k, v in sorted(self.hyperparams.items())},
            "grid": self.grid,
            "cv_folds": self.cv_folds,
            "score_files": self.score_files,
            "cost": self.cost.as_dict(),
            "risk_thresholds": list(self.risk_thresholds),
            "policies": [{"kind": p.kind.value, "control": p.control} for p in self.policies],
            "search_mode": self.search_mode,
            "prior_include_zero": self.prior_include_zero,
            "bootstrap_iterations": self.bootstrap_iterations,
            "histogram_buckets": [list(b) for b in self.histogram_buckets],
            "out": self.out,
        }

    def config_hash(self) -> str:
        """Hash of everything except the output directory."""
        body = self.as_dict()
        body.pop("out")
        text = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def resolved_data_dir(self) -> Path:
        return Path(self.data_dir) if self.data_dir else self.out_dir / "data"


def _check_buckets(buckets) -> None:
    prev_hi = 0
    for i, (lo, hi) in enumerate(buckets):
        if lo <= prev_hi or (hi is not None and hi < lo):
            raise ValidationError("histogram_buckets must be increasing, non-overlapping [low, high] pairs")
        if hi is None and i != len(buckets) - 1:
            raise ValidationError("only the last histogram bucket may be open-ended")
        prev_hi = hi if hi is not None else lo


def _timeline_from_dict(data) -> Timeline:
    data = dict(data or {})
    unknown = sorted(set(data) - {"start", "feature_months", "label_months"})
    if unknown:
        raise ValidationError(f"unknown timeline key(s): {', '.join(unknown)}")
    return Timeline(**data)


def _hyperparams_from_dict(data) -> dict:
    out = {}
    for name, values in (data or {}).items():
        if name not in FEATURE_SETS:
            raise ValidationError(f"hyperparams: unknown feature set {name!r}")
        base = DEFAULT_HYPERPARAMS.get(name, Hyperparams()).as_dict()
        base.update(values or {})
        out[name] = Hyperparams.from_dict(base)
    return {**_default_hyperparams(), **out}


def _policy_from(item) -> PolicySpec:
    if isinstance(item, PolicySpec):
        return item
    if isinstance(item, str):
        kind, _, control = item.partition(":")
        return PolicySpec(kind, control or "time")
    item = dict(item)
    unknown = sorted(set(item) - {"kind", "control"})
    if unknown:
        raise ValidationError(f"unknown policy key(s): {', '.join(unknown)}")
    try:
        return PolicySpec(item["kind"], item.get("control", "time"))
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read a YAML config (or start from defaults) and apply top-level overrides."""
    data = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ValidationError(f"{path}: not valid YAML: {exc}") from None
        if not isinstance(data, dict):
            raise ValidationError(f"{path}: top level must be a mapping")
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return RunConfig.from_dict(data)


def dump_config(config: RunConfig, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config.as_dict(), fh, sort_keys=True, default_flow_style=False)
