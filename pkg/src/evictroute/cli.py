"""Command-line entry point.

    evictroute gen            write a synthetic region (four CSV tables + ground truth)
    evictroute train-score    train E/EN/ENO models, score the test window, write metrics
    evictroute metrics        recompute the metric block from existing score files
    evictroute compare        run the outreach policies and write the comparison report
    evictroute risk-histogram risk-group shares by unit-size bucket

Exit codes: 0 success, 1 invalid input or config, 2 any other failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import dump_config, load_config
from .data.io import (
    load_dataset_dir,
    write_filings,
    write_neighborhoods,
    write_owner_tenures,
    write_properties,
)
from .data.records import ValidationError
from .data.synthetic import generate_synthetic
from .metrics import pr_curve, roc_curve, write_curve
from .pipeline import FeatureSetResult, Tables, build_split, metric_block, train_feature_sets
from .policies import POLICY_LABELS, PolicyKind, compare_policies
from .report import (
    overlay_geojson,
    provenance,
    risk_histogram,
    route_document,
    write_histogram_csv,
    write_json,
)
from .risk_model import import_scores, write_scores

log = logging.getLogger("evictroute")


def _echo_config(cfg, verb: str) -> None:
    dump_config(cfg, cfg.out_dir / f"config.{verb}.yaml")


def _load_tables(cfg) -> tuple[Tables, dict]:
    props, filings, nbhd, tenures, report = load_dataset_dir(cfg.resolved_data_dir, cfg.min_units, cfg.rental_only)
    if not props:
        raise ValidationError("no property passes the unit and rental filters")
    return Tables(props, filings, nbhd, tenures), report.as_dict()


def cmd_gen(cfg) -> None:
    world = generate_synthetic(cfg.synthetic, cfg.seed)
    data = cfg.resolved_data_dir
    data.mkdir(parents=True, exist_ok=True)
    write_properties(data / "properties.csv", world.properties)
    write_filings(data / "filings.csv", world.filings)
    write_neighborhoods(data / "neighborhoods.csv", world.neighborhoods)
    write_owner_tenures(data / "owners.csv", world.tenures)
    write_json(data / "ground_truth.json", {**world.truth, "provenance": provenance(cfg)})
    _echo_config(cfg, "gen")
    print(f"wrote {len(world.properties)} properties and {len(world.filings)} filings to {data}")


def _score_path(cfg, fs: str) -> Path:
    if cfg.score_files and fs in cfg.score_files:
        return Path(cfg.score_files[fs])
    return cfg.out_dir / "scores" / f"{fs}.csv"


def _imported_results(cfg, tables) -> dict:
    """Scores read from disk, lined up against freshly built test labels."""
    results = {}
    for fs in cfg.feature_sets:
        _, test = build_split(tables, cfg.timeline, fs)
        path = _score_path(cfg, fs)
        if not path.exists():
            raise ValidationError(f"score file for {fs} not found: {path}")
        scores, rejected = import_scores(path, set(test.property_ids))
        if rejected:
            log.warning("%s: %d scored ids are not admitted properties", path, len(rejected))
        missing = [pid for pid in test.property_ids if pid not in scores]
        if missing:
            raise ValidationError(f"{path}: {len(missing)} admitted properties have no score (first: {missing[0]})")
        arr = np.array([scores[pid] for pid in test.property_ids])
        results[fs] = FeatureSetResult(fs, None, None, None, test, arr)
    return results


def _write_metrics(cfg, results, quality, extra=None) -> dict:
    block = metric_block(results, cfg.bootstrap_iterations, cfg.seed)
    curves = cfg.out_dir / "curves"
    curves.mkdir(parents=True, exist_ok=True)
    for fs, r in results.items():
        y = r.test.y
        if 0 < y.sum() < len(y):
            write_curve(curves / f"{fs}_roc.csv", roc_curve(r.scores, y), "fpr", "tpr")
            write_curve(curves / f"{fs}_pr.csv", pr_curve(r.scores, y), "recall", "precision")
    doc = {
        "metrics": block,
        "timeline": cfg.timeline.as_dict(),
        "data_quality": quality,
        "provenance": provenance(cfg),
        **(extra or {}),
    }
    write_json(cfg.out_dir / "metrics.json", doc)
    return doc


def _write_labels(path, property_ids, labels) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["property_id", "label"])
        w.writerows(zip(property_ids, (int(v) for v in labels)))


def cmd_train_score(cfg) -> None:
    tables, load_report = _load_tables(cfg)
    if cfg.score_files:
        results = _imported_results(cfg, tables)
        extra = {"scores_source": "imported"}
    else:
        results = train_feature_sets(tables, cfg.timeline, cfg.hyperparams, cfg.grid, cfg.cv_folds, cfg.seed,
                                     cfg.feature_sets)
        models = cfg.out_dir / "models"
        models.mkdir(parents=True, exist_ok=True)
        for fs, r in results.items():
            r.model.save(models / f"{fs}.json")
        extra = {
            "scores_source": "trained",
            "hyperparams": {fs: r.hyperparams.as_dict() for fs, r in results.items()},
            "grid_search": {fs: r.grid_table for fs, r in results.items() if r.grid_table},
        }
    scores_dir = cfg.out_dir / "scores"
    scores_dir.mkdir(parents=True, exist_ok=True)
    for fs, r in results.items():
        if not cfg.score_files:
            write_scores(scores_dir / f"{fs}.csv", r.test.property_ids, r.scores)
        _write_labels(scores_dir / f"{fs}_labels.csv", r.test.property_ids, r.test.y)
    quality = {"load": load_report, **{fs: r.test.quality for fs, r in results.items()}}
    doc = _write_metrics(cfg, results, quality, extra)
    _echo_config(cfg, "train-score")
    for fs, entry in doc["metrics"]["feature_sets"].items():
        print(f"{fs:>3}  base rate {entry['base_rate']:.3f}  ROC AUC {entry.get('roc_auc', float('nan')):.3f}"
              f"  PR AUC {entry.get('pr_auc', float('nan')):.3f}")


def cmd_metrics(cfg) -> None:
    tables, load_report = _load_tables(cfg)
    results = _imported_results(cfg, tables)
    quality = {"load": load_report, **{fs: r.test.quality for fs, r in results.items()}}
    doc = _write_metrics(cfg, results, quality, {"scores_source": "imported"})
    _echo_config(cfg, "metrics")
    for c in doc["metrics"]["comparisons"]:
        print(f"{c['a']} vs {c['b']}: DeLong p = {c['delong_p']:.3g}, PR bootstrap p = {c['pr_bootstrap_p']:.3g}")


def _score_maps(cfg, tables) -> dict:
    ids = {p.property_id for p in tables.properties}
    out = {}
    for fs in cfg.feature_sets:
        path = _score_path(cfg, fs)
        if not path.exists():
            raise ValidationError(f"score file for {fs} not found: {path} (run train-score first)")
        out[fs], _ = import_scores(path, ids)
    return out


def _slug(name: str) -> str:
    return name.replace(":", "_")


def cmd_compare(cfg) -> None:
    tables, _ = _load_tables(cfg)
    scores = _score_maps(cfg, tables)
    if "ENO" not in scores:
        raise ValidationError("the ENO score file is required to build the NEO-T-O budget")
    rep = compare_policies(cfg.policies, tables.properties, scores, tables.filings, cfg.timeline.prior,
                           cfg.timeline.test_label, cfg.cost, cfg.seed, cfg.risk_thresholds,
                           cfg.search_mode, cfg.prior_include_zero)
    out = cfg.out_dir / "report"
    out.mkdir(parents=True, exist_ok=True)
    doc = rep.as_dict()
    metrics_path = cfg.out_dir / "metrics.json"
    if metrics_path.exists():
        with open(metrics_path, encoding="utf-8") as fh:
            doc["metrics"] = json.load(fh)["metrics"]
    doc["timeline"] = cfg.timeline.as_dict()
    doc["provenance"] = provenance(cfg)

    neo_name = next((s.name for s in rep.specs if s.kind is PolicyKind.NEO_T_O), None)
    neo_plan = rep.plans.get(neo_name)
    overlaps = {}
    for spec in rep.specs:
        plan = rep.plans[spec.name]
        write_json(cfg.out_dir / "routes" / f"{_slug(spec.name)}.json", route_document(plan, spec.name))
        write_json(cfg.out_dir / "routes" / f"{_slug(spec.name)}.geojson",
                   plan.to_geojson(policy=POLICY_LABELS[spec.kind], control=spec.control))
        if neo_plan is not None and spec.name != neo_name:
            overlay = overlay_geojson(neo_plan, plan, neo_name, spec.name)
            write_json(out / f"overlay_{_slug(spec.name)}.geojson", overlay)
            overlaps[spec.name] = overlay["overlap"]
    doc["overlap_with_neo_t_o"] = overlaps
    write_json(out / "comparison.json", doc)
    (out / "comparison.txt").write_text(rep.table(), encoding="utf-8")
    _echo_config(cfg, "compare")
    print(rep.table(), end="")


def cmd_risk_histogram(cfg, feature_set: str = "ENO") -> None:
    tables, _ = _load_tables(cfg)
    path = _score_path(cfg, feature_set)
    if not path.exists():
        raise ValidationError(f"score file for {feature_set} not found: {path}")
    scores, _ = import_scores(path, {p.property_id for p in tables.properties})
    rows = risk_histogram(tables.properties, scores, cfg.histogram_buckets, cfg.risk_thresholds)
    out = cfg.out_dir / "report"
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "risk_histogram.json", {"feature_set": feature_set, "buckets": rows, "provenance": provenance(cfg)})
    write_histogram_csv(out / "risk_histogram.csv", rows)
    _echo_config(cfg, "risk-histogram")
    for r in rows:
        shares = "  ".join(f"{g} {v:.3f}" for g, v in r["proportions"].items())
        print(f"{r['bucket']:>7}  n={r['n']:<5} {shares}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run config")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--data-dir", help="directory with the four CSV tables (default: <out>/data)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="evictroute", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic region")
    p.add_argument("--n-properties", type=int, help="number of synthetic properties")

    p = sub.add_parser("train-score", parents=[common], help="train models and score the test window")
    p.add_argument("--feature-sets", nargs="+", choices=["E", "EN", "ENO"])
    p.add_argument("--bootstrap-iterations", type=int)

    p = sub.add_parser("metrics", parents=[common], help="metric block from existing score files")
    p.add_argument("--feature-sets", nargs="+", choices=["E", "EN", "ENO"])
    p.add_argument("--bootstrap-iterations", type=int)

    p = sub.add_parser("compare", parents=[common], help="run and compare outreach policies")
    p.add_argument("--search-mode", choices=["bisect", "incremental"])
    p.add_argument("--policies", nargs="+", metavar="KIND[:CONTROL]",
                   help="e.g. NEO_T_O PriorEvictionCount:units NeighborhoodCanvass:time")

    p = sub.add_parser("risk-histogram", parents=[common], help="risk-group shares by unit-size bucket")
    p.add_argument("--feature-set", default="ENO", choices=["E", "EN", "ENO"])
    return parser


def _overrides(args) -> dict:
    over = {"seed": args.seed, "out": args.out, "data_dir": args.data_dir}
    if getattr(args, "feature_sets", None):
        over["feature_sets"] = args.feature_sets
    if getattr(args, "bootstrap_iterations", None) is not None:
        over["bootstrap_iterations"] = args.bootstrap_iterations
    if getattr(args, "search_mode", None):
        over["search_mode"] = args.search_mode
    if getattr(args, "policies", None):
        over["policies"] = args.policies
    return over


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        if getattr(args, "n_properties", None) is not None:
            synthetic = dataclasses.replace(cfg.synthetic, n_properties=args.n_properties)
            synthetic.validate()
            cfg = cfg.replace(synthetic=synthetic)
        if args.verb == "gen":
            cmd_gen(cfg)
        elif args.verb == "train-score":
            cmd_train_score(cfg)
        elif args.verb == "metrics":
            cmd_metrics(cfg)
        elif args.verb == "compare":
            cmd_compare(cfg)
        elif args.verb == "risk-histogram":
            cmd_risk_histogram(cfg, args.feature_set)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        log.debug("unhandled error", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
