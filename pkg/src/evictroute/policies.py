"""Outreach policies and their evaluation against held-out filings.

NEO-T-O visits every property whose full-feature risk score falls in the
Medium or High group; its route time and unit total become the budgets the
other policies are held to.
"""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum

from .data.records import ValidationError
from .geo_cost import CostParams, geodesic_miles, leg_time
from .metrics import discovery_rate, lift, percent, round_half_up
from .risk_model import RISK_THRESHOLDS, RiskGroup, bin_risk
from .routing import RoutePlan, route_tsp, select_topk_within_time, select_within_units

log = logging.getLogger(__name__)


class PolicyKind(str, Enum):
    NEO_T_O = "NEO_T_O"
    RS_EVICTION_ONLY = "RS_EvictionOnly"
    RS_EVICTION_NEIGHBORHOOD = "RS_EvictionNeighborhood"
    PRIOR_EVICTION_COUNT = "PriorEvictionCount"
    NEIGHBORHOOD_CANVASS = "NeighborhoodCanvass"


POLICY_LABELS = {
    PolicyKind.NEO_T_O: "NEO-T-O",
    PolicyKind.RS_EVICTION_ONLY: "Eviction Features",
    PolicyKind.RS_EVICTION_NEIGHBORHOOD: "Eviction and Neighborhood Features",
    PolicyKind.PRIOR_EVICTION_COUNT: "Previous Eviction Count",
    PolicyKind.NEIGHBORHOOD_CANVASS: "Neighborhood Based",
}

# Score map each risk-score policy ranks by.
POLICY_FEATURE_SET = {
    PolicyKind.NEO_T_O: "ENO",
    PolicyKind.RS_EVICTION_ONLY: "E",
    PolicyKind.RS_EVICTION_NEIGHBORHOOD: "EN",
}


@dataclass(frozen=True)
class PolicySpec:
    kind: PolicyKind
    control: str = "time"

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if self.control not in ("time", "units"):
            raise ValidationError(f"control must be 'time' or 'units', got {self.control!r}")
        if self.kind in (PolicyKind.RS_EVICTION_ONLY, PolicyKind.RS_EVICTION_NEIGHBORHOOD) and self.control != "time":
            raise ValidationError(f"{self.kind.value} is time-controlled only")

    @property
    def name(self) -> str:
        return f"{self.kind.value}:{self.control}"


DEFAULT_POLICIES = (
    PolicySpec(PolicyKind.NEO_T_O, "time"),
    PolicySpec(PolicyKind.RS_EVICTION_ONLY, "time"),
    PolicySpec(PolicyKind.RS_EVICTION_NEIGHBORHOOD, "time"),
    PolicySpec(PolicyKind.PRIOR_EVICTION_COUNT, "time"),
    PolicySpec(PolicyKind.PRIOR_EVICTION_COUNT, "units"),
    PolicySpec(PolicyKind.NEIGHBORHOOD_CANVASS, "time"),
    PolicySpec(PolicyKind.NEIGHBORHOOD_CANVASS, "units"),
)


@dataclass(frozen=True)
class Budget:
    kind: str
    limit: float

    def __post_init__(self):
        if self.kind not in ("time", "units"):
            raise ValidationError(f"budget kind must be 'time' or 'units', got {self.kind!r}")
        if not self.limit > 0:
            raise ValidationError("budget limit must be positive")


@dataclass
class PolicyOutcome:
    policy: str
    control: str
    evictions_discovered: int
    filings_discovered: int
    properties_visited: int
    units_visited: int
    outreach_time: float
    normalized_time: float
    discovery_rate: float
    rate_defined: bool = True

    def as_dict(self) -> dict:
        return {
            "policy": self.policy,
            "control": self.control,
            "normalized_time": self.normalized_time,
            "evictions_discovered": self.evictions_discovered,
            "filings_discovered": self.filings_discovered,
            "properties_visited": self.properties_visited,
            "units_visited": self.units_visited,
            "outreach_time_hours": self.outreach_time,
            "discovery_rate": self.discovery_rate,
            "discovery_rate_pct": percent(self.discovery_rate),
            "rate_defined": self.rate_defined,
        }


def _stop(p):
    return (p.property_id, p.location, p.units)


def plan_neo_t_o(scores, properties, params: CostParams = CostParams(), seed: int = 0,
                 thresholds=RISK_THRESHOLDS) -> RoutePlan:
    """Route every Medium- or High-risk property."""
    missing = [p.property_id for p in properties if p.property_id not in scores]
    if missing:
        raise ValidationError(f"{len(missing)} properties have no risk score (first: {missing[0]})")
    targets = sorted(
        (p for p in properties if bin_risk(scores[p.property_id], thresholds) >= RiskGroup.Medium),
        key=lambda p: p.property_id,
    )
    if not targets:
        raise ValidationError("no property falls in the Medium or High risk group; NEO-T-O target set is empty")
    return route_tsp([_stop(p) for p in targets], params, seed)


def rank_by_score(scores, properties) -> list:
    return sorted(properties, key=lambda p: (-scores[p.property_id], p.property_id))


def plan_rs_budgeted(scores, budget_hours: float, properties, params: CostParams = CostParams(), seed: int = 0,
                     mode: str = "incremental") -> RoutePlan:
    """Highest-scoring prefix that can be routed within ``budget_hours``."""
    ranked = rank_by_score(scores, properties)
    _, plan = select_topk_within_time([_stop(p) for p in ranked], budget_hours, params, seed, mode=mode)
    return plan


def prior_counts(filings, window) -> Counter:
    return Counter(f.property_id for f in filings if window.contains(f.filing_date))


def rank_by_prior_count(filings, prior_window, properties, include_zero: bool = False) -> list:
    """Most prior-window filings first, then more units, then id.

    Properties without a prior filing are left out unless ``include_zero``,
    in which case they follow every property that has one, in id order:
    with no filing to go on, size is not used as a proxy for risk.
    """
    counts = prior_counts(filings, prior_window)
    ranked = sorted((p for p in properties if counts.get(p.property_id, 0) > 0),
                    key=lambda p: (-counts[p.property_id], -p.units, p.property_id))
    if include_zero:
        ranked += sorted((p for p in properties if counts.get(p.property_id, 0) == 0), key=lambda p: p.property_id)
    return ranked


def _budgeted_prefix_plan(ranked, budget: Budget, params, seed, mode="incremental") -> RoutePlan:
    stops = [_stop(p) for p in ranked]
    if not stops:
        return RoutePlan()
    if budget.kind == "time":
        _, plan = select_topk_within_time(stops, budget.limit, params, seed, mode=mode)
        return plan
    chosen = select_within_units(stops, int(budget.limit))
    return route_tsp(chosen, params, seed) if chosen else RoutePlan()


def plan_prior_count(filings, prior_window, budget: Budget, properties, params: CostParams = CostParams(),
                     seed: int = 0, test_window=None, include_zero: bool = False,
                     mode: str = "incremental") -> RoutePlan:
    if test_window is not None and prior_window.overlaps(test_window):
        raise ValidationError("prior window overlaps the test window")
    ranked = rank_by_prior_count(filings, prior_window, properties, include_zero)
    if not any(prior_counts(filings, prior_window).get(p.property_id, 0) for p in ranked):
        log.warning("no property has a filing in the prior window; prior-count plan is empty")
        return RoutePlan()
    return _budgeted_prefix_plan(ranked, budget, params, seed, mode)


def rank_block_groups(filings, prior_window, properties) -> list:
    counts = prior_counts(filings, prior_window)
    group_counts = Counter()
    for p in properties:
        group_counts[p.block_group_id] += counts.get(p.property_id, 0)
    return sorted(group_counts, key=lambda g: (-group_counts[g], g))


def plan_neighborhood(filings, prior_window, budget: Budget, properties, params: CostParams = CostParams(),
                      seed: int = 0, test_window=None) -> RoutePlan:
    """Canvass whole block groups in descending prior-filing order.

    Each group is routed on its own; consecutive groups are joined by one
    leg. When a group no longer fits, its tour is followed until the next
    property would break the budget, and planning stops there.
    """
    if test_window is not None and prior_window.overlaps(test_window):
        raise ValidationError("prior window overlaps the test window")
    members = defaultdict(list)
    for p in properties:
        if not p.block_group_id:
            raise ValidationError(f"property {p.property_id} has no block group")
        members[p.block_group_id].append(p)

    order, legs, knocks, locations, units = [], [], [], [], []

    def fits(new_legs, new_knocks, new_units):
        if budget.kind == "time":
            return math.fsum(legs + new_legs) + math.fsum(knocks + new_knocks) <= budget.limit
        return sum(units) + sum(new_units) <= budget.limit

    for group in rank_block_groups(filings, prior_window, properties):
        group_props = sorted(members[group], key=lambda p: p.property_id)
        tour = route_tsp([_stop(p) for p in group_props], params, seed)
        connect = [leg_time(geodesic_miles(locations[-1], tour.locations[0]), params)] if locations else []
        if fits(connect + tour.leg_times, tour.knock_times, tour.units):
            legs.extend(connect + tour.leg_times)
            order.extend(tour.visit_order)
            knocks.extend(tour.knock_times)
            locations.extend(tour.locations)
            units.extend(tour.units)
            continue
        # partial final group, following the group's own tour
        for i, pid in enumerate(tour.visit_order):
            leg = connect if i == 0 else [tour.leg_times[i - 1]]
            if not fits(leg, [tour.knock_times[i]], [tour.units[i]]):
                break
            legs.extend(leg)
            order.append(pid)
            knocks.append(tour.knock_times[i])
            locations.append(tour.locations[i])
            units.append(tour.units[i])
        break

    return RoutePlan(
        visit_order=order, leg_times=legs, knock_times=knocks,
        total_time=math.fsum(legs) + math.fsum(knocks), total_units=sum(units),
        total_properties=len(order), locations=locations, units=units,
    )


def evaluate_policy(plan: RoutePlan, test_filings, test_window, reference_time: float | None = None,
                    policy: str = "", control: str = "time") -> PolicyOutcome:
    """Count visited properties (and raw filings) with a filing in ``test_window``."""
    visited = set(plan.visit_order)
    hits = Counter(f.property_id for f in test_filings if f.property_id in visited and test_window.contains(f.filing_date))
    n_props = len(plan.visit_order)
    discovered = len(hits)
    rate_defined = n_props > 0
    rate = discovery_rate(discovered, n_props) if rate_defined else 0.0
    if reference_time is None:
        normalized = 1.0 if plan.total_time > 0 else 0.0
    else:
        normalized = plan.total_time / reference_time if reference_time > 0 else 0.0
    return PolicyOutcome(
        policy=policy, control=control, evictions_discovered=discovered,
        filings_discovered=int(sum(hits.values())), properties_visited=n_props,
        units_visited=sum(plan.units), outreach_time=plan.total_time,
        normalized_time=normalized, discovery_rate=rate, rate_defined=rate_defined,
    )


@dataclass
class ComparisonReport:
    outcomes: list
    plans: dict
    lifts: dict
    budgets: dict
    specs: list = field(default_factory=list)

    COLUMNS = ("Routing Policy", "Control", "Normalized Outreach Time", "Evictions Discovered",
               "Properties Visited", "Units Visited", "Eviction Discovery Rate")

    def rows(self) -> list[list[str]]:
        out = []
        for o in self.outcomes:
            out.append([
                o.policy, o.control.capitalize() if o.control == "time" else "Unit",
                f"{o.normalized_time:.2f}", f"{o.evictions_discovered:,}", f"{o.properties_visited:,}",
                f"{o.units_visited:,}", f"{percent(o.discovery_rate):.1f}%",
            ])
        return out

    def table(self) -> str:
        rows = [list(self.COLUMNS)] + self.rows()
        widths = [max(len(r[i]) for r in rows) for i in range(len(self.COLUMNS))]
        lines = []
        for k, r in enumerate(rows):
            lines.append("  ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))))
            if k == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        return {
            "columns": list(self.COLUMNS),
            "budgets": self.budgets,
            "outcomes": [o.as_dict() for o in self.outcomes],
            "neo_t_o_lift_pct": self.lifts,
        }


def compare_policies(specs, properties, scores_by_set, filings, prior_window, test_window,
                     params: CostParams = CostParams(), seed: int = 0, thresholds=RISK_THRESHOLDS,
                     search_mode: str = "incremental", prior_include_zero: bool = False) -> ComparisonReport:
    """Run each policy against the NEO-T-O budget and tabulate the outcomes.

    ``scores_by_set`` maps feature-set names ("E", "EN", "ENO") to
    property-id -> score maps. ``search_mode`` picks the top-k search used
    by time-controlled ranked policies. Lifts are percentages of NEO-T-O's evictions
    discovered over each other policy, rounded half-up to one decimal.
    """
    specs = [s if isinstance(s, PolicySpec) else PolicySpec(*s) for s in specs]
    if test_window.overlaps(prior_window):
        raise ValidationError("prior window overlaps the test window")
    test_filings = [f for f in filings if test_window.contains(f.filing_date)]
    neo = plan_neo_t_o(scores_by_set["ENO"], properties, params, seed, thresholds)
    budgets = {"time_hours": neo.total_time, "units": neo.total_units}
    plans = {}
    outcomes = []
    for spec in specs:
        if spec.kind is PolicyKind.NEO_T_O:
            plan = neo
        elif spec.kind in (PolicyKind.RS_EVICTION_ONLY, PolicyKind.RS_EVICTION_NEIGHBORHOOD):
            plan = plan_rs_budgeted(scores_by_set[POLICY_FEATURE_SET[spec.kind]], neo.total_time, properties, params,
                                    seed, search_mode)
        else:
            budget = Budget("time", neo.total_time) if spec.control == "time" else Budget("units", neo.total_units)
            if spec.kind is PolicyKind.PRIOR_EVICTION_COUNT:
                plan = plan_prior_count(filings, prior_window, budget, properties, params, seed, test_window,
                                        prior_include_zero, search_mode)
            else:
                plan = plan_neighborhood(filings, prior_window, budget, properties, params, seed, test_window)
        plans[spec.name] = plan
        outcomes.append(evaluate_policy(plan, test_filings, test_window, neo.total_time,
                                        POLICY_LABELS[spec.kind], spec.control))
    neo_outcome = next((o for o, s in zip(outcomes, specs) if s.kind is PolicyKind.NEO_T_O), None)
    if neo_outcome is None:
        neo_outcome = evaluate_policy(neo, test_filings, test_window, neo.total_time, POLICY_LABELS[PolicyKind.NEO_T_O])
    lifts = {}
    for spec, o in zip(specs, outcomes):
        if spec.kind is not PolicyKind.NEO_T_O:
            lifts[spec.name] = round_half_up(lift(neo_outcome.evictions_discovered, o.evictions_discovered))
    return ComparisonReport(outcomes, plans, lifts, budgets, specs)
