"""Coalition costs, resource contributions and Shapley cost allocation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .instance import Instance, serviceable_set
from .schedule import Solution

Solver = Callable[[Instance], Solution]


@dataclass(frozen=True)
class Contribution:
    rho1: float
    rho2: float
    rho3: float
    rho: float

    @property
    def rho_prime(self) -> float:
        return self.rho1 + self.rho2 + self.rho3


@dataclass
class CharacteristicFunction:
    players: tuple[str, ...]
    costs: dict[frozenset, float] = field(default_factory=dict)

    def __call__(self, coalition: Iterable[str]) -> float:
        s = frozenset(coalition)
        if not s:
            return 0.0
        return self.costs[s]


@dataclass
class AllocationReport:
    method: str  # "improved" | "traditional"
    rho: dict[str, float]
    rho_components: dict[str, tuple[float, float, float]]
    phi: dict[str, float]
    total_cost: dict[str, float]
    utility: dict[str, float]
    grand_cost: float

    @property
    def negative_count(self) -> int:
        return sum(1 for u in self.utility.values() if u < -1e-9)


def _normalise(values: Mapping[str, float]) -> dict[str, float]:
    top = max(values.values(), default=0.0)
    return {r: (v / top if top > 0 else 0.0) for r, v in values.items()}


def resource_contribution(instance: Instance) -> dict[str, Contribution]:
    """Serviceable-set ratio, shared-fleet ratio and priority spread, min-max normalised.

    Computed for the grand coalition.  When every operator scores the same
    the normalisation is undefined and everyone gets rho = 1.
    """
    inst = instance.replace(mode="cooperated", coalition=None)
    own = inst.own_flights
    r1, r2, r3 = {}, {}, {}
    for op in inst.operators:
        n_own = len(own[op.id])
        wide = serviceable_set(op, inst)
        r1[op.id] = len(wide) / n_own if n_own else 0.0
        r2[op.id] = op.shared_count / op.fleet_size if op.fleet_size else 0.0
        p = [op.priority_of(f) for f in sorted(own[op.id])]
        r3[op.id] = float(np.std(p)) if p else 0.0
    r1, r2 = _normalise(r1), _normalise(r2)
    prime = {r: r1[r] + r2[r] + r3[r] for r in r1}
    lo, hi = min(prime.values()), max(prime.values())
    out = {}
    for r in prime:
        rho = (prime[r] - lo) / (hi - lo) if hi - lo > 1e-12 else 1.0
        out[r] = Contribution(r1[r], r2[r], r3[r], rho)
    return out


def fleet_travel(solution: Solution, instance: Instance, operator: str,
                 fleet: str | None = None) -> float:
    """Distance driven by ``operator``'s vehicles (optionally one virtual fleet)."""
    g = instance.graph
    total = 0.0
    for t in solution.trajectories:
        if t.operator != operator or (fleet is not None and t.fleet != fleet):
            continue
        for a, b in zip(t.visits, t.visits[1:]):
            total += float(g.distance[g.index[a.node], g.index[b.node]])
    return total


def own_delay(solution: Solution, instance: Instance, operator: str) -> float:
    return sum(solution.delays[f] for f in instance.own_flights[operator])


def coalition_instance(instance: Instance, coalition: Iterable[str]) -> Instance:
    return instance.replace(mode="cooperated", coalition=frozenset(coalition))


def price_coalition(solution: Solution, instance: Instance, coalition: Iterable[str],
                    rho: Mapping[str, float]) -> float:
    """Shared-fleet travel plus rho-weighted delay cost of the members."""
    c_e = instance.vehicle_params.unit_energy_cost
    total = 0.0
    for r in coalition:
        op = instance.operator_by_id[r]
        total += c_e * fleet_travel(solution, instance, r, "shared")
        total += rho[r] * op.unit_delay_cost * own_delay(solution, instance, r)
    return total


def coalition_solutions(instance: Instance, solve: Solver) -> dict[frozenset, Solution]:
    """One solve per non-empty coalition, members cooperating and the rest separated."""
    players = [o.id for o in instance.operators]
    out = {}
    for k in range(1, len(players) + 1):
        for s in combinations(players, k):
            key = frozenset(s)
            out[key] = solve(coalition_instance(instance, key))
    return out


def coalition_cost(instance: Instance, coalition: Iterable[str], solve: Solver,
                   rho: Mapping[str, float] | None = None) -> float:
    s = frozenset(coalition)
    if not s:
        return 0.0
    if rho is None:
        rho = {r: c.rho for r, c in resource_contribution(instance).items()}
    sol = solve(coalition_instance(instance, s))
    return price_coalition(sol, coalition_instance(instance, s), s, rho)


def characteristic_function(instance: Instance, solutions: Mapping[frozenset, Solution],
                            rho: Mapping[str, float]) -> CharacteristicFunction:
    players = tuple(o.id for o in instance.operators)
    costs = {s: price_coalition(sol, instance, s, rho) for s, sol in solutions.items()}
    return CharacteristicFunction(players, costs)


def shapley(cf: CharacteristicFunction) -> dict[str, float]:
    """Average marginal cost of each player over all join orders."""
    players = cf.players
    n = len(players)
    fact = math.factorial
    phi = {}
    for r in players:
        others = [p for p in players if p != r]
        total = 0.0
        for k in range(len(others) + 1):
            w = fact(k) * fact(n - k - 1) / fact(n)
            for s in combinations(others, k):
                total += w * (cf(s + (r,)) - cf(s))
        phi[r] = total
    return phi


def operator_total_cost(r: str, phi: Mapping[str, float], rho: Mapping[str, float],
                        solution: Solution, instance: Instance) -> float:
    """Shapley share plus non-shared travel plus the delay cost left outside the pot."""
    op = instance.operator_by_id[r]
    c_e = instance.vehicle_params.unit_energy_cost
    return (phi[r] + c_e * fleet_travel(solution, instance, r, "non_shared")
            + (1.0 - rho[r]) * op.unit_delay_cost * own_delay(solution, instance, r))


def separated_cost(r: str, solution: Solution, instance: Instance) -> float:
    """Operator cost when working alone: whole-fleet travel plus full delay cost."""
    op = instance.operator_by_id[r]
    c_e = instance.vehicle_params.unit_energy_cost
    return (c_e * fleet_travel(solution, instance, r)
            + op.unit_delay_cost * own_delay(solution, instance, r))


def individual_utility(r: str, os_cost: Mapping[str, float] | float,
                       oc_cost: Mapping[str, float] | float) -> float:
    """Savings of joining: separated cost minus coalition cost."""
    a = os_cost[r] if isinstance(os_cost, Mapping) else os_cost
    b = oc_cost[r] if isinstance(oc_cost, Mapping) else oc_cost
    return a - b


def shared_utility(os_values: Sequence[float], oc_values: Sequence[float]) -> float:
    """Relative saving of the cooperated mean over the separated mean (nan if undefined)."""
    if not os_values or not oc_values:
        return math.nan
    a = sum(os_values) / len(os_values)
    b = sum(oc_values) / len(oc_values)
    if a == 0:
        return math.nan
    return (a - b) / a


def allocate(instance: Instance, solve: Solver,
             methods: Sequence[str] = ("improved", "traditional"),
             separated_solution: Solution | None = None,
             solutions: Mapping[frozenset, Solution] | None = None) -> dict[str, AllocationReport]:
    """Improved (rho-weighted) and traditional Shapley reports over the same solves."""
    contrib = resource_contribution(instance)
    players = tuple(o.id for o in instance.operators)
    if solutions is None:
        solutions = coalition_solutions(instance, solve)
    grand = solutions[frozenset(players)]
    grand_inst = coalition_instance(instance, players)
    if separated_solution is None:
        separated_solution = solve(instance.replace(mode="separated", coalition=None))
    sep_inst = instance.replace(mode="separated", coalition=None)
    os_cost = {r: separated_cost(r, separated_solution, sep_inst) for r in players}
    reports = {}
    for method in methods:
        if method == "improved":
            rho = {r: contrib[r].rho for r in players}
        elif method == "traditional":
            rho = {r: 1.0 for r in players}
        else:
            raise ValueError(f"unknown allocation method {method!r}")
        cf = characteristic_function(instance, solutions, rho)
        phi = shapley(cf)
        total = {r: operator_total_cost(r, phi, rho, grand, grand_inst) for r in players}
        reports[method] = AllocationReport(
            method, rho,
            {r: (contrib[r].rho1, contrib[r].rho2, contrib[r].rho3) for r in players},
            phi, total, {r: individual_utility(r, os_cost, total) for r in players},
            cf(players))
    return reports


REPORT_COLUMNS = ("scenario", "pareto_point", "operator", "rho1", "rho2", "rho3", "rho",
                  "phi", "total_cost", "utility", "method")


def report_rows(scenario: str, point: int, report: AllocationReport) -> list[list]:
    rows = []
    for r in sorted(report.phi):
        r1, r2, r3 = report.rho_components[r]
        rows.append([scenario, point, r, f"{r1:.6f}", f"{r2:.6f}", f"{r3:.6f}",
                     f"{report.rho[r]:.6f}", f"{report.phi[r]:.6f}",
                     f"{report.total_cost[r]:.6f}", f"{report.utility[r]:.6f}", report.method])
    return rows


def write_report_csv(rows: Iterable[Sequence], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        w.writerows(rows)
