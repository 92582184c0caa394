"""Trajectories, timetables, battery levels, objectives and the evaluate function.

Two code paths compute the same quantities:

* the public functions (:func:`insert_charging`, :func:`propagate_timetable`,
  :func:`objectives`, ...) work on :class:`Trajectory` / :class:`Solution`
  values and favour readability;
* :class:`RouteModel` works on integer node indices and is what the search
  and the exact enumerator call in their inner loops.

The test-suite checks that both agree.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, NamedTuple, Sequence

from .errors import InfeasibleError
from .instance import Instance

EPS = 1e-9


@dataclass(frozen=True)
class EvalConfig:
    """Penalty settings of the evaluate function."""

    t_delay: float = math.inf
    c_eval_dl: float = 1.0
    c_eval_pr: float = 50.0


@dataclass(frozen=True)
class Visit:
    node: str
    kind: str
    arrive: float = 0.0
    start: float = 0.0  # service (or charging) start
    service_end: float = 0.0
    depart: float = 0.0
    soc_on_arrival: float = 0.0
    charge_duration: float = 0.0


@dataclass(frozen=True)
class Trajectory:
    vehicle: str
    operator: str
    fleet: str
    visits: tuple[Visit, ...]

    @property
    def flights(self) -> list[str]:
        return [v.node for v in self.visits if v.kind == "flight"]

    @property
    def chargers(self) -> list[str]:
        return [v.node for v in self.visits if v.kind == "charging"]


@dataclass(frozen=True)
class Solution:
    trajectories: tuple[Trajectory, ...]
    assignment: dict[str, str]
    delays: dict[str, float]
    f1: float
    f2: float
    penalty_delay: float = 0.0
    penalty_priority: float = 0.0
    violations: int = 0

    @property
    def evaluate(self) -> float:
        return self.f1 + self.penalty_delay + self.penalty_priority

    @property
    def routes(self) -> dict[str, list[str]]:
        return {t.vehicle: t.flights for t in self.trajectories}

    def trajectory_of(self, vehicle: str) -> Trajectory:
        for t in self.trajectories:
            if t.vehicle == vehicle:
                return t
        raise KeyError(vehicle)


# ---------------------------------------------------------------------------
# Reference implementation on Trajectory values

def flight_delay(start: float, latest: float) -> float:
    """Delay of a service that starts at ``start`` against its latest start."""
    return max(0.0, start - latest)


def bare_trajectory(instance: Instance, vehicle: str, flights: Sequence[str]) -> Trajectory:
    """Depot-to-depot trajectory over ``flights`` with no times or charging."""
    veh = {v.id: v for v in instance.vehicles}[vehicle]
    op = instance.operator_by_id[veh.operator]
    visits = [Visit(op.depot_out, "depot_out")]
    visits += [Visit(f, "flight") for f in flights]
    visits.append(Visit(op.depot_in, "depot_in"))
    return Trajectory(vehicle, veh.operator, veh.fleet, tuple(visits))


def _charging_reserve(instance: Instance, node: str, depot_in: str) -> float:
    """Energy kept back after a service so some charger stays reachable."""
    g = instance.graph
    chargers = g.ids_of_kind("charging")
    i = g.index[node]
    if chargers:
        return min(float(g.energy[i, g.index[e]]) for e in chargers)
    return float(g.energy[i, g.index[depot_in]])


def insert_charging(trajectory: Trajectory, instance: Instance) -> Trajectory:
    """Insert full-charge visits so the battery never drops below ``Q*gamma``.

    Walk the flight sequence from a full battery.  Before moving on to the
    next flight, project the state of charge after that flight's service
    (keeping enough to reach a charger).  If the projection falls below the
    floor, visit the charger with the smallest detour first and recharge to
    capacity.  The returned trajectory has ``soc_on_arrival`` set on every
    visit; times are left to :func:`propagate_timetable`.

    Raises InfeasibleError when no charger placement can keep the battery
    above the floor.
    """
    if trajectory.chargers:
        raise ValueError("trajectory already contains charging visits")
    g = instance.graph
    vp = instance.vehicle_params
    Q, floor = vp.capacity, vp.min_soc
    chargers = g.ids_of_kind("charging")
    depot_out = trajectory.visits[0].node
    depot_in = trajectory.visits[-1].node

    def h(a: str, b: str) -> float:
        return float(g.energy[g.index[a], g.index[b]])

    def dist(a: str, b: str) -> float:
        return float(g.distance[g.index[a], g.index[b]])

    def pick_charger(prev: str, soc: float, nxt: str, after: float) -> str:
        best, best_d = None, math.inf
        for e in chargers:
            if soc - h(prev, e) < floor - EPS:
                continue
            if Q - h(e, nxt) - after < floor - EPS:
                continue
            detour = dist(prev, e) + dist(e, nxt)
            if detour < best_d:
                best, best_d = e, detour
        if best is None:
            raise InfeasibleError(
                f"vehicle {trajectory.vehicle}: no charger keeps the battery above "
                f"{floor:g} kWh before {nxt}")
        return best

    visits = [replace(trajectory.visits[0], soc_on_arrival=Q)]
    soc, prev = Q, depot_out
    for v in trajectory.visits[1:-1]:
        fl = instance.flight_by_id[v.node]
        after = fl.service_energy + _charging_reserve(instance, v.node, depot_in)
        if soc - h(prev, v.node) - after < floor - EPS:
            if prev == depot_out:
                raise InfeasibleError(
                    f"flight {v.node} needs more energy than a full battery provides")
            e = pick_charger(prev, soc, v.node, after)
            visits.append(Visit(e, "charging", soc_on_arrival=soc - h(prev, e)))
            soc, prev = Q, e
        soc -= h(prev, v.node)
        visits.append(replace(v, soc_on_arrival=soc))
        soc -= fl.service_energy
        prev = v.node
    if soc - h(prev, depot_in) < floor - EPS:
        if prev == depot_out:
            raise InfeasibleError("depots are out of range of each other")
        e = pick_charger(prev, soc, depot_in, 0.0)
        visits.append(Visit(e, "charging", soc_on_arrival=soc - h(prev, e)))
        soc, prev = Q, e
    visits.append(replace(trajectory.visits[-1], soc_on_arrival=soc - h(prev, depot_in)))
    return replace(trajectory, visits=tuple(visits))


def propagate_timetable(trajectory: Trajectory, instance: Instance) -> Trajectory:
    """Fill arrival, service and departure times along a fixed visit order.

    Travel is tight (arrive = previous departure + travel time), vehicles wait
    at a stand until the earliest start, and chargers refill to capacity.  The
    depot departure is pushed as late as possible without moving any service
    start.
    """
    g = instance.graph
    vp = instance.vehicle_params
    visits = list(trajectory.visits)
    t = 0.0
    out = [replace(visits[0], arrive=0.0, start=0.0, service_end=0.0, depart=0.0)]
    for prev, v in zip(visits, visits[1:]):
        t += float(g.travel_time[g.index[prev.node], g.index[v.node]])
        arrive = t
        if v.kind == "flight":
            fl = instance.flight_by_id[v.node]
            start = max(arrive, fl.earliest)
            end = start + fl.service_duration
            out.append(replace(v, arrive=arrive, start=start, service_end=end, depart=end))
        elif v.kind == "charging":
            dur = (vp.capacity - v.soc_on_arrival) / vp.charge_rate
            end = arrive + dur
            out.append(replace(v, arrive=arrive, start=arrive, service_end=end, depart=end,
                               charge_duration=dur))
        else:
            end = arrive
            out.append(replace(v, arrive=arrive, start=arrive, service_end=arrive, depart=arrive))
        t = end
    if len(out) > 2 and out[1].kind == "flight":
        slack = out[1].start - out[1].arrive
        if slack > 0:
            first = out[0]
            out[0] = replace(first, arrive=slack, start=slack, service_end=slack, depart=slack)
            out[1] = replace(out[1], arrive=out[1].start)
    return replace(trajectory, visits=tuple(out))


def trajectory_distance(trajectory: Trajectory, instance: Instance) -> float:
    g = instance.graph
    return sum(float(g.distance[g.index[a.node], g.index[b.node]])
               for a, b in zip(trajectory.visits, trajectory.visits[1:]))


def trajectory_delays(trajectory: Trajectory, instance: Instance) -> dict[str, float]:
    return {v.node: flight_delay(v.start, instance.flight_by_id[v.node].latest)
            for v in trajectory.visits if v.kind == "flight"}


def objectives(solution: Solution, instance: Instance) -> tuple[float, float]:
    """(energy cost, total delay) recomputed from the trajectories."""
    c_e = instance.vehicle_params.unit_energy_cost
    f1 = c_e * sum(trajectory_distance(t, instance) for t in solution.trajectories)
    f2 = sum(d for t in solution.trajectories for d in trajectory_delays(t, instance).values())
    return f1, f2


def operator_scope(instance: Instance) -> dict[str, frozenset[str]]:
    """F_r: every flight some fleet of r is allowed to serve."""
    scope: dict[str, set[str]] = {o.id: set() for o in instance.operators}
    for fl in instance.fleets:
        scope[fl.owner] |= fl.serviceable
    return {r: frozenset(s) for r, s in scope.items()}


def priority_violations(assignment: Mapping[str, str], instance: Instance) -> int:
    """Number of (operator, overlapping flight pair) priority violations.

    Operator r violates a pair when it was given only the lower-priority
    flight of two overlapping flights it ranks differently.  Each unordered
    pair counts once.  Unassigned flights count as served by nobody.
    """
    pos = instance.flight_pos
    q = instance.q
    count = 0
    for r, flights in operator_scope(instance).items():
        op = instance.operator_by_id[r]
        fl = sorted(flights, key=pos.__getitem__)
        for a_i, i in enumerate(fl):
            for j in fl[a_i + 1:]:
                if not q[pos[i], pos[j]]:
                    continue
                dz = (assignment.get(i) == r) - (assignment.get(j) == r)
                dp = op.priority_of(i) - op.priority_of(j)
                if dz * dp < 0:
                    count += 1
    return count


def penalties(f2: float, violations: int, instance: Instance,
              config: Any = None) -> tuple[float, float]:
    config = config or EvalConfig()
    pen_dl = config.c_eval_dl * max(0.0, f2 - config.t_delay)
    pen_pr = config.c_eval_pr * violations if instance.mode == "cooperated" else 0.0
    return pen_dl, pen_pr


def evaluate(solution: Solution, instance: Instance, config: Any = None) -> float:
    """Objective plus clamped delay-bound and (cooperated mode) priority penalties."""
    f1, f2 = objectives(solution, instance)
    pen_dl, pen_pr = penalties(f2, priority_violations(solution.assignment, instance),
                               instance, config)
    return f1 + pen_dl + pen_pr


def build_solution(instance: Instance, routes: Mapping[str, Sequence[str]],
                   config: Any = None) -> Solution:
    """Turn per-vehicle flight sequences into a fully timed Solution.

    Vehicles missing from ``routes`` stay at their depot.  Raises
    InfeasibleError if a route cannot be kept within battery limits or
    a flight is served twice / not at all.
    """
    seen: set[str] = set()
    trajectories = []
    assignment = {}
    for veh in instance.vehicles:
        flights = list(routes.get(veh.id, ()))
        allowed = instance.serviceable_by_vehicle[veh.id]
        for f in flights:
            if f in seen:
                raise InfeasibleError(f"flight {f} served twice")
            if f not in allowed:
                raise InfeasibleError(f"vehicle {veh.id} may not serve {f}")
            seen.add(f)
            assignment[f] = veh.operator
        traj = bare_trajectory(instance, veh.id, flights)
        traj = propagate_timetable(insert_charging(traj, instance), instance)
        trajectories.append(traj)
    missing = [f.id for f in instance.flights if f.id not in seen]
    if missing:
        raise InfeasibleError(f"flights not served: {missing}")
    return assemble_solution(instance, trajectories, assignment, config)


def explicit_trajectory(instance: Instance, vehicle: str, nodes: Sequence[str]) -> Trajectory:
    """Timed trajectory over a fixed visit order that already names its chargers.

    ``nodes`` runs from depot_out to depot_in.  The battery is only tracked,
    not checked; callers validate it against the floor themselves.
    """
    g = instance.graph
    Q = instance.vehicle_params.capacity
    veh = {v.id: v for v in instance.vehicles}[vehicle]
    kind = {n.id: n.kind for n in g.nodes}
    visits = [Visit(nodes[0], kind[nodes[0]], soc_on_arrival=Q)]
    soc = Q
    for a, b in zip(nodes, nodes[1:]):
        soc -= float(g.energy[g.index[a], g.index[b]])
        visits.append(Visit(b, kind[b], soc_on_arrival=soc))
        if kind[b] == "flight":
            soc -= instance.flight_by_id[b].service_energy
        elif kind[b] == "charging":
            soc = Q
    traj = Trajectory(vehicle, veh.operator, veh.fleet, tuple(visits))
    return propagate_timetable(traj, instance)


def assemble_solution(instance: Instance, trajectories: Sequence[Trajectory],
                      assignment: Mapping[str, str], config: Any = None) -> Solution:
    """Solution with objectives and penalties for timed trajectories."""
    trajectories = tuple(trajectories)
    delays = {}
    for t in trajectories:
        delays.update(trajectory_delays(t, instance))
    delays = {f.id: delays[f.id] for f in instance.flights}
    c_e = instance.vehicle_params.unit_energy_cost
    f1 = c_e * sum(trajectory_distance(t, instance) for t in trajectories)
    f2 = sum(delays.values())
    viol = priority_violations(assignment, instance)
    pen_dl, pen_pr = penalties(f2, viol, instance, config)
    assignment = {f.id: assignment[f.id] for f in instance.flights}
    return Solution(trajectories, assignment, delays, f1, f2, pen_dl, pen_pr, viol)


# ---------------------------------------------------------------------------
# Serialization

def solution_to_dict(solution: Solution, **extra: Any) -> dict[str, Any]:
    def r6(x: float) -> float:
        return round(x, 6)

    out: dict[str, Any] = dict(extra)
    out["objectives"] = {"f1": r6(solution.f1), "f2": r6(solution.f2)}
    out["penalties"] = {"delay": r6(solution.penalty_delay),
                        "priority": r6(solution.penalty_priority),
                        "violations": solution.violations}
    out["evaluate"] = r6(solution.evaluate)
    out["assignment"] = dict(solution.assignment)
    out["delays"] = {k: r6(v) for k, v in solution.delays.items()}
    out["trajectories"] = [
        {"vehicle": t.vehicle, "operator": t.operator, "fleet": t.fleet,
         "visits": [{"node": v.node, "kind": v.kind, "arrive": r6(v.arrive),
                     "start": r6(v.start), "service_end": r6(v.service_end),
                     "depart": r6(v.depart), "soc": r6(v.soc_on_arrival),
                     "charge_duration": r6(v.charge_duration)} for v in t.visits]}
        for t in solution.trajectories
    ]
    return out


def write_solution(solution: Solution, path: str | Path, **extra: Any) -> None:
    Path(path).write_text(json.dumps(solution_to_dict(solution, **extra), indent=1) + "\n")


# ---------------------------------------------------------------------------
# Fast path on integer indices

class RouteEval(NamedTuple):
    nodes: tuple[int, ...]  # full node sequence incl. depots and chargers
    dist: float
    delay: float
    delays: tuple[float, ...]  # per flight, in route order


class RouteModel:
    """Index-based route evaluation with memoisation.

    Same charging rule and timetable as the reference functions above.
    Routes are tuples of node indices of flights (no chargers).
    """

    MEMO_LIMIT = 400_000

    def __init__(self, instance: Instance):
        self.instance = instance
        g = instance.graph
        vp = instance.vehicle_params
        self.d = g.distance.tolist()
        self.tt = g.travel_time.tolist()
        self.h = g.energy.tolist()
        self.Q = vp.capacity
        self.floor = vp.min_soc
        self.tau_c = vp.charge_rate
        self.c_e = vp.unit_energy_cost
        n = len(g.nodes)
        self.kind = [nd.kind for nd in g.nodes]
        self.ids = [nd.id for nd in g.nodes]
        self.E = [0.0] * n
        self.L = [0.0] * n
        self.S = [0.0] * n
        self.HF = [0.0] * n
        for f in instance.flights:
            i = g.index[f.id]
            self.E[i], self.L[i] = f.earliest, f.latest
            self.S[i], self.HF[i] = f.service_duration, f.service_energy
        self.chargers = [g.index[e] for e in g.ids_of_kind("charging")]
        self.flight_nodes = [g.index[f.id] for f in instance.flights]
        self.min_h_charger = [min((self.h[i][e] for e in self.chargers), default=None)
                              for i in range(n)]
        # vehicles
        self.vehicles = list(instance.vehicles)
        self.vehicle_ops = [v.operator for v in self.vehicles]
        self.depots = []
        self.serviceable = []
        for v in self.vehicles:
            op = instance.operator_by_id[v.operator]
            self.depots.append((g.index[op.depot_out], g.index[op.depot_in]))
            self.serviceable.append(frozenset(
                g.index[f] for f in instance.serviceable_by_vehicle[v.id]))
        # priority pairs: (operator, low, high) with overlap and differing priority
        self.cooperated = instance.mode == "cooperated"
        self.pairs: list[tuple[str, int, int]] = []
        pos = instance.flight_pos
        q = instance.q
        for r, flights in operator_scope(instance).items():
            op = instance.operator_by_id[r]
            fl = sorted(flights, key=pos.__getitem__)
            for a, i in enumerate(fl):
                for j in fl[a + 1:]:
                    if not q[pos[i], pos[j]]:
                        continue
                    pi, pj = op.priority_of(i), op.priority_of(j)
                    if pi != pj:
                        lo, hi = (i, j) if pi < pj else (j, i)
                        self.pairs.append((r, g.index[lo], g.index[hi]))
        self.pairs_of: dict[int, list[tuple[str, int, int]]] = {i: [] for i in self.flight_nodes}
        for p in self.pairs:
            self.pairs_of[p[1]].append(p)
            self.pairs_of[p[2]].append(p)
        self._memo: dict[tuple, RouteEval | None] = {}

    # -- single-vehicle primitives -------------------------------------

    def reserve(self, f: int, depot_in: int) -> float:
        r = self.min_h_charger[f]
        return self.h[f][depot_in] if r is None else r

    def _pick_charger(self, prev: int, soc: float, nxt: int, after: float) -> int:
        h, d = self.h, self.d
        floor = self.floor - EPS
        best, best_d = -1, math.inf
        for e in self.chargers:
            if soc - h[prev][e] < floor or self.Q - h[e][nxt] - after < floor:
                continue
            detour = d[prev][e] + d[e][nxt]
            if detour < best_d:
                best, best_d = e, detour
        return best

    def step(self, prev: int, soc: float, t: float, f: int, depot_in: int):
        """Move from ``prev`` to flight ``f`` and serve it.

        Returns (charger or -1, dist, soc_after_service, t_after_service, delay)
        or None when infeasible.
        """
        h = self.h
        after = self.HF[f] + self.reserve(f, depot_in)
        charger = -1
        dist = 0.0
        if soc - h[prev][f] - after < self.floor - EPS:
            if self.kind[prev] != "flight":
                return None
            e = self._pick_charger(prev, soc, f, after)
            if e < 0:
                return None
            dist += self.d[prev][e]
            t += self.tt[prev][e]
            soc -= h[prev][e]
            t += (self.Q - soc) / self.tau_c
            soc = self.Q
            prev = charger = e
        dist += self.d[prev][f]
        t += self.tt[prev][f]
        soc -= h[prev][f]
        start = t if t > self.E[f] else self.E[f]
        delay = start - self.L[f]
        if delay < 0.0:
            delay = 0.0
        return charger, dist, soc - self.HF[f], start + self.S[f], delay

    def close(self, prev: int, soc: float, depot_in: int):
        """Return leg to the inbound depot: (charger or -1, dist) or None."""
        if soc - self.h[prev][depot_in] >= self.floor - EPS:
            return -1, self.d[prev][depot_in]
        if self.kind[prev] != "flight":
            return None
        e = self._pick_charger(prev, soc, depot_in, 0.0)
        if e < 0:
            return None
        return e, self.d[prev][e] + self.d[e][depot_in]

    def route(self, vehicle: int, flights: tuple[int, ...]) -> RouteEval | None:
        out_i, in_i = self.depots[vehicle]
        key = (out_i, in_i, flights)
        memo = self._memo
        if key in memo:
            return memo[key]
        res = self._route(out_i, in_i, flights)
        if len(memo) >= self.MEMO_LIMIT:
            memo.clear()
        memo[key] = res
        return res

    def _route(self, out_i: int, in_i: int, flights: tuple[int, ...]) -> RouteEval | None:
        prev, soc, t = out_i, self.Q, 0.0
        dist = delay = 0.0
        nodes = [out_i]
        delays = []
        for f in flights:
            r = self.step(prev, soc, t, f, in_i)
            if r is None:
                return None
            ch, dd, soc, t, dl = r
            if ch >= 0:
                nodes.append(ch)
            nodes.append(f)
            dist += dd
            delay += dl
            delays.append(dl)
            prev = f
        r = self.close(prev, soc, in_i)
        if r is None:
            return None
        if r[0] >= 0:
            nodes.append(r[0])
        nodes.append(in_i)
        return RouteEval(tuple(nodes), dist + r[1], delay, tuple(delays))

    # -- whole-solution helpers -----------------------------------------

    def violations(self, operator_of: Mapping[int, str]) -> int:
        """Priority violations for a flight→operator map (missing = unassigned)."""
        if not self.cooperated:
            return 0
        n = 0
        for r, lo, hi in self.pairs:
            if operator_of.get(lo) == r and operator_of.get(hi) != r:
                n += 1
        return n

    def violation_delta(self, f: int, r: str, operator_of: Mapping[int, str]) -> int:
        """Change in violations when unassigned flight ``f`` goes to operator ``r``."""
        if not self.cooperated:
            return 0
        delta = 0
        for pr, lo, hi in self.pairs_of[f]:
            if pr != r:
                continue
            if lo == f:
                if operator_of.get(hi) != r:
                    delta += 1
            elif operator_of.get(lo) == r:
                delta -= 1
        return delta

    def solution(self, routes: Sequence[tuple[int, ...]], config: Any = None) -> Solution:
        """Public Solution for index routes (reference path, fully timed)."""
        ids = self.ids
        return build_solution(
            self.instance,
            {v.id: [ids[f] for f in r] for v, r in zip(self.vehicles, routes)},
            config)


def route_model(instance: Instance) -> RouteModel:
    """Shared RouteModel for an instance (cached on the instance)."""
    model = instance.__dict__.get("_route_model")
    if model is None:
        model = RouteModel(instance)
        instance.__dict__["_route_model"] = model
    return model
