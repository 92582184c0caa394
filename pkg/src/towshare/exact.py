"""Exhaustive oracle for tiny instances and an LP-format MILP exporter."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import GuardError, InfeasibleError
from .instance import Instance
from .schedule import (EPS, EvalConfig, RouteModel, Solution, assemble_solution,
                       explicit_trajectory, route_model)

MAX_FLIGHTS = 8
MAX_VEHICLES = 3


@dataclass
class ExactResult:
    optimal_f1: float
    optimal_f2: float
    solution: Solution
    nodes_explored: int
    proven: bool = True


def _add_frontier(front: list, item: tuple) -> None:
    """Keep ``front`` as non-dominated (dist, delay, ...) entries; first found wins ties."""
    d, dl = item[0], item[1]
    for o in front:
        if o[0] <= d + EPS and o[1] <= dl + EPS:
            return
    front[:] = [o for o in front if not (d <= o[0] + EPS and dl <= o[1] + EPS)]
    front.append(item)


class _Enumerator:
    """Every visit order of every flight subset for one vehicle type."""

    def __init__(self, model: RouteModel, out_i: int, in_i: int, allowed: list[int],
                 bit: dict[int, int], bound: float, full_charging: bool):
        self.m = model
        self.out_i, self.in_i = out_i, in_i
        self.allowed = allowed
        self.bit = bit
        self.bound = bound + EPS
        self.full = full_charging
        self.front: dict[int, list] = {}
        self.explored = 0

    def run(self) -> dict[int, list]:
        m = self.m
        if self.full:
            self._rec_full(self.out_i, m.Q, 0.0, 0.0, 0.0, 0, (self.out_i,), frozenset())
        else:
            self._rec(self.out_i, m.Q, 0.0, 0.0, 0.0, 0, (), (self.out_i,))
        return self.front

    def _record(self, mask, dist, delay, flights, nodes):
        _add_frontier(self.front.setdefault(mask, []), (dist, delay, flights, nodes))

    def _rec(self, prev, soc, t, dist, delay, mask, flights, nodes):
        self.explored += 1
        m = self.m
        c = m.close(prev, soc, self.in_i)
        if c is not None:
            tail = ((c[0],) if c[0] >= 0 else ()) + (self.in_i,)
            self._record(mask, dist + c[1], delay, flights, nodes + tail)
        for f in self.allowed:
            b = self.bit[f]
            if mask & b:
                continue
            r = m.step(prev, soc, t, f, self.in_i)
            if r is None:
                continue
            ch, dd, soc2, t2, dl = r
            if delay + dl > self.bound:
                continue
            step_nodes = ((ch,) if ch >= 0 else ()) + (f,)
            self._rec(f, soc2, t2, dist + dd, delay + dl, mask | b, flights + (f,),
                      nodes + step_nodes)

    def _rec_full(self, prev, soc, t, dist, delay, mask, nodes, used):
        # any charger may be visited once; arrival charge must stay above the floor
        self.explored += 1
        m = self.m
        floor = m.floor - EPS
        flights = tuple(n for n in nodes if m.kind[n] == "flight")
        if soc - m.h[prev][self.in_i] >= floor:
            self._record(mask, dist + m.d[prev][self.in_i], delay, flights,
                         nodes + (self.in_i,))
        for f in self.allowed:
            b = self.bit[f]
            if mask & b:
                continue
            arr = soc - m.h[prev][f]
            if arr < floor:
                continue
            t2 = t + m.tt[prev][f]
            start = max(t2, m.E[f])
            dl = max(0.0, start - m.L[f])
            if delay + dl > self.bound:
                continue
            self._rec_full(f, arr - m.HF[f], start + m.S[f], dist + m.d[prev][f],
                           delay + dl, mask | b, nodes + (f,), used)
        for e in m.chargers:
            if e in used:
                continue
            arr = soc - m.h[prev][e]
            if arr < floor:
                continue
            t2 = t + m.tt[prev][e] + (m.Q - arr) / m.tau_c
            self._rec_full(e, m.Q, t2, dist + m.d[prev][e], delay, mask, nodes + (e,),
                           used | {e})


def solve_exact(instance: Instance, t_delay_bound: float = math.inf, *,
                full_charging: bool = False, max_flights: int = MAX_FLIGHTS,
                max_vehicles: int = MAX_VEHICLES) -> ExactResult:
    """Minimum-f1 schedule with total delay <= bound and no priority violations.

    By default charging follows the same greedy insertion rule as the
    heuristic.  ``full_charging`` instead enumerates every charger placement
    (each charger at most once per vehicle), matching the exported MILP.
    """
    n_f, n_k = len(instance.flights), len(instance.vehicles)
    if n_f > max_flights or n_k > max_vehicles:
        raise GuardError(f"instance too large for the exact solver "
                         f"({n_f} flights, {n_k} vehicles; limits {max_flights}, {max_vehicles})")
    if t_delay_bound < 0:
        raise InfeasibleError("delay bound is negative")
    m = route_model(instance)
    flights = sorted(m.flight_nodes, key=lambda i: m.ids[i])
    bit = {f: 1 << i for i, f in enumerate(flights)}
    full_mask = (1 << len(flights)) - 1

    # enumerate once per distinct vehicle type
    groups: dict[tuple, dict[int, list]] = {}
    explored = 0
    vkeys = []
    for v in range(n_k):
        out_i, in_i = m.depots[v]
        key = (out_i, in_i, m.serviceable[v])
        vkeys.append(key)
        if key not in groups:
            allowed = [f for f in flights if f in m.serviceable[v]]
            en = _Enumerator(m, out_i, in_i, allowed, bit, t_delay_bound, full_charging)
            groups[key] = en.run()
            explored += en.explored

    # pair flights decide priority violations, so they are part of the state
    relevant = sorted({f for _, lo, hi in m.pairs for f in (lo, hi)}) if m.cooperated else []
    ridx = {f: i for i, f in enumerate(relevant)}

    # DP over vehicles; identical neighbours take non-decreasing masks
    states: dict[tuple, list] = {(0, (None,) * len(relevant), -1): [(0.0, 0.0, ())]}
    for v in range(n_k):
        front = groups[vkeys[v]]
        same_next = v + 1 < n_k and vkeys[v + 1] == vkeys[v]
        same_prev = v > 0 and vkeys[v - 1] == vkeys[v]
        op = m.vehicle_ops[v]
        new: dict[tuple, list] = {}
        for (used, sig, last), entries in states.items():
            for mask, opts in front.items():
                if mask & used:
                    continue
                if same_prev and mask < last:
                    continue
                nsig = sig
                if relevant:
                    lst = list(sig)
                    for f in flights:
                        if mask & bit[f] and f in ridx:
                            lst[ridx[f]] = op
                    nsig = tuple(lst)
                nkey = (used | mask, nsig, mask if same_next else -1)
                bucket = new.setdefault(nkey, [])
                for d0, dl0, routes in entries:
                    for d1, dl1, fl, nodes in opts:
                        if dl0 + dl1 > t_delay_bound + EPS:
                            continue
                        _add_frontier(bucket, (d0 + d1, dl0 + dl1, routes + (nodes,)))
        states = new

    best = None
    for (used, sig, _), entries in states.items():
        if used != full_mask:
            continue
        if relevant and m.violations({f: sig[ridx[f]] for f in relevant}) > 0:
            continue
        for d, dl, routes in entries:
            if dl > t_delay_bound + EPS:
                continue
            if best is None or d < best[0] - EPS or (
                    d <= best[0] + EPS and dl < best[1] - EPS):
                best = (d, dl, routes)
    if best is None:
        raise InfeasibleError(f"no schedule meets delay bound {t_delay_bound}")
    solution = _build(instance, m, best[2], EvalConfig(t_delay=t_delay_bound))
    return ExactResult(solution.f1, solution.f2, solution, explored, True)


def _build(instance: Instance, m: RouteModel, routes, config) -> Solution:
    trajs = []
    assignment = {}
    for veh, nodes in zip(m.vehicles, routes):
        ids = [m.ids[i] for i in nodes]
        trajs.append(explicit_trajectory(instance, veh.id, ids))
        for i in nodes:
            if m.kind[i] == "flight":
                assignment[m.ids[i]] = veh.operator
    return assemble_solution(instance, trajs, assignment, config)


# ---------------------------------------------------------------------------
# MILP export (CPLEX LP text format)

_BAD = re.compile(r"[^A-Za-z0-9_.]")


def lp_name(s: str) -> str:
    """Identifier safe for LP files: characters outside [A-Za-z0-9_.] become '.'."""
    return _BAD.sub(".", s)


def milp_arcs(instance: Instance) -> list[tuple[str, str]]:
    """Arc set A: all ordered node pairs except arcs into a depot_out or out of a depot_in."""
    nodes = instance.graph.nodes
    return [(a.id, b.id) for a in nodes for b in nodes
            if a.id != b.id and b.kind != "depot_out" and a.kind != "depot_in"]


def _fmt(x: float) -> str:
    return repr(float(x)) if x != int(x) or abs(x) >= 1e15 else str(int(x))


def _expr(terms: Iterable[tuple[float, str]]) -> str:
    out = []
    for c, v in terms:
        if c == 0:
            continue
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        out.append(f"{sign} {v}" if mag == 1 else f"{sign} {_fmt(mag)} {v}")
    s = " ".join(out)
    return s[2:] if s.startswith("+ ") else s


class _LP:
    def __init__(self):
        self.rows: list[str] = []

    def add(self, name: str, terms, sense: str, rhs: float) -> None:
        terms = [t for t in terms if t[0] != 0]
        if not terms:
            return
        line = f" {name}: {_expr(terms)} {sense} {_fmt(rhs)}"
        self.rows.append(line)


def schedule_span_bound(instance: Instance) -> float:
    """Latest time any earliest-start timetable can reach.

    Each node adds at most its longest outgoing travel plus its service or a
    full recharge, so departures never exceed this sum over the horizon.
    """
    g = instance.graph
    vp = instance.vehicle_params
    service = {f.id: f.service_duration for f in instance.flights}
    total = g.horizon
    for i, n in enumerate(g.nodes):
        total += float(g.travel_time[i].max()) if len(g.nodes) else 0.0
        if n.kind == "charging":
            total += vp.full_charge_time
        total += service.get(n.id, 0.0)
    return total


def export_milp(instance: Instance, t_delay_bound: float, path: str | Path) -> dict[str, int]:
    """Write the routing MILP for ``instance`` as an LP file; returns variable counts.

    Variables: x_i_j_k (arc use), a_i_k / b_i_k (start / departure time),
    y_i_k (charge on arrival), z_f_r (flight-to-operator assignment) and
    tdl_f_k (delay). Identifiers pass through :func:`lp_name`.
    """
    g = instance.graph
    vp = instance.vehicle_params
    Q, floor, tau = vp.capacity, vp.min_soc, vp.charge_rate
    kind = {n.id: n.kind for n in g.nodes}
    ix = g.index
    arcs = milp_arcs(instance)
    vehicles = instance.vehicles
    flights = instance.flights
    fl_by = instance.flight_by_id
    big_m = max(g.big_m, schedule_span_bound(instance))
    h_max = float(g.energy.max()) if len(g.nodes) else 0.0
    hf_max = max((f.service_energy for f in flights), default=0.0)
    big_e = Q + h_max + hf_max
    cooperated = instance.mode == "cooperated"

    def N(s):
        return lp_name(s)

    def x(i, j, k):
        return f"x_{N(i)}_{N(j)}_{N(k)}"

    def var(p, i, k):
        return f"{p}_{N(i)}_{N(k)}"

    lp = _LP()
    fixed_zero: list[str] = []
    out_arcs: dict[tuple[str, str], list[str]] = {}
    in_arcs: dict[tuple[str, str], list[str]] = {}
    usable: dict[str, list[tuple[str, str]]] = {}
    for veh in vehicles:
        op = instance.operator_by_id[veh.operator]
        serv = instance.serviceable_by_vehicle[veh.id]

        def ok(n):
            k_ = kind[n]
            if k_ == "flight":
                return n in serv
            if k_ == "depot_out":
                return n == op.depot_out
            if k_ == "depot_in":
                return n == op.depot_in
            return True
        usable[veh.id] = []
        for i, j in arcs:
            name = x(i, j, veh.id)
            if ok(i) and ok(j):
                usable[veh.id].append((i, j))
                out_arcs.setdefault((i, veh.id), []).append(name)
                in_arcs.setdefault((j, veh.id), []).append(name)
            else:
                fixed_zero.append(name)

    # objective
    obj = []
    for veh in vehicles:
        for i, j in usable[veh.id]:
            obj.append((vp.unit_energy_cost * float(g.distance[ix[i], ix[j]]), x(i, j, veh.id)))

    # 3, 4: leave and return to own depots once
    for veh in vehicles:
        op = instance.operator_by_id[veh.operator]
        k = N(veh.id)
        lp.add(f"depart_{k}", [(1, v) for v in out_arcs.get((op.depot_out, veh.id), [])], "=", 1)
        lp.add(f"return_{k}", [(1, v) for v in in_arcs.get((op.depot_in, veh.id), [])], "=", 1)
        for n in g.nodes:
            if n.kind in ("flight", "charging"):
                terms = [(1, v) for v in in_arcs.get((n.id, veh.id), [])]
                terms += [(-1, v) for v in out_arcs.get((n.id, veh.id), [])]
                lp.add(f"flow_{N(n.id)}_{k}", terms, "=", 0)
            if n.kind == "charging":
                lp.add(f"once_{N(n.id)}_{k}",
                       [(1, v) for v in in_arcs.get((n.id, veh.id), [])], "<=", 1)

    # cover and assignment (21, 22)
    ops_for = instance.operators_for_flight
    for f in flights:
        lp.add(f"assign_{N(f.id)}", [(1, f"z_{N(f.id)}_{N(r)}") for r in ops_for[f.id]], "=", 1)
        for r in ops_for[f.id]:
            terms = [(1, v) for veh in vehicles if veh.operator == r
                     for v in in_arcs.get((f.id, veh.id), [])]
            terms.append((-1, f"z_{N(f.id)}_{N(r)}"))
            lp.add(f"link_{N(f.id)}_{N(r)}", terms, "=", 0)

    # 25: an operator serving the low-priority flight of an overlapping pair serves the other
    if cooperated:
        from .schedule import route_model as _rm
        m = _rm(instance)
        for r, lo, hi in m.pairs:
            a, b = m.ids[lo], m.ids[hi]
            lp.add(f"prio_{N(r)}_{N(a)}_{N(b)}",
                   [(1, f"z_{N(a)}_{N(r)}"), (-1, f"z_{N(b)}_{N(r)}")], "<=", 0)

    for veh in vehicles:
        k = N(veh.id)
        for n in g.nodes:
            i = n.id
            if n.kind == "flight":
                # service end
                lp.add(f"serve_{N(i)}_{k}", [(1, var("b", i, veh.id)), (-1, var("a", i, veh.id))],
                       ">=", fl_by[i].service_duration)
                # 27, 28
                lp.add(f"late_{N(i)}_{k}", [(1, var("tdl", i, veh.id)),
                                            (-1, var("a", i, veh.id))], ">=", -fl_by[i].latest)
            elif n.kind == "charging":
                # full charge: b - a >= (Q - y) / tau
                lp.add(f"charge_{N(i)}_{k}", [(1, var("b", i, veh.id)), (-1, var("a", i, veh.id)),
                                              (1 / tau, var("y", i, veh.id))], ">=", Q / tau)
            else:
                lp.add(f"stay_{N(i)}_{k}", [(1, var("b", i, veh.id)),
                                            (-1, var("a", i, veh.id))], ">=", 0)
        for i, j in usable[veh.id]:
            xv = x(i, j, veh.id)
            tt = float(g.travel_time[ix[i], ix[j]])
            # 6: a_j >= b_i + t_ij - M (1 - x)
            lp.add(f"time_{N(i)}_{N(j)}_{k}",
                   [(1, var("a", j, veh.id)), (-1, var("b", i, veh.id)), (-big_m, xv)],
                   ">=", tt - big_m)
            # 7, 11: y_j <= y_i - h_ij - h_i + E (1 - x); a charger departs full
            h = float(g.energy[ix[i], ix[j]])
            if kind[i] == "charging":
                lp.add(f"energy_{N(i)}_{N(j)}_{k}",
                       [(1, var("y", j, veh.id)), (big_e, xv)], "<=", Q - h + big_e)
            else:
                hf = fl_by[i].service_energy if kind[i] == "flight" else 0.0
                lp.add(f"energy_{N(i)}_{N(j)}_{k}",
                       [(1, var("y", j, veh.id)), (-1, var("y", i, veh.id)), (big_e, xv)],
                       "<=", -h - hf + big_e)

    # 30
    delay_terms = [(1, var("tdl", f.id, veh.id)) for f in flights for veh in vehicles]
    if math.isfinite(t_delay_bound):
        lp.add("delay_bound", delay_terms, "<=", t_delay_bound)

    bounds = []
    for veh in vehicles:
        op = instance.operator_by_id[veh.operator]
        for n in g.nodes:
            a, b, y = (var(p, n.id, veh.id) for p in ("a", "b", "y"))
            if n.kind == "flight":
                bounds.append(f" {a} >= {_fmt(fl_by[n.id].earliest)}")
            else:
                bounds.append(f" {a} >= 0")
            bounds.append(f" {b} >= 0")
            if n.id == op.depot_out:
                bounds.append(f" {y} = {_fmt(Q)}")
            else:
                bounds.append(f" {_fmt(floor)} <= {y} <= {_fmt(Q)}")
        for f in flights:
            bounds.append(f" {var('tdl', f.id, veh.id)} >= 0")
    bounds += [f" {v} = 0" for v in fixed_zero]

    binaries = [x(i, j, veh.id) for veh in vehicles for i, j in arcs]
    binaries += [f"z_{N(f.id)}_{N(r)}" for f in flights for r in ops_for[f.id]]

    lines = ["\\ tow tractor routing MILP", f"\\ instance {instance.name or '-'} mode {instance.mode}",
             "Minimize", f" obj: {_expr(obj) or '0 ' + binaries[0]}", "Subject To"]
    lines += lp.rows
    lines.append("Bounds")
    lines += bounds
    lines.append("Binaries")
    lines += [f" {b}" for b in binaries]
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n")
    return {
        "binary_arcs": len(arcs) * len(vehicles),
        "continuous": 3 * len(g.nodes) * len(vehicles),
        "assignment": sum(len(ops_for[f.id]) for f in flights),
        "delay": len(flights) * len(vehicles),
    }
