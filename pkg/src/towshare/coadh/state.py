"""Mutable search state: per-vehicle flight sequences plus cached route values."""

from __future__ import annotations

from ..schedule import EvalConfig, RouteEval, RouteModel


class RepairFailed(Exception):
    """A repair operator found no admissible position; the move is abandoned."""


class SearchState:
    """Routes are tuples of flight node indices (charging is implicit).

    Totals are kept incrementally so evaluate() is O(1).
    """

    __slots__ = ("model", "routes", "evals", "where", "op_of", "dist", "delay", "viol")

    def __init__(self, model: RouteModel, routes: list[tuple[int, ...]]):
        self.model = model
        self.routes = list(routes)
        self.evals: list[RouteEval] = []
        self.where: dict[int, int] = {}
        self.op_of: dict[int, str] = {}
        for v, r in enumerate(self.routes):
            ev = model.route(v, r)
            if ev is None:
                raise ValueError(f"route {v} is energy-infeasible")
            self.evals.append(ev)
            for f in r:
                self.where[f] = v
                self.op_of[f] = model.vehicle_ops[v]
        self.dist = sum(e.dist for e in self.evals)
        self.delay = sum(e.delay for e in self.evals)
        self.viol = model.violations(self.op_of)

    @classmethod
    def empty(cls, model: RouteModel) -> "SearchState":
        return cls(model, [()] * len(model.vehicles))

    def copy(self) -> "SearchState":
        new = object.__new__(SearchState)
        new.model = self.model
        new.routes = list(self.routes)
        new.evals = list(self.evals)
        new.where = dict(self.where)
        new.op_of = dict(self.op_of)
        new.dist, new.delay, new.viol = self.dist, self.delay, self.viol
        return new

    # -- costs ----------------------------------------------------------

    def f1(self) -> float:
        return self.model.c_e * self.dist

    def pen_delay(self, p: EvalConfig, delay: float | None = None) -> float:
        d = self.delay if delay is None else delay
        return p.c_eval_dl * max(0.0, d - p.t_delay)

    def evaluate(self, p: EvalConfig) -> float:
        return self.f1() + self.pen_delay(p) + p.c_eval_pr * self.viol

    def scheduled(self) -> list[int]:
        """Scheduled flights in (vehicle, position) order."""
        return [f for r in self.routes for f in r]

    @property
    def n_scheduled(self) -> int:
        return len(self.where)

    # -- edits ----------------------------------------------------------

    def _set_route(self, v: int, route: tuple[int, ...], ev: RouteEval) -> None:
        old = self.evals[v]
        self.dist += ev.dist - old.dist
        self.delay += ev.delay - old.delay
        self.routes[v] = route
        self.evals[v] = ev

    def without(self, f: int) -> tuple[int, tuple[int, ...], RouteEval | None]:
        v = self.where[f]
        r = self.routes[v]
        i = r.index(f)
        nr = r[:i] + r[i + 1:]
        return v, nr, self.model.route(v, nr)

    def remove(self, f: int) -> tuple[int, int]:
        """Remove flight ``f``; returns its former (vehicle, position)."""
        v = self.where[f]
        r = self.routes[v]
        i = r.index(f)
        nr = r[:i] + r[i + 1:]
        ev = self.model.route(v, nr)
        if ev is None:
            raise RepairFailed(f"removing {f} leaves route {v} energy-infeasible")
        op = self.op_of.pop(f)
        del self.where[f]
        self.viol -= self.model.violation_delta(f, op, self.op_of)
        self._set_route(v, nr, ev)
        return v, i

    def insert(self, f: int, v: int, pos: int, ev: RouteEval | None = None) -> None:
        r = self.routes[v]
        nr = r[:pos] + (f,) + r[pos:]
        if ev is None:
            ev = self.model.route(v, nr)
            if ev is None:
                raise RepairFailed(f"inserting {f} into route {v} breaks the battery limit")
        op = self.model.vehicle_ops[v]
        self.viol += self.model.violation_delta(f, op, self.op_of)
        self.op_of[f] = op
        self.where[f] = v
        self._set_route(v, nr, ev)

    def delays(self) -> dict[int, float]:
        out = {}
        for r, ev in zip(self.routes, self.evals):
            out.update(zip(r, ev.delays))
        return out


class SearchContext:
    """Read-only data shared by operators: model, config, Shaw normalisers."""

    __slots__ = ("model", "config", "max_flight_distance", "earliest_spread")

    def __init__(self, model: RouteModel, config):
        self.model = model
        self.config = config
        fl = model.flight_nodes
        self.max_flight_distance = max(
            (model.d[i][j] for i in fl for j in fl if i != j), default=0.0)
        es = [model.E[i] for i in fl]
        self.earliest_spread = (max(es) - min(es)) if es else 0.0
