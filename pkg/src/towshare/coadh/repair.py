"""Repair operators. Each reinserts removed flights into a SearchState in
place and raises RepairFailed when some flight has no admissible slot."""

from __future__ import annotations

from random import Random
from typing import Callable, NamedTuple

from .destroy import PrioritySwap
from .state import RepairFailed, SearchState


class Slot(NamedTuple):
    vehicle: int
    pos: int
    d_dist: float
    d_delay: float
    ev: object  # RouteEval of the route after insertion


def vehicle_slots(state: SearchState, f: int, v: int) -> list[Slot]:
    """Energy-feasible insertion slots of ``f`` in vehicle ``v``."""
    model = state.model
    if f not in model.serviceable[v]:
        return []
    r = state.routes[v]
    old = state.evals[v]
    out = []
    for pos in range(len(r) + 1):
        ev = model.route(v, r[:pos] + (f,) + r[pos:])
        if ev is not None:
            out.append(Slot(v, pos, ev.dist - old.dist, ev.delay - old.delay, ev))
    return out


class SlotCache:
    """Feasible slots per (flight, vehicle); only the touched vehicle is refreshed."""

    def __init__(self, state: SearchState, flights):
        self.state = state
        n_v = len(state.routes)
        self.slots = {f: [vehicle_slots(state, f, v) for v in range(n_v)] for f in flights}

    def refresh(self, v: int) -> None:
        for f, per_v in self.slots.items():
            per_v[v] = vehicle_slots(self.state, f, v)

    def drop(self, f: int) -> None:
        del self.slots[f]

    def of(self, f: int) -> list[Slot]:
        return [s for per in self.slots[f] for s in per]


def slot_cost(state: SearchState, f: int, s: Slot, cost_kind: str, cfg) -> float:
    """Increment of the chosen cost for inserting ``f`` at slot ``s``."""
    if cost_kind == "delay":
        return cfg.c_eval_dl * s.d_delay
    model = state.model
    pen = state.pen_delay(cfg, state.delay + s.d_delay) - state.pen_delay(cfg)
    dv = model.violation_delta(f, model.vehicle_ops[s.vehicle], state.op_of)
    return model.c_e * s.d_dist + pen + cfg.c_eval_pr * dv


def _commit(state: SearchState, cache: SlotCache, f: int, s: Slot) -> None:
    state.insert(f, s.vehicle, s.pos, s.ev)
    cache.drop(f)
    cache.refresh(s.vehicle)


def repair_random(state: SearchState, removed: list[int], rng: Random, ctx) -> None:
    """Insert each flight, in removal order, at a uniformly drawn feasible slot."""
    for f in removed:
        slots = [s for v in range(len(state.routes)) for s in vehicle_slots(state, f, v)]
        if not slots:
            raise RepairFailed(f"no feasible slot for flight {f}")
        s = slots[rng.randrange(len(slots))]
        state.insert(f, s.vehicle, s.pos, s.ev)


def repair_greedy(state: SearchState, removed: list[int], cost_kind: str, ctx) -> None:
    """Commit the globally cheapest (flight, slot) until all flights are placed.

    Ties go to the earliest flight in ``removed``, then the earliest
    trajectory, then the earliest position.
    """
    cfg = ctx.config
    cache = SlotCache(state, removed)
    pending = list(removed)
    while pending:
        best = None
        for f in pending:
            for s in cache.of(f):
                c = slot_cost(state, f, s, cost_kind, cfg)
                if best is None or c < best[0]:
                    best = (c, f, s)
        if best is None:
            raise RepairFailed(f"no feasible slot for flights {pending}")
        _, f, s = best
        _commit(state, cache, f, s)
        pending.remove(f)


def regret_value(costs: list[float], k: int) -> float:
    """Sum over h = 2..k of (c^h - c^1) on ascending costs; short lists use all."""
    costs = sorted(costs)
    return sum(c - costs[0] for c in costs[1:k])


def repair_kth_regret(state: SearchState, removed: list[int], k: int, rng: Random, ctx) -> None:
    """Draw the next flight with probability proportional to its regret.

    Insertion costs are the best slot per vehicle, so the regret measures
    the loss of falling back to another trajectory.
    """
    cfg = ctx.config
    cache = SlotCache(state, removed)
    pending = list(removed)
    while pending:
        regrets = []
        bests = []
        for f in pending:
            per_vehicle = []
            best = None
            for per in cache.slots[f]:
                vbest = None
                for s in per:
                    c = slot_cost(state, f, s, "evaluate", cfg)
                    if vbest is None or c < vbest:
                        vbest = c
                    if best is None or c < best[0]:
                        best = (c, s)
                if vbest is not None:
                    per_vehicle.append(vbest)
            if best is None:
                raise RepairFailed(f"no feasible slot for flight {f}")
            regrets.append(regret_value(per_vehicle, k))
            bests.append(best[1])
        idx = weighted_index(regrets, rng)
        f = pending.pop(idx)
        _commit(state, cache, f, bests[idx])


def weighted_index(weights: list[float], rng: Random) -> int:
    """Index drawn with probability proportional to weight; uniform if all zero."""
    total = sum(weights)
    if total <= 0:
        return rng.randrange(len(weights))
    x = rng.random() * total
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if x < acc:
            return i
    return max(i for i, w in enumerate(weights) if w > 0)


def repair_priority(state: SearchState, pairs: list[PrioritySwap], ctx=None) -> None:
    """Swap each removed pair into the other's former slot, last pair first."""
    model = state.model
    for p in reversed(pairs):
        moves = [(p.high_slot, p.low), (p.low_slot, p.high)]
        for (v, _), f in moves:
            if f not in model.serviceable[v]:
                raise RepairFailed(f"vehicle {v} cannot serve flight {f}")
        # ascending index keeps the recorded positions valid within one route
        for (v, pos), f in sorted(moves, key=lambda m: m[0]):
            state.insert(f, v, pos)


RepairFn = Callable[[SearchState, list, Random, object], None]

REPAIR_OPERATORS: dict[str, RepairFn] = {
    "random": repair_random,
    "greedy": lambda s, rem, rng, ctx: repair_greedy(s, rem, "evaluate", ctx),
    "regret": lambda s, rem, rng, ctx: repair_kth_regret(s, rem, ctx.config.k_regret, rng, ctx),
    "delay": lambda s, rem, rng, ctx: repair_greedy(s, rem, "delay", ctx),
}
