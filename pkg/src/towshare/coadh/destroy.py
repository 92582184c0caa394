"""Destroy operators. Each removes flights from a SearchState in place and
returns the removed flights (priority removal returns swap pairs instead)."""

from __future__ import annotations

from dataclasses import dataclass
from random import Random
from typing import Callable

from .state import RepairFailed, SearchState

COST_KINDS = ("evaluate", "travel", "delay")


@dataclass(frozen=True)
class PrioritySwap:
    """A removed (priority-0, priority-1) flight pair and their former slots."""

    low: int
    high: int
    low_slot: tuple[int, int]
    high_slot: tuple[int, int]


def destroy_random(state: SearchState, n: int, rng: Random, ctx) -> list[int]:
    removed = []
    for _ in range(min(n, state.n_scheduled)):
        cands = [f for f in state.scheduled() if state.without(f)[2] is not None]
        if not cands:
            break
        f = cands[rng.randrange(len(cands))]
        state.remove(f)
        removed.append(f)
    return removed


def removal_gains(state: SearchState, cost_kind: str, ctx) -> list[tuple[float, int]]:
    """(gain, flight) for every removable flight, in schedule order.

    ``evaluate`` uses the full evaluate function, ``travel`` the energy cost
    only, ``delay`` the unclamped delay penalty (c_eval_dl times delay saved).
    """
    cfg = ctx.config
    model = state.model
    c_e = model.c_e
    base_pen = state.pen_delay(cfg)
    out = []
    for f in state.scheduled():
        v, _, ev = state.without(f)
        if ev is None:
            continue
        old = state.evals[v]
        d_dist = old.dist - ev.dist
        d_delay = old.delay - ev.delay
        if cost_kind == "travel":
            gain = c_e * d_dist
        elif cost_kind == "delay":
            gain = cfg.c_eval_dl * d_delay
        else:
            dv = model.violation_delta(f, state.op_of[f], state.op_of)
            pen = state.pen_delay(cfg, state.delay - d_delay)
            gain = c_e * d_dist + (base_pen - pen) + cfg.c_eval_pr * dv
        out.append((gain, f))
    return out


def destroy_worst(state: SearchState, n: int, cost_kind: str, rng: Random, ctx) -> list[int]:
    """Biased worst removal: take rank floor(D * y**chi_worst) of the gain list."""
    if cost_kind not in COST_KINDS:
        raise ValueError(f"unknown cost kind {cost_kind!r}")
    chi = ctx.config.chi_worst
    removed = []
    for _ in range(min(n, state.n_scheduled)):
        gains = removal_gains(state, cost_kind, ctx)
        if not gains:
            break
        gains.sort(key=lambda g: -g[0])
        y = rng.random()
        idx = min(int(len(gains) * y ** chi), len(gains) - 1)
        f = gains[idx][1]
        state.remove(f)
        removed.append(f)
    return removed


def relatedness(ctx, i: int, j: int) -> float:
    """Shaw relatedness; smaller means more similar."""
    cfg = ctx.config
    d = ctx.model.d[i][j] / ctx.max_flight_distance if ctx.max_flight_distance > 0 else 0.0
    e = ctx.model.E
    spread = ctx.earliest_spread
    t = abs(e[i] - e[j]) / spread if spread > 0 else 0.0
    return cfg.chi_d * d + cfg.chi_e * t


def destroy_shaw(state: SearchState, n: int, rng: Random, ctx) -> list[int]:
    n = min(n, state.n_scheduled)
    removed: list[int] = []
    if n <= 0:
        return removed
    sched = [f for f in state.scheduled() if state.without(f)[2] is not None]
    if not sched:
        return removed
    first = sched[rng.randrange(len(sched))]
    state.remove(first)
    removed.append(first)
    while len(removed) < n:
        ref = removed[rng.randrange(len(removed))]
        cands = [f for f in state.scheduled() if state.without(f)[2] is not None]
        if not cands:
            break
        cands.sort(key=lambda f: relatedness(ctx, ref, f))
        f = cands[min(ctx.config.chi_shaw, len(cands)) - 1]
        state.remove(f)
        removed.append(f)
    return removed


def delay_chains(state: SearchState) -> list[tuple[int, int, int]]:
    """All chains of >= 2 consecutively delayed flights as (length, vehicle, start)."""
    chains = []
    for v, ev in enumerate(state.evals):
        run_start, run = 0, 0
        for pos, dl in enumerate(ev.delays + (0.0,)):
            if dl > 0:
                if run == 0:
                    run_start = pos
                run += 1
            else:
                if run >= 2:
                    chains.append((run, v, run_start))
                run = 0
    return chains


def destroy_delay_chain(state: SearchState, n: int, rng: Random, ctx) -> list[int]:
    """Remove the first flight of the longest delay chain, repeatedly.

    Falls back to delay-based removal once no chain of two or more remains.
    """
    removed = []
    n = min(n, state.n_scheduled)
    while len(removed) < n:
        chains = delay_chains(state)
        if not chains:
            break
        length, v, start = min(chains, key=lambda c: (-c[0], c[1], c[2]))
        f = state.routes[v][start]
        try:
            state.remove(f)
        except RepairFailed:
            break
        removed.append(f)
    if len(removed) < n:
        removed += destroy_worst(state, n - len(removed), "delay", rng, ctx)
    return removed


def priority_candidates(state: SearchState, ctx) -> dict[int, list[int]]:
    """Served priority-0 flights mapped to swappable overlapping priority-1 partners.

    A partner j of i (served by operator r, p_ir = 0) has p_jr = 1, overlaps
    i, is served by another operator, and the swap keeps both flights inside
    the serviceable sets of the vehicles involved.
    """
    model = state.model
    if not model.cooperated:
        return {}
    out: dict[int, list[int]] = {}
    for r, lo, hi in model.pairs:
        if state.op_of.get(lo) != r:
            continue
        other = state.op_of.get(hi)
        if other is None or other == r:
            continue
        v_lo, v_hi = state.where[lo], state.where[hi]
        if hi in model.serviceable[v_lo] and lo in model.serviceable[v_hi]:
            out.setdefault(lo, []).append(hi)
    return out


def destroy_priority(state: SearchState, n: int, rng: Random, ctx) -> list[PrioritySwap] | None:
    """Remove (priority-0, priority-1) overlapping pairs for a swap repair.

    Returns None when the solution has no qualifying pair; the caller then
    reselects a destroy operator without scoring this one.
    """
    cands = priority_candidates(state, ctx)
    if not cands:
        return None
    pairs: list[PrioritySwap] = []
    removed = 0
    while removed < n and cands:
        lows = sorted(cands)
        i = lows[rng.randrange(len(lows))]
        partners = cands[i]
        j = partners[rng.randrange(len(partners))]
        slot_i = (state.where[i], state.routes[state.where[i]].index(i))
        slot_j = (state.where[j], state.routes[state.where[j]].index(j))
        try:
            state.remove(i)
        except RepairFailed:
            break
        try:
            state.remove(j)
        except RepairFailed:
            state.insert(i, *slot_i)
            break
        pairs.append(PrioritySwap(i, j, slot_i, slot_j))
        removed += 2
        cands = priority_candidates(state, ctx)
    return pairs or None


DestroyFn = Callable[[SearchState, int, Random, object], object]

DESTROY_OPERATORS: dict[str, DestroyFn] = {
    "random": destroy_random,
    "worst": lambda s, n, rng, ctx: destroy_worst(s, n, "evaluate", rng, ctx),
    "shaw": destroy_shaw,
    "travel_cost": lambda s, n, rng, ctx: destroy_worst(s, n, "travel", rng, ctx),
    "delay": lambda s, n, rng, ctx: destroy_worst(s, n, "delay", rng, ctx),
    "delay_chain": destroy_delay_chain,
    "priority": destroy_priority,
}

__all__ = [
    "DESTROY_OPERATORS", "PrioritySwap", "delay_chains", "destroy_delay_chain",
    "destroy_priority", "destroy_random", "destroy_shaw", "destroy_worst",
    "priority_candidates", "relatedness", "removal_gains",
]
