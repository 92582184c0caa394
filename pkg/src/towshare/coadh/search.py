"""Simulated-annealing driven adaptive large neighbourhood search."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from random import Random
from typing import Any, Mapping, Sequence

from ..errors import InfeasibleError
from ..instance import Instance
from ..schedule import EvalConfig, Solution, route_model
from .destroy import DESTROY_OPERATORS
from .repair import REPAIR_OPERATORS, repair_priority
from .state import RepairFailed, SearchContext, SearchState

OUTCOMES = ("new_best", "accepted", "rejected")


@dataclass(frozen=True)
class SearchConfig:
    t_max: float = 1e4
    cooling: float = 0.99
    weights: tuple[float, float, float] = (30.0, 18.0, 12.0)
    initial_score: float = 50.0
    chi_worst: float = 6.0
    chi_shaw: int = 3
    chi_d: float = 1.0
    chi_e: float = 1.0
    destroy_counts: tuple[int, ...] = (2, 4, 6)
    k_regret: int = 2
    c_eval_dl: float = 1.0
    c_eval_pr: float = 50.0
    t_delay: float = math.inf
    seed: int = 0
    max_attempts: int = 20

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "destroy_counts", tuple(int(n) for n in self.destroy_counts))
        object.__setattr__(self, "t_delay", float(self.t_delay))
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if not 0 < self.cooling < 1:
            raise ValueError("cooling must lie in (0, 1)")
        if len(self.weights) != 3:
            raise ValueError("weights needs three values")
        w1, w2, w3 = self.weights
        if not w1 >= w2 >= w3 >= 0:
            raise ValueError("weights must satisfy w1 >= w2 >= w3 >= 0")
        if not self.initial_score > 0:
            raise ValueError("initial_score must be positive")
        if not self.destroy_counts or min(self.destroy_counts) < 1:
            raise ValueError("destroy_counts must be non-empty positive integers")
        if self.k_regret < 2:
            raise ValueError("k_regret must be at least 2")
        if self.chi_shaw < 1 or self.chi_worst < 0:
            raise ValueError("chi_shaw >= 1 and chi_worst >= 0 required")
        if self.c_eval_dl < 0 or self.c_eval_pr < 0 or self.t_delay < 0:
            raise ValueError("penalty costs and t_delay must be non-negative")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SearchConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if data.get("t_delay", 0) in (None, "inf"):
            data["t_delay"] = math.inf
        return cls(**data)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["weights"] = list(self.weights)
        d["destroy_counts"] = list(self.destroy_counts)
        if math.isinf(self.t_delay):
            d["t_delay"] = None
        return d

    @property
    def eval_config(self) -> EvalConfig:
        return EvalConfig(self.t_delay, self.c_eval_dl, self.c_eval_pr)

    @property
    def iterations(self) -> int:
        if self.t_max <= 1:
            return 0
        return math.ceil(math.log(self.t_max) / -math.log(self.cooling))

    def replace(self, **changes) -> "SearchConfig":
        return SearchConfig(**{**asdict(self), **changes})


@dataclass
class OperatorBank:
    destroy_names: list[str]
    repair_names: list[str]
    counts: list[int]
    destroy_scores: list[float]
    repair_scores: list[float]
    count_scores: list[float]

    @classmethod
    def fresh(cls, config: SearchConfig,
              destroy_names: Sequence[str] = tuple(DESTROY_OPERATORS),
              repair_names: Sequence[str] = tuple(REPAIR_OPERATORS)) -> "OperatorBank":
        s = config.initial_score
        return cls(list(destroy_names), list(repair_names), list(config.destroy_counts),
                   [s] * len(destroy_names), [s] * len(repair_names),
                   [s] * len(config.destroy_counts))

    def probabilities(self, which: str) -> list[float]:
        scores = getattr(self, f"{which}_scores")
        total = sum(scores)
        return [s / total for s in scores]


def select_index(scores: Sequence[float], rng: Random, exclude: frozenset = frozenset()) -> int:
    """Roulette-wheel draw: index i with probability scores[i] / sum(scores)."""
    idx = [i for i in range(len(scores)) if i not in exclude]
    total = sum(scores[i] for i in idx)
    x = rng.random() * total
    acc = 0.0
    for i in idx:
        acc += scores[i]
        if x < acc:
            return i
    return idx[-1]


def update_scores(bank: OperatorBank, chosen: tuple[int, int | None, int], outcome: str,
                  weights: Sequence[float]) -> None:
    """Add w1/w2/w3 to the chosen destroy, repair and count scores.

    A repair index of None (the forced priority repair) leaves the repair
    bank untouched.
    """
    w = weights[OUTCOMES.index(outcome)]
    d, r, c = chosen
    bank.destroy_scores[d] += w
    if r is not None:
        bank.repair_scores[r] += w
    bank.count_scores[c] += w


def initial_state(instance: Instance, config: Any = None) -> SearchState:
    """Greedy construction in order of earliest start.

    Each flight is appended to the serviceable trajectory with the smallest
    evaluate increment; if no append is energy-feasible any position is tried.
    """
    cfg = config or EvalConfig()
    model = route_model(instance)
    state = SearchState.empty(model)
    pos = instance.flight_pos
    order = sorted(instance.flights, key=lambda f: (f.earliest, pos[f.id]))
    idx = instance.graph.index
    n_v = len(model.vehicles)
    for fl in order:
        f = idx[fl.id]
        cands = [v for v in range(n_v) if f in model.serviceable[v]]
        if not cands:
            raise InfeasibleError(f"flight {fl.id} has no serviceable fleet")
        best = None
        for v in cands:
            r = state.routes[v]
            ev = model.route(v, r + (f,))
            if ev is None:
                continue
            c = _increment(state, f, v, ev, cfg)
            if best is None or c < best[0]:
                best = (c, v, len(r), ev)
        if best is None:
            for v in cands:
                r = state.routes[v]
                for p in range(len(r) + 1):
                    ev = model.route(v, r[:p] + (f,) + r[p:])
                    if ev is None:
                        continue
                    c = _increment(state, f, v, ev, cfg)
                    if best is None or c < best[0]:
                        best = (c, v, p, ev)
        if best is None:
            raise InfeasibleError(f"flight {fl.id} cannot be placed within battery limits")
        _, v, p, ev = best
        state.insert(f, v, p, ev)
    return state


def _increment(state: SearchState, f: int, v: int, ev, cfg) -> float:
    model = state.model
    old = state.evals[v]
    pen = state.pen_delay(cfg, state.delay + ev.delay - old.delay) - state.pen_delay(cfg)
    dv = model.violation_delta(f, model.vehicle_ops[v], state.op_of)
    return model.c_e * (ev.dist - old.dist) + pen + cfg.c_eval_pr * dv


def initial_solution(instance: Instance, config: Any = None) -> Solution:
    state = initial_state(instance, config)
    return state.model.solution(state.routes, config)


@dataclass
class IterationRecord:
    iteration: int
    temperature: float
    current: float
    best: float
    destroy: str
    repair: str
    n: int
    outcome: str


@dataclass
class SearchResult:
    solution: Solution
    state: SearchState
    bank: OperatorBank
    history: list[IterationRecord] = field(default_factory=list)

    def write_trace(self, path: str | Path) -> None:
        write_trace(self.history, path)


def write_trace(history: Sequence[IterationRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "temperature", "current", "best", "destroy", "repair",
                    "n", "outcome"])
        for h in history:
            w.writerow([h.iteration, f"{h.temperature:.6f}", f"{h.current:.6f}",
                        f"{h.best:.6f}", h.destroy, h.repair, h.n, h.outcome])


def _neighbour(x: SearchState, bank: OperatorBank, rng: Random, ctx: SearchContext):
    """One destroy/repair move. Returns (x', (d, r, c)) or None after max_attempts."""
    cfg = ctx.config
    for _ in range(cfg.max_attempts):
        c = select_index(bank.count_scores, rng)
        n = bank.counts[c]
        skip: set[int] = set()
        while True:
            d = select_index(bank.destroy_scores, rng, frozenset(skip))
            xp = x.copy()
            removed = DESTROY_OPERATORS[bank.destroy_names[d]](xp, n, rng, ctx)
            if removed is not None:
                break
            # no candidates: reselect without scoring
            skip.add(d)
            if len(skip) == len(bank.destroy_names):
                return None
        try:
            if bank.destroy_names[d] == "priority":
                repair_priority(xp, removed, ctx)
                r = None
            else:
                r = select_index(bank.repair_scores, rng)
                REPAIR_OPERATORS[bank.repair_names[r]](xp, removed, rng, ctx)
        except RepairFailed:
            continue
        return xp, (d, r, c)
    return None


def search(instance: Instance, config: SearchConfig | None = None,
           initial: SearchState | None = None) -> SearchResult:
    """Run the search and keep the per-iteration history."""
    config = config or SearchConfig()
    rng = Random(config.seed)
    model = route_model(instance)
    ctx = SearchContext(model, config)
    x = initial.copy() if initial is not None else initial_state(instance, config)
    best = x
    fx = fbest = x.evaluate(config)
    bank = OperatorBank.fresh(config)
    history: list[IterationRecord] = []
    t = config.t_max
    it = 0
    while t > 1:
        move = _neighbour(x, bank, rng, ctx)
        if move is None:
            history.append(IterationRecord(it, t, fx, fbest, "", "", 0, "rejected"))
        else:
            xp, chosen = move
            fxp = xp.evaluate(config)
            if fxp < fbest - 1e-9:
                best = x = xp
                fx = fbest = fxp
                outcome = "new_best"
            elif rng.random() < math.exp(-max(fxp - fx, 0.0) / t):
                x, fx = xp, fxp
                outcome = "accepted"
            else:
                outcome = "rejected"
            update_scores(bank, chosen, outcome, config.weights)
            d, r, c = chosen
            history.append(IterationRecord(
                it, t, fx, fbest, bank.destroy_names[d],
                "priority" if r is None else bank.repair_names[r], bank.counts[c], outcome))
        t *= config.cooling
        it += 1
    return SearchResult(model.solution(best.routes, config.eval_config), best, bank, history)


def run(instance: Instance, config: SearchConfig | None = None) -> Solution:
    """Best solution found by the search."""
    return search(instance, config).solution
