"""Epsilon-constraint sweeps over the total-delay bound."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .coadh.search import SearchConfig, search
from .errors import InfeasibleError
from .exact import solve_exact
from .instance import Instance
from .schedule import EPS, Solution

SOLVERS = ("coadh", "exact")
DEFAULT_LEVELS = 4


@dataclass
class ParetoPoint:
    bound: float
    solution: Solution
    f1: float
    f2: float
    solver: str = "coadh"
    seed: int = 0


@dataclass
class ParetoSet:
    points: list[ParetoPoint]
    mode: str
    skipped: list[float] = field(default_factory=list)  # bounds with no feasible point

    def __len__(self) -> int:
        return len(self.points)

    def mean(self) -> tuple[float, float]:
        """Arithmetic mean of (f1, f2) over the points."""
        if not self.points:
            return math.nan, math.nan
        n = len(self.points)
        return sum(p.f1 for p in self.points) / n, sum(p.f2 for p in self.points) / n

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bound", "f1", "f2", "solver", "seed"])
            for p in self.points:
                w.writerow([_num(p.bound), f"{p.f1:.6f}", f"{p.f2:.6f}", p.solver, p.seed])


def _num(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.6f}"


def dominance_filter(points: Sequence) -> list:
    """Drop weakly dominated points (and duplicates); order by f2 then f1.

    Accepts ParetoPoint objects or plain (f1, f2) pairs.
    """
    def key(p):
        return (p.f1, p.f2) if hasattr(p, "f1") else (p[0], p[1])

    ordered = sorted(points, key=lambda p: (key(p)[1], key(p)[0]))
    kept: list = []
    for p in ordered:
        f1, f2 = key(p)
        if any(key(q)[0] <= f1 + EPS and key(q)[1] <= f2 + EPS for q in kept):
            continue
        kept.append(p)
    return kept


def geometric_levels(top: float, n: int = DEFAULT_LEVELS) -> list[float]:
    """``n`` bounds spaced geometrically from ``top`` down to max(1, floor(top / 8))."""
    if top <= 0:
        return [0.0]
    low = max(1.0, math.floor(top / 8))
    if low >= top or n == 1:
        return [top]
    ratio = (low / top) ** (1 / (n - 1))
    return [top * ratio ** i for i in range(n)]


def _solve(instance: Instance, config: SearchConfig, bound: float, solver: str):
    """Solution at one bound, or None when the bound cannot be met."""
    if solver == "exact":
        try:
            return solve_exact(instance, bound).solution
        except InfeasibleError:
            return None
    sol = search(instance, config.replace(t_delay=bound)).solution
    if sol.penalty_delay > EPS:
        return None
    return sol


def default_bounds(instance: Instance, config: SearchConfig | None = None,
                   solver: str = "coadh", n: int = DEFAULT_LEVELS) -> list[float]:
    config = config or SearchConfig()
    top = _solve(instance, config, math.inf, solver)
    return geometric_levels(top.f2, n)


def epsilon_sweep(instance: Instance, config: SearchConfig | None = None,
                  bounds: Sequence[float] | None = None, solver: str = "coadh") -> ParetoSet:
    """Minimise f1 under each delay bound and keep the non-dominated results."""
    if solver not in SOLVERS:
        raise ValueError(f"unknown solver {solver!r}")
    config = config or SearchConfig()
    if bounds is None:
        bounds = default_bounds(instance, config, solver)
    bounds = [float(b) for b in bounds]
    if any(b < 0 for b in bounds):
        raise ValueError("bounds must be non-negative")
    if any(b <= c for b, c in zip(bounds, bounds[1:])):
        raise ValueError("bounds must be strictly decreasing")
    points, skipped = [], []
    for b in bounds:
        sol = _solve(instance, config, b, solver)
        if sol is None:
            skipped.append(b)
            continue
        points.append(ParetoPoint(b, sol, sol.f1, sol.f2, solver, config.seed))
    return ParetoSet(dominance_filter(points), instance.mode, skipped)
