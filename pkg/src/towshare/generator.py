"""Synthetic scenario generator.

The real apron network is not available, so stands, depots and chargers sit
on a rectangular synthetic apron with straight-line distances.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Mapping

import numpy as np

from .instance import Flight, Graph, Instance, Node, Operator, VehicleParams

# Flight counts of the three operators in the full-day schedule.
FULL_DAY_SHARES = (382, 182, 194)


@dataclass(frozen=True)
class Profile:
    n_flights: int
    horizon: float
    fleet_sizes: tuple[int, ...] = (4, 4, 4)
    shares: tuple[float, ...] = FULL_DAY_SHARES
    delay_costs: tuple[float, ...] = (8.0, 8.0, 4.0)
    service_radius: float = 1500.0
    shared_counts: tuple[int, ...] | None = None  # None: whole fleet shared
    priority_variance: float = 0.1
    n_chargers: int = 2
    apron: tuple[float, float] = (2000.0, 800.0)
    window: tuple[float, float] = (5.0, 15.0)
    service_duration: float = 3.0
    service_energy: float = 4.0
    mode: str = "cooperated"
    vehicle_params: VehicleParams = field(default_factory=VehicleParams)

    def with_overrides(self, overrides: Mapping[str, Any]) -> "Profile":
        known = set(self.__dataclass_fields__)
        bad = set(overrides) - known
        if bad:
            raise ValueError(f"unknown profile fields: {sorted(bad)}")
        conv = dict(overrides)
        for k in ("fleet_sizes", "shares", "delay_costs", "shared_counts", "apron", "window"):
            if conv.get(k) is not None:
                conv[k] = tuple(conv[k])
        if isinstance(conv.get("vehicle_params"), Mapping):
            conv["vehicle_params"] = replace(self.vehicle_params, **conv["vehicle_params"])
        return replace(self, **conv)


PROFILES: dict[str, Profile] = {
    "A-like": Profile(n_flights=56, horizon=60.0),
    "B-like": Profile(n_flights=148, horizon=180.0),
    "C-like": Profile(n_flights=758, horizon=1440.0),
    # "tiny" is randomised per seed, see tiny_profile
    "custom": Profile(n_flights=40, horizon=120.0),
}
PROFILE_NAMES = ("tiny", "A-like", "B-like", "C-like", "custom")


def tiny_profile(rng: np.random.Generator) -> Profile:
    """2 operators, 4-8 flights, 2-3 vehicles, 1-2 chargers on a small apron."""
    n_flights = int(rng.integers(4, 9))
    n_vehicles = int(rng.integers(2, 4))
    fleets = (1, 1) if n_vehicles == 2 else ((2, 1) if rng.random() < 0.5 else (1, 2))
    return Profile(
        n_flights=n_flights,
        horizon=float(8 * n_flights),
        fleet_sizes=fleets,
        shares=(1.0, 1.0),
        delay_costs=(8.0, 4.0),
        service_radius=600.0,
        n_chargers=int(rng.integers(1, 3)),
        apron=(1000.0, 400.0),
        service_energy=6.0,
    )


def largest_remainder(total: int, shares) -> list[int]:
    """Split ``total`` proportionally to ``shares`` (Hamilton method)."""
    s = sum(shares)
    raw = [total * x / s for x in shares]
    out = [math.floor(r) for r in raw]
    order = sorted(range(len(shares)), key=lambda i: (-(raw[i] - out[i]), i))
    for i in order[: total - sum(out)]:
        out[i] += 1
    return out


def priority_fraction(variance: float) -> float:
    """Fraction pi of priority-1 flights with pi(1 - pi) = variance (pi <= 1/2)."""
    variance = min(max(variance, 0.0), 0.25)
    return (1.0 - math.sqrt(1.0 - 4.0 * variance)) / 2.0


def depot_positions(n: int, w: float, h: float) -> list[tuple[float, float]]:
    """Depots spread round the apron edge: left, right, bottom, top, then corners."""
    slots = [(0.0, h / 2), (w, h / 2), (w / 2, 0.0), (w / 2, h),
             (0.0, 0.0), (w, h), (w, 0.0), (0.0, h)]
    return [slots[i % len(slots)] for i in range(n)]


def charger_positions(n: int, w: float, h: float) -> list[tuple[float, float]]:
    return [(w * (i + 1) / (n + 1), h / 2) for i in range(n)]


def generate(profile: str | Profile = "A-like", seed: int = 0,
             overrides: Mapping[str, Any] | None = None, name: str | None = None) -> Instance:
    """Build a deterministic scenario from a named profile (or a Profile) and a seed."""
    rng = np.random.default_rng(seed)
    if isinstance(profile, Profile):
        prof, label = profile, "custom"
    elif profile == "tiny":
        prof, label = tiny_profile(rng), profile
    elif profile in PROFILES:
        prof, label = PROFILES[profile], profile
    else:
        raise ValueError(f"unknown profile {profile!r}; choose from {PROFILE_NAMES}")
    if overrides:
        prof = prof.with_overrides(overrides)
    n_ops = len(prof.fleet_sizes)
    if len(prof.shares) != n_ops or len(prof.delay_costs) < n_ops:
        raise ValueError("shares and delay_costs must match the number of operators")
    w, h = prof.apron

    nodes: list[Node] = []
    for i in range(prof.n_flights):
        x, y = rng.uniform(0, w), rng.uniform(0, h)
        nodes.append(Node(f"f{i + 1}", "flight", round(float(x), 1), round(float(y), 1)))
    for i, (x, y) in enumerate(depot_positions(n_ops, w, h)):
        nodes.append(Node(f"o{i + 1}", "depot_out", x, y))
        nodes.append(Node(f"d{i + 1}", "depot_in", x, y))
    for i, (x, y) in enumerate(charger_positions(prof.n_chargers, w, h)):
        nodes.append(Node(f"e{i + 1}", "charging", x, y))

    counts = largest_remainder(prof.n_flights, prof.shares)
    owners = [r for r, c in enumerate(counts) for _ in range(c)]
    owners = [owners[i] for i in rng.permutation(len(owners))]
    lo_w, hi_w = prof.window
    flights = []
    for i in range(prof.n_flights):
        width = float(rng.uniform(lo_w, hi_w))
        e = float(rng.uniform(0, max(prof.horizon - width, 0.0)))
        e = round(e, 1)
        flights.append(Flight(f"f{i + 1}", f"r{owners[i] + 1}", e,
                              round(min(e + width, prof.horizon), 1),
                              prof.service_duration, prof.service_energy))
    flights.sort(key=lambda f: int(f.id[1:]))

    pi = priority_fraction(prof.priority_variance)
    operators = []
    for r in range(n_ops):
        own = [f.id for f in flights if f.owner == f"r{r + 1}"]
        k = round(pi * len(own))
        chosen = sorted(rng.choice(len(own), size=k, replace=False).tolist()) if k else []
        shared = prof.fleet_sizes[r] if prof.shared_counts is None else prof.shared_counts[r]
        operators.append(Operator(
            f"r{r + 1}", f"o{r + 1}", f"d{r + 1}", prof.fleet_sizes[r], shared,
            prof.service_radius, {own[j]: 1 for j in chosen}, float(prof.delay_costs[r])))

    graph = Graph.build(nodes, prof.vehicle_params, prof.horizon)
    return Instance(graph, tuple(flights), tuple(operators), prof.vehicle_params, prof.mode,
                    None, name or f"{label}-seed{seed}")


def profile_dict(profile: Profile) -> dict[str, Any]:
    return asdict(profile)
