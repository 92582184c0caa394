"""Scenario data model: airport graph, flights, operators and sharing structures.

Units are fixed throughout the package: meters, minutes, kWh, currency units.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import ScenarioError

SCHEMA_VERSION = 1

NODE_KINDS = ("flight", "depot_out", "depot_in", "charging")
MODES = ("separated", "cooperated")


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    x: float = 0.0
    y: float = 0.0


@dataclass(frozen=True)
class VehicleParams:
    """Tractor performance, shared by every vehicle (homogeneous fleet)."""

    capacity: float = 50.0  # kWh
    speed: float = 10.0  # km/h
    consumption_rate: float = 0.5  # kWh per km
    charge_rate: float = 0.8  # kWh per minute
    min_soc_fraction: float = 0.3
    unit_energy_cost: float = 1.0  # currency per meter

    @property
    def min_soc(self) -> float:
        return self.capacity * self.min_soc_fraction

    @property
    def full_charge_time(self) -> float:
        return self.capacity / self.charge_rate


@dataclass(frozen=True, eq=False)
class Graph:
    nodes: tuple[Node, ...]
    distance: np.ndarray
    travel_time: np.ndarray
    energy: np.ndarray
    horizon: float
    big_m: float

    @classmethod
    def build(
        cls,
        nodes: Iterable[Node],
        params: VehicleParams,
        horizon: float,
        big_m: float | None = None,
        distance: np.ndarray | None = None,
    ) -> "Graph":
        nodes = tuple(nodes)
        if distance is None:
            xy = np.array([[n.x, n.y] for n in nodes], dtype=float).reshape(-1, 2)
            distance = np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=-1))
        distance = np.array(distance, dtype=float)
        km = distance / 1000.0
        travel_time = km / params.speed * 60.0
        # kWh = km * kWh/km
        energy = km * params.consumption_rate
        for arr in (distance, travel_time, energy):
            arr.flags.writeable = False
        return cls(nodes, distance, travel_time, energy, float(horizon),
                   float(horizon if big_m is None else big_m))

    @cached_property
    def index(self) -> dict[str, int]:
        return {n.id: i for i, n in enumerate(self.nodes)}

    def ids_of_kind(self, kind: str) -> list[str]:
        return [n.id for n in self.nodes if n.kind == kind]

    def dist(self, a: str, b: str) -> float:
        return float(self.distance[self.index[a], self.index[b]])


@dataclass(frozen=True)
class Flight:
    id: str
    owner: str
    earliest: float
    latest: float
    service_duration: float = 3.0
    service_energy: float = 0.0


@dataclass(frozen=True)
class Operator:
    id: str
    depot_out: str
    depot_in: str
    fleet_size: int
    shared_count: int = 0
    service_radius: float = 0.0
    priority: Mapping[str, int] = field(default_factory=dict)
    unit_delay_cost: float = 1.0

    def priority_of(self, flight_id: str) -> int:
        return int(self.priority.get(flight_id, 0))


@dataclass(frozen=True)
class Vehicle:
    id: str
    operator: str
    fleet: str  # "shared" | "non_shared"


@dataclass(frozen=True)
class VirtualFleet:
    owner: str
    kind: str  # "shared" | "non_shared"
    vehicle_ids: tuple[str, ...]
    serviceable: frozenset[str]


def overlap_flags(flights: Iterable[Flight]) -> np.ndarray:
    """Pairwise closed-interval time-window overlap matrix (zero diagonal)."""
    flights = list(flights)
    e = np.array([f.earliest for f in flights], dtype=float)
    l = np.array([f.latest for f in flights], dtype=float)
    q = ((e[:, None] <= l[None, :]) & (e[None, :] <= l[:, None])).astype(np.int8)
    np.fill_diagonal(q, 0)
    return q


@dataclass(frozen=True, eq=False)
class Instance:
    graph: Graph
    flights: tuple[Flight, ...]
    operators: tuple[Operator, ...]
    vehicle_params: VehicleParams
    mode: str = "cooperated"
    # Operators that pool their shared fleets. None means every operator
    # (cooperated mode) or none (separated mode).
    coalition: frozenset[str] | None = None
    name: str = ""

    @cached_property
    def q(self) -> np.ndarray:
        q = overlap_flags(self.flights)
        q.flags.writeable = False
        return q

    @cached_property
    def flight_by_id(self) -> dict[str, Flight]:
        return {f.id: f for f in self.flights}

    @cached_property
    def flight_pos(self) -> dict[str, int]:
        return {f.id: i for i, f in enumerate(self.flights)}

    @cached_property
    def operator_by_id(self) -> dict[str, Operator]:
        return {o.id: o for o in self.operators}

    @cached_property
    def own_flights(self) -> dict[str, frozenset[str]]:
        own: dict[str, set[str]] = {o.id: set() for o in self.operators}
        for f in self.flights:
            own[f.owner].add(f.id)
        return {r: frozenset(s) for r, s in own.items()}

    @property
    def members(self) -> frozenset[str]:
        if self.mode == "separated":
            return frozenset()
        if self.coalition is None:
            return frozenset(o.id for o in self.operators)
        return frozenset(self.coalition)

    @cached_property
    def fleets(self) -> tuple[VirtualFleet, ...]:
        return tuple(split_virtual_operators(self))

    @cached_property
    def vehicles(self) -> tuple[Vehicle, ...]:
        fleet_of = {v: fl.kind for fl in self.fleets for v in fl.vehicle_ids}
        return tuple(
            Vehicle(vid, o.id, fleet_of[vid])
            for o in self.operators
            for vid in vehicle_ids(o)
        )

    @cached_property
    def serviceable_by_vehicle(self) -> dict[str, frozenset[str]]:
        return {v: fl.serviceable for fl in self.fleets for v in fl.vehicle_ids}

    @cached_property
    def operators_for_flight(self) -> dict[str, tuple[str, ...]]:
        """R_f: operators with at least one vehicle able to serve each flight."""
        out: dict[str, list[str]] = {f.id: [] for f in self.flights}
        for o in self.operators:
            served: set[str] = set()
            for fl in self.fleets:
                if fl.owner == o.id and fl.vehicle_ids:
                    served |= fl.serviceable
            for fid in sorted(served, key=self.flight_pos.__getitem__):
                out[fid].append(o.id)
        return {k: tuple(v) for k, v in out.items()}

    def replace(self, **changes: Any) -> "Instance":
        """Copy with some top-level fields replaced (derived data recomputed)."""
        fields = dict(graph=self.graph, flights=self.flights, operators=self.operators,
                      vehicle_params=self.vehicle_params, mode=self.mode,
                      coalition=self.coalition, name=self.name)
        fields.update(changes)
        if "vehicle_params" in changes and "graph" not in changes:
            g = self.graph
            fields["graph"] = Graph.build(g.nodes, fields["vehicle_params"], g.horizon,
                                          g.big_m, distance=np.array(g.distance))
        return Instance(**fields)


def vehicle_ids(op: Operator) -> list[str]:
    return [f"{op.id}-k{i + 1}" for i in range(op.fleet_size)]


def serviceable_set(operator: Operator, instance: Instance) -> frozenset[str]:
    """Flights the operator's shared fleet may serve.

    Priority-marked flights, flights within ``service_radius`` of the
    operator's outbound depot, and always the operator's own flights.
    """
    g = instance.graph
    depot = g.index[operator.depot_out]
    out = set(instance.own_flights[operator.id])
    for f in instance.flights:
        if operator.priority_of(f.id) == 1:
            out.add(f.id)
        elif g.distance[g.index[f.id], depot] <= operator.service_radius:
            out.add(f.id)
    return frozenset(out)


def split_virtual_operators(instance: Instance) -> list[VirtualFleet]:
    """Split each operator into a non-shared fleet and a shared fleet.

    The first ``shared_count`` vehicles of an operator form the shared fleet.
    Operators outside the coalition (or every operator in separated mode)
    keep a single non-shared fleet serving only their own flights.
    """
    members = instance.members
    fleets = []
    for op in instance.operators:
        ids = vehicle_ids(op)
        own = instance.own_flights[op.id]
        if op.id not in members:
            fleets.append(VirtualFleet(op.id, "non_shared", tuple(ids), own))
            continue
        n_shared = op.shared_count
        wide = serviceable_set(op, instance)
        shared_ok = frozenset(
            f for f in wide
            if f in own or instance.flight_by_id[f].owner in members
        )
        fleets.append(VirtualFleet(op.id, "non_shared", tuple(ids[n_shared:]), own))
        fleets.append(VirtualFleet(op.id, "shared", tuple(ids[:n_shared]), shared_ok))
    return fleets


# ---------------------------------------------------------------------------
# Scenario files

def _num(value: Any, path: str, *, integer: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"expected a number, got {value!r}", path)
    if not math.isfinite(value):
        raise ScenarioError("must be finite", path)
    if integer and int(value) != value:
        raise ScenarioError(f"expected an integer, got {value!r}", path)
    return int(value) if integer else float(value)


def _get(d: Mapping, key: str, path: str, default: Any = ...) -> Any:
    if key in d:
        return d[key]
    if default is ...:
        raise ScenarioError("missing required field", f"{path}.{key}" if path else key)
    return default


def instance_from_dict(data: Mapping[str, Any]) -> Instance:
    """Build and validate an Instance from a parsed scenario document."""
    if not isinstance(data, Mapping):
        raise ScenarioError("scenario document must be an object")
    schema = _get(data, "schema", "")
    if schema != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema {schema!r}", "schema")
    mode = _get(data, "mode", "", "cooperated")
    if mode not in MODES:
        raise ScenarioError(f"unknown mode {mode!r}", "mode")

    vp_raw = _get(data, "vehicle_params", "", {})
    vp_fields = VehicleParams.__dataclass_fields__
    for key in vp_raw:
        if key not in vp_fields:
            raise ScenarioError("unknown field", f"vehicle_params.{key}")
    params = VehicleParams(**{k: _num(v, f"vehicle_params.{k}") for k, v in vp_raw.items()})
    for k in vp_fields:
        val = getattr(params, k)
        if k == "min_soc_fraction":
            if not 0.0 <= val < 1.0:
                raise ScenarioError("must lie in [0, 1)", f"vehicle_params.{k}")
        elif val <= 0:
            raise ScenarioError("must be strictly positive", f"vehicle_params.{k}")

    nodes = []
    seen: set[str] = set()
    for i, raw in enumerate(_get(data, "nodes", "")):
        p = f"nodes[{i}]"
        nid = str(_get(raw, "id", p))
        if nid in seen:
            raise ScenarioError(f"duplicate node id {nid!r}", f"{p}.id")
        seen.add(nid)
        kind = _get(raw, "kind", p)
        if kind not in NODE_KINDS:
            raise ScenarioError(f"unknown node kind {kind!r}", f"{p}.kind")
        nodes.append(Node(nid, kind, _num(_get(raw, "x", p, 0.0), f"{p}.x"),
                          _num(_get(raw, "y", p, 0.0), f"{p}.y")))
    kind_of = {n.id: n.kind for n in nodes}

    distance = None
    if data.get("distance_matrix") is not None:
        dm = data["distance_matrix"]
        ids = dm.get("ids", [n.id for n in nodes]) if isinstance(dm, Mapping) else [n.id for n in nodes]
        values = dm["values"] if isinstance(dm, Mapping) else dm
        try:
            mat = np.array(values, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"not a numeric matrix ({exc})", "distance_matrix") from None
        if mat.shape != (len(ids), len(ids)) or sorted(ids) != sorted(kind_of):
            raise ScenarioError("matrix must be square over all node ids", "distance_matrix")
        if (mat < 0).any() or not np.isfinite(mat).all():
            raise ScenarioError("distances must be finite and non-negative", "distance_matrix")
        if np.any(np.diag(mat) != 0):
            raise ScenarioError("diagonal must be zero", "distance_matrix")
        order = [ids.index(n.id) for n in nodes]
        distance = mat[np.ix_(order, order)]

    flights = []
    flight_seen: set[str] = set()
    raw_flights = _get(data, "flights", "")
    max_latest = max((_num(_get(f, "latest", f"flights[{i}]"), f"flights[{i}].latest")
                      for i, f in enumerate(raw_flights)), default=0.0)
    horizon = _num(data.get("horizon", max_latest), "horizon")
    big_m = data.get("big_m")
    if big_m is not None:
        big_m = _num(big_m, "big_m")
        if big_m < horizon:
            raise ScenarioError("big_m must be >= horizon", "big_m")

    op_ids = [str(_get(o, "id", f"operators[{i}]")) for i, o in enumerate(_get(data, "operators", ""))]
    if len(set(op_ids)) != len(op_ids):
        raise ScenarioError("duplicate operator id", "operators")

    for i, raw in enumerate(raw_flights):
        p = f"flights[{i}]"
        fid = str(_get(raw, "id", p))
        if kind_of.get(fid) != "flight":
            raise ScenarioError(f"dangling flight node reference {fid!r}", f"{p}.id")
        if fid in flight_seen:
            raise ScenarioError(f"duplicate flight {fid!r}", f"{p}.id")
        flight_seen.add(fid)
        owner = str(_get(raw, "owner", p))
        if owner not in op_ids:
            raise ScenarioError(f"unknown operator {owner!r}", f"{p}.owner")
        e = _num(_get(raw, "earliest", p), f"{p}.earliest")
        l = _num(_get(raw, "latest", p), f"{p}.latest")
        if not 0 <= e <= l <= horizon:
            raise ScenarioError(
                f"flight {fid!r} needs 0 <= earliest <= latest <= horizon "
                f"(got {e}, {l}, horizon {horizon})", p)
        s = _num(_get(raw, "service_duration", p, 3.0), f"{p}.service_duration")
        if s <= 0:
            raise ScenarioError("must be > 0", f"{p}.service_duration")
        h = _num(_get(raw, "service_energy", p, 0.0), f"{p}.service_energy")
        if h < 0:
            raise ScenarioError("must be >= 0", f"{p}.service_energy")
        flights.append(Flight(fid, owner, e, l, s, h))
    missing = [n for n, k in kind_of.items() if k == "flight" and n not in flight_seen]
    if missing:
        raise ScenarioError(f"flight nodes without a flight entry: {missing}", "flights")

    operators = []
    used_depots: set[str] = set()
    for i, raw in enumerate(_get(data, "operators", "")):
        p = f"operators[{i}]"
        d_out = str(_get(raw, "depot_out", p))
        d_in = str(_get(raw, "depot_in", p))
        if kind_of.get(d_out) != "depot_out":
            raise ScenarioError(f"dangling depot_out reference {d_out!r}", f"{p}.depot_out")
        if kind_of.get(d_in) != "depot_in":
            raise ScenarioError(f"dangling depot_in reference {d_in!r}", f"{p}.depot_in")
        if d_out in used_depots or d_in in used_depots:
            raise ScenarioError("depot shared between operators", p)
        used_depots |= {d_out, d_in}
        n = _num(_get(raw, "fleet_size", p), f"{p}.fleet_size", integer=True)
        n_shared = _num(_get(raw, "shared_count", p, 0), f"{p}.shared_count", integer=True)
        if not 0 <= n_shared <= n:
            raise ScenarioError("need 0 <= shared_count <= fleet_size", f"{p}.shared_count")
        radius = _num(_get(raw, "service_radius", p, 0.0), f"{p}.service_radius")
        if radius < 0:
            raise ScenarioError("must be >= 0", f"{p}.service_radius")
        prio = {}
        for fid, val in (_get(raw, "priority", p, {}) or {}).items():
            if fid not in flight_seen:
                raise ScenarioError(f"dangling flight reference {fid!r}", f"{p}.priority")
            if val not in (0, 1) or isinstance(val, bool):
                raise ScenarioError("priorities must be 0 or 1", f"{p}.priority.{fid}")
            if val:
                prio[fid] = 1
        cost = _num(_get(raw, "unit_delay_cost", p, 1.0), f"{p}.unit_delay_cost")
        if cost < 0:
            raise ScenarioError("must be >= 0", f"{p}.unit_delay_cost")
        operators.append(Operator(op_ids[i], d_out, d_in, n, n_shared, radius, prio, cost))
    unpaired = [n for n, k in kind_of.items() if k in ("depot_out", "depot_in") and n not in used_depots]
    if unpaired:
        raise ScenarioError(f"depot nodes not owned by any operator: {unpaired}", "nodes")

    coalition = data.get("coalition")
    if coalition is not None:
        bad = [c for c in coalition if c not in op_ids]
        if bad:
            raise ScenarioError(f"unknown operators {bad}", "coalition")
        coalition = frozenset(coalition)

    graph = Graph.build(nodes, params, horizon, big_m, distance)
    return Instance(graph, tuple(flights), tuple(operators), params, mode, coalition,
                    str(data.get("name", "")))


def load_scenario(path: str | Path) -> Instance:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"parse error: {exc}") from None
    return instance_from_dict(data)


def instance_to_dict(instance: Instance, *, include_distance: bool = False) -> dict[str, Any]:
    g = instance.graph
    out: dict[str, Any] = {
        "schema": SCHEMA_VERSION,
        "name": instance.name,
        "mode": instance.mode,
        "horizon": g.horizon,
    }
    if g.big_m != g.horizon:
        out["big_m"] = g.big_m
    if instance.coalition is not None:
        out["coalition"] = sorted(instance.coalition)
    out["vehicle_params"] = {k: getattr(instance.vehicle_params, k)
                             for k in VehicleParams.__dataclass_fields__}
    out["nodes"] = [{"id": n.id, "kind": n.kind, "x": n.x, "y": n.y} for n in g.nodes]
    out["flights"] = [
        {"id": f.id, "owner": f.owner, "earliest": f.earliest, "latest": f.latest,
         "service_duration": f.service_duration, "service_energy": f.service_energy}
        for f in instance.flights
    ]
    out["operators"] = [
        {"id": o.id, "depot_out": o.depot_out, "depot_in": o.depot_in,
         "fleet_size": o.fleet_size, "shared_count": o.shared_count,
         "service_radius": o.service_radius,
         "priority": {k: 1 for k in sorted(o.priority) if o.priority[k]},
         "unit_delay_cost": o.unit_delay_cost}
        for o in instance.operators
    ]
    if include_distance:
        out["distance_matrix"] = {"ids": [n.id for n in g.nodes],
                                  "values": g.distance.tolist()}
    return out


def dump_scenario(instance: Instance, path: str | Path, *, include_distance: bool = False) -> None:
    text = json.dumps(instance_to_dict(instance, include_distance=include_distance), indent=1)
    Path(path).write_text(text + "\n")
