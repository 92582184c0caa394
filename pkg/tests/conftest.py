import json

import pytest

from towshare.instance import instance_from_dict

# 1 distance unit per minute at this speed (km/h)
UNIT_SPEED = 0.06


def scenario(nodes, flights, operators, *, mode="cooperated", vehicle_params=None,
             distance=None, **extra):
    """Scenario document from compact tuples.

    nodes: (id, kind, x, y); flights: (id, owner, earliest, latest[, service, energy]);
    operators: dicts with at least id/depot_out/depot_in/fleet_size.
    """
    doc = {
        "schema": 1,
        "mode": mode,
        "nodes": [{"id": n[0], "kind": n[1], "x": n[2], "y": n[3]} for n in nodes],
        "flights": [],
        "operators": operators,
    }
    for f in flights:
        d = {"id": f[0], "owner": f[1], "earliest": f[2], "latest": f[3]}
        if len(f) > 4:
            d["service_duration"] = f[4]
        if len(f) > 5:
            d["service_energy"] = f[5]
        doc["flights"].append(d)
    if vehicle_params:
        doc["vehicle_params"] = vehicle_params
    if distance is not None:
        doc["distance_matrix"] = {"ids": [n[0] for n in nodes], "values": distance}
    doc.update(extra)
    return doc


def build(*args, **kwargs):
    return instance_from_dict(scenario(*args, **kwargs))


def op(id, out, inn, fleet=1, shared=0, radius=0.0, priority=None, cost=1.0):
    return {"id": id, "depot_out": out, "depot_in": inn, "fleet_size": fleet,
            "shared_count": shared, "service_radius": radius,
            "priority": priority or {}, "unit_delay_cost": cost}


def toy_instance(mode):
    """Two-operator toy: B owns flights 1-4, R owns 5 and 6, one tractor each.

    Separated plan B: 1-2-3-4, R: 5-6 travels 37 with 2 min delay at 3.
    Cooperated plan B: 1-2-4, R: 5-3-6 travels 34 with 1 min delay at 6.
    """
    ids = ["oB", "dB", "oR", "dR", "1", "2", "3", "4", "5", "6"]
    kinds = ["depot_out", "depot_in", "depot_out", "depot_in"] + ["flight"] * 6
    far = 20.0
    d = {(a, b): far for a in ids for b in ids if a != b}

    def put(a, b, v):
        d[a, b] = d[b, a] = v

    for dep in ("oB", "dB"):
        put(dep, "1", 3)
        put(dep, "4", 3)
    for dep in ("oR", "dR"):
        put(dep, "5", 4)
        put(dep, "6", 4)
    put("oB", "dB", 0)
    put("oR", "dR", 0)
    put("1", "2", 3)
    put("2", "3", 4)
    put("3", "4", 3)
    put("2", "4", 4)
    put("5", "6", 13)
    put("5", "3", 5)
    put("3", "6", 8)
    matrix = [[0.0 if a == b else d[a, b] for b in ids] for a in ids]
    nodes = [(i, k, 0.0, 0.0) for i, k in zip(ids, kinds)]
    flights = [("1", "B", 0, 5, 1), ("2", "B", 0, 10, 1), ("3", "B", 5, 10, 1),
               ("4", "B", 10, 20, 1), ("5", "R", 0, 5, 1), ("6", "R", 10, 18, 1)]
    ops = [op("B", "oB", "dB", 1, 1, 100.0), op("R", "oR", "dR", 1, 1, 100.0)]
    return build(nodes, flights, ops, mode=mode, distance=matrix,
                 vehicle_params={"speed": UNIT_SPEED})


@pytest.fixture
def toy():
    return toy_instance


@pytest.fixture
def write_json(tmp_path):
    def _write(doc, name="scenario.json"):
        p = tmp_path / name
        p.write_text(json.dumps(doc))
        return p
    return _write


# acceptance results, printed once at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
