import json
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from towshare.errors import InfeasibleError
from towshare.generator import generate
from towshare.schedule import (EvalConfig, Solution, bare_trajectory, build_solution, evaluate,
                               flight_delay, insert_charging, objectives, priority_violations,
                               propagate_timetable, route_model, solution_to_dict)

from conftest import build, op


def colocated(n_flights, energy, chargers=1):
    nodes = [("o", "depot_out", 0, 0), ("d", "depot_in", 0, 0)]
    nodes += [(f"e{i}", "charging", 0, 0) for i in range(chargers)]
    nodes += [(f"f{i}", "flight", 0, 0) for i in range(1, n_flights + 1)]
    flights = [(f"f{i}", "A", 0, 100, 3, energy) for i in range(1, n_flights + 1)]
    return build(nodes, flights, [op("A", "o", "d")])


def charged(inst, flights):
    return insert_charging(bare_trajectory(inst, "A-k1", flights), inst)


def test_no_charging_when_energy_suffices():
    inst = colocated(3, 5.0)
    t = charged(inst, ["f1", "f2", "f3"])
    assert t.chargers == []
    assert [v.node for v in t.visits] == ["o", "f1", "f2", "f3", "d"]


def test_charger_after_third_of_four_flights():
    inst = colocated(4, 10.0)
    t = propagate_timetable(charged(inst, ["f1", "f2", "f3", "f4"]), inst)
    assert [v.node for v in t.visits] == ["o", "f1", "f2", "f3", "e0", "f4", "d"]
    e = t.visits[4]
    assert e.soc_on_arrival == pytest.approx(20.0)
    assert e.charge_duration == pytest.approx(37.5)
    assert t.visits[5].soc_on_arrival == pytest.approx(50.0)


def test_single_oversized_flight_is_infeasible():
    inst = colocated(1, 40.0)
    with pytest.raises(InfeasibleError):
        charged(inst, ["f1"])


def test_no_charger_and_not_enough_energy_is_infeasible():
    inst = colocated(4, 10.0, chargers=0)
    with pytest.raises(InfeasibleError):
        charged(inst, ["f1", "f2", "f3", "f4"])


def line_instance():
    # 2000 m at 10 km/h takes 12 min
    nodes = [("o", "depot_out", 0, 0), ("d", "depot_in", 500, 0), ("f1", "flight", 2000, 0)]
    return build(nodes, [("f1", "A", 15, 20, 3)], [op("A", "o", "d")])


def test_timetable_waits_for_earliest():
    inst = line_instance()
    t = propagate_timetable(charged(inst, ["f1"]), inst)
    f = t.visits[1]
    assert (f.start, f.service_end, f.depart) == pytest.approx((15, 18, 18))
    # depot departure shifted by the 3 min of slack, arrival becomes tight
    assert t.visits[0].depart == pytest.approx(3.0)
    assert f.arrive == pytest.approx(15.0)


def test_empty_trajectory_timetable():
    inst = line_instance()
    t = propagate_timetable(charged(inst, []), inst)
    assert t.visits[-1].arrive == pytest.approx(t.visits[0].depart + 3.0)


@pytest.mark.parametrize("arrive, latest, expected", [(14, 15, 0), (17, 15, 2), (15, 15, 0)])
def test_flight_delay(arrive, latest, expected):
    assert flight_delay(arrive, latest) == expected


def test_empty_solution_objectives():
    inst = line_instance()
    sol = Solution((), {}, {}, 0.0, 0.0)
    assert objectives(sol, inst) == (0, 0)


def test_toy_separated(toy):
    inst = toy("separated")
    sol = build_solution(inst, {"B-k1": ["1", "2", "3", "4"], "R-k1": ["5", "6"]})
    assert objectives(sol, inst) == pytest.approx((37, 2))
    assert sol.delays["3"] == pytest.approx(2)


def test_toy_cooperated(toy):
    inst = toy("cooperated")
    sol = build_solution(inst, {"B-k1": ["1", "2", "4"], "R-k1": ["5", "3", "6"]})
    assert objectives(sol, inst) == pytest.approx((34, 1))
    assert sol.delays["6"] == pytest.approx(1)
    assert sol.assignment["3"] == "R"


def test_separated_rejects_foreign_service(toy):
    with pytest.raises(InfeasibleError):
        build_solution(toy("separated"), {"B-k1": ["1", "2", "4"], "R-k1": ["5", "3", "6"]})


def test_cover_is_enforced(toy):
    with pytest.raises(InfeasibleError):
        build_solution(toy("separated"), {"B-k1": ["1", "2", "3"], "R-k1": ["5", "6"]})


def test_evaluate_without_penalties(toy):
    inst = toy("cooperated")
    sol = build_solution(inst, {"B-k1": ["1", "2", "4"], "R-k1": ["5", "3", "6"]})
    assert evaluate(sol, inst, EvalConfig(t_delay=5)) == pytest.approx(sol.f1)


def test_evaluate_delay_penalty(toy):
    inst = toy("separated")
    sol = build_solution(inst, {"B-k1": ["1", "2", "3", "4"], "R-k1": ["5", "6"]},
                         EvalConfig(t_delay=0))
    # f2 = 2 against a bound of 0 with unit delay weight
    assert sol.penalty_delay == pytest.approx(2)
    assert sol.evaluate == pytest.approx(sol.f1 + 2)
    assert evaluate(sol, inst, EvalConfig(t_delay=1, c_eval_dl=3)) == pytest.approx(sol.f1 + 3)


def priority_instance(b_priority):
    # A owns a1 and marks it priority 1; B owns b1. Windows overlap.
    nodes = [("oA", "depot_out", 0, 0), ("dA", "depot_in", 0, 0),
             ("oB", "depot_out", 100, 0), ("dB", "depot_in", 100, 0),
             ("a1", "flight", 50, 0), ("b1", "flight", 60, 0)]
    flights = [("a1", "A", 0, 30), ("b1", "B", 10, 40)]
    ops = [op("A", "oA", "dA", 1, 1, 1000.0, {"a1": 1}),
           op("B", "oB", "dB", 1, 1, 1000.0, b_priority)]
    return build(nodes, flights, ops)


def test_priorities_aligned_no_violation():
    inst = priority_instance({"b1": 1})
    assert priority_violations({"a1": "A", "b1": "B"}, inst) == 0


def test_foreign_low_priority_served_instead_of_own():
    inst = priority_instance({})
    assert priority_violations({"a1": "B", "b1": "A"}, inst) == 1
    sol = build_solution(inst, {"A-k1": ["b1"], "B-k1": ["a1"]})
    assert sol.violations == 1
    assert evaluate(sol, inst, EvalConfig()) == pytest.approx(sol.f1 + 50)


def test_non_overlapping_pair_never_violates():
    nodes = [("oA", "depot_out", 0, 0), ("dA", "depot_in", 0, 0),
             ("oB", "depot_out", 100, 0), ("dB", "depot_in", 100, 0),
             ("a1", "flight", 50, 0), ("b1", "flight", 60, 0)]
    flights = [("a1", "A", 0, 5), ("b1", "B", 10, 40)]
    ops = [op("A", "oA", "dA", 1, 1, 1000.0, {"a1": 1}), op("B", "oB", "dB", 1, 1, 1000.0)]
    inst = build(nodes, flights, ops)
    for a in ("A", "B"):
        for b in ("A", "B"):
            assert priority_violations({"a1": a, "b1": b}, inst) == 0


def test_separated_mode_has_no_priority_penalty():
    inst = priority_instance({}).replace(mode="separated")
    sol = build_solution(inst, {"A-k1": ["a1"], "B-k1": ["b1"]})
    assert sol.penalty_priority == 0


def random_routes(inst, rng):
    routes = {v.id: [] for v in inst.vehicles}
    for f in inst.flights:
        cands = [v.id for v in inst.vehicles if f.id in inst.serviceable_by_vehicle[v.id]]
        routes[rng.choice(cands)].append(f.id)
    for r in routes.values():
        rng.shuffle(r)
    return routes


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["tiny", "custom"]))
def test_fast_path_matches_reference(seed, profile):
    rng = random.Random(seed)
    inst = generate(profile, seed % 7, {"n_flights": 12} if profile == "custom" else None)
    if rng.random() < 0.5:
        inst = inst.replace(mode="separated")
    routes = random_routes(inst, rng)
    model = route_model(inst)
    idx = inst.graph.index
    fast_ok = True
    dist = delay = 0.0
    for v, veh in enumerate(inst.vehicles):
        ev = model.route(v, tuple(idx[f] for f in routes[veh.id]))
        if ev is None:
            fast_ok = False
            break
        dist += ev.dist
        delay += ev.delay
    try:
        sol = build_solution(inst, routes)
    except InfeasibleError:
        assert not fast_ok
        return
    assert fast_ok
    assert sol.f1 == pytest.approx(dist * inst.vehicle_params.unit_energy_cost)
    assert sol.f2 == pytest.approx(delay)
    op_of = {idx[f]: r for f, r in sol.assignment.items()}
    assert model.violations(op_of) == sol.violations


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_solution_invariants(seed):
    rng = random.Random(seed)
    inst = generate("tiny", seed % 11)
    try:
        sol = build_solution(inst, random_routes(inst, rng))
    except InfeasibleError:
        return
    vp = inst.vehicle_params
    served = [f for t in sol.trajectories for f in t.flights]
    assert sorted(served) == sorted(f.id for f in inst.flights)
    assert sol.f2 == pytest.approx(sum(sol.delays.values()))
    for t in sol.trajectories:
        assert t.visits[0].kind == "depot_out" and t.visits[-1].kind == "depot_in"
        for v in t.visits:
            assert vp.min_soc - 1e-9 <= v.soc_on_arrival <= vp.capacity + 1e-9
            assert v.depart >= v.service_end - 1e-9 >= v.arrive - 2e-9
        for f in t.flights:
            assert sol.assignment[f] == t.operator


def test_solution_serialisation_is_stable(toy):
    inst = toy("cooperated")
    sol = build_solution(inst, {"B-k1": ["1", "2", "4"], "R-k1": ["5", "3", "6"]})
    a = json.dumps(solution_to_dict(sol))
    b = json.dumps(solution_to_dict(sol))
    assert a == b
    d = json.loads(a)
    assert d["objectives"] == {"f1": 34, "f2": 1}
    assert math.isclose(sum(d["delays"].values()), 1)
