"""Command-line interface: ``towshare <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace as dc_replace
from pathlib import Path
from typing import Sequence

from . import allocation, pareto
from .coadh.search import SearchConfig, search
from .errors import GuardError, InfeasibleError, ScenarioError
from .exact import export_milp, solve_exact
from .generator import PROFILE_NAMES, generate
from .instance import Instance, dump_scenario, load_scenario
from .schedule import solution_to_dict, write_solution

EXIT_OK, EXIT_USAGE, EXIT_SCENARIO, EXIT_INFEASIBLE, EXIT_GUARD = 0, 2, 3, 4, 5

SWEEPABLE = ("charge_time", "capacity", "service_radius", "shared_count")


def _float(text: str) -> float:
    if text.lower() in ("inf", "none", "null"):
        return math.inf
    return float(text)


def _bounds(text: str) -> list[float]:
    return [_float(t) for t in text.split(",") if t.strip()]


def load_config(path: str | None, seed: int | None = None,
                t_delay: float | None = None) -> SearchConfig:
    data = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"cannot read config: {exc}", path) from None
    try:
        cfg = SearchConfig.from_dict(data)
        if seed is not None:
            cfg = cfg.replace(seed=seed)
        if t_delay is not None:
            cfg = cfg.replace(t_delay=t_delay)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(str(exc), path or "config") from None
    return cfg


def _instance(args) -> Instance:
    inst = load_scenario(args.scenario)
    if getattr(args, "mode", None):
        inst = inst.replace(mode=args.mode)
    return inst


def _write_json(path: str | Path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


def _out(args, default: str) -> Path:
    return Path(args.out or default)


# -- subcommands -------------------------------------------------------------

def cmd_gen(args) -> int:
    overrides = {}
    for item in args.param or []:
        key, _, value = item.partition("=")
        try:
            overrides[key] = json.loads(value)
        except json.JSONDecodeError:
            raise ScenarioError(f"bad value for {key}: {value!r}", "--param") from None
    try:
        inst = generate(args.profile, args.seed, overrides or None)
    except ValueError as exc:
        raise ScenarioError(str(exc), "--profile") from None
    if args.mode:
        inst = inst.replace(mode=args.mode)
    out = _out(args, f"{inst.name}.json")
    dump_scenario(inst, out)
    print(f"wrote {out}: {len(inst.flights)} flights, {len(inst.operators)} operators, "
          f"{len(inst.vehicles)} vehicles")
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = _instance(args)
    cfg = load_config(args.config, args.seed, args.t_delay)
    res = search(inst, cfg)
    sol = res.solution
    out = _out(args, "solution.json")
    write_solution(sol, out, seed=cfg.seed, t_delay=None if math.isinf(cfg.t_delay) else cfg.t_delay,
                   mode=inst.mode)
    if args.trace:
        res.write_trace(args.trace)
    print(f"f1={sol.f1:.3f} f2={sol.f2:.3f} evaluate={sol.evaluate:.3f} "
          f"violations={sol.violations} -> {out}")
    return EXIT_OK


def cmd_pareto(args) -> int:
    inst = _instance(args)
    cfg = load_config(args.config, args.seed)
    pset = pareto.epsilon_sweep(inst, cfg, _bounds(args.bounds) if args.bounds else None,
                                args.solver)
    out = _out(args, "pareto.csv")
    pset.write_csv(out)
    if args.solutions:
        _write_json(args.solutions, [solution_to_dict(p.solution, bound=_json_num(p.bound))
                                     for p in pset.points])
    for p in pset.points:
        print(f"bound={p.bound:g} f1={p.f1:.3f} f2={p.f2:.3f}")
    if pset.skipped:
        print(f"skipped bounds (infeasible): {', '.join(f'{b:g}' for b in pset.skipped)}")
    return EXIT_OK if pset.points else EXIT_INFEASIBLE


def _json_num(x: float):
    return None if math.isinf(x) else x


def _solver(kind: str, cfg: SearchConfig, bound: float):
    if kind == "exact":
        return lambda inst: solve_exact(inst, bound).solution
    c = cfg.replace(t_delay=bound)
    return lambda inst: search(inst, c).solution


def cmd_allocate(args) -> int:
    inst = _instance(args).replace(mode="cooperated", coalition=None)
    cfg = load_config(args.config, args.seed)
    pset = pareto.epsilon_sweep(inst, cfg, _bounds(args.bounds) if args.bounds else None,
                                args.solver)
    if not pset.points:
        raise InfeasibleError("no Pareto point to allocate over")
    rows = []
    neg = {"improved": 0, "traditional": 0}
    for k, p in enumerate(pset.points):
        reports = allocation.allocate(inst, _solver(args.solver, cfg, p.bound))
        for method, rep in reports.items():
            rows += allocation.report_rows(inst.name, k, rep)
            neg[method] += rep.negative_count
    out = _out(args, "allocation.csv")
    allocation.write_report_csv(rows, out)
    print(f"negative utilities: improved={neg['improved']} traditional={neg['traditional']}")
    return EXIT_OK


def _apply_sweep(inst: Instance, name: str, value: float) -> Instance:
    vp = inst.vehicle_params
    if name == "charge_time":
        return inst.replace(vehicle_params=_vp(vp, charge_rate=vp.capacity / value))
    if name == "capacity":
        return inst.replace(vehicle_params=_vp(vp, capacity=value))
    if name == "service_radius":
        ops = tuple(dc_replace(o, service_radius=value) for o in inst.operators)
    elif name == "shared_count":
        ops = tuple(dc_replace(o, shared_count=min(int(value), o.fleet_size))
                    for o in inst.operators)
    else:
        raise ScenarioError(f"cannot sweep {name!r}; choose from {SWEEPABLE}", "--sweep")
    return inst.replace(operators=ops)


def _vp(vp, **changes):
    return dc_replace(vp, **changes)


def compare_row(inst: Instance, cfg: SearchConfig, bounds, solver: str):
    """(Dis-os, Dis-oc, df1, Del-os, Del-oc, df2) over mean Pareto objectives."""
    sets = {}
    for mode in ("separated", "cooperated"):
        sets[mode] = pareto.epsilon_sweep(inst.replace(mode=mode, coalition=None), cfg,
                                          bounds, solver)
    os_, oc = sets["separated"], sets["cooperated"]
    d_os, l_os = os_.mean()
    d_oc, l_oc = oc.mean()
    df1 = allocation.shared_utility([p.f1 for p in os_.points], [p.f1 for p in oc.points])
    df2 = allocation.shared_utility([p.f2 for p in os_.points], [p.f2 for p in oc.points])
    return d_os, d_oc, df1, l_os, l_oc, df2


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def cmd_compare(args) -> int:
    base = _instance(args)
    cfg = load_config(args.config, args.seed)
    bounds = _bounds(args.bounds) if args.bounds else [math.inf]
    cells = [("", None)]
    if args.sweep:
        name, _, values = args.sweep.partition("=")
        if name not in SWEEPABLE or not values:
            raise ScenarioError(f"--sweep needs NAME=v1,v2 with NAME in {SWEEPABLE}", "--sweep")
        cells = [(name, float(v)) for v in values.split(",")]
    reps = max(1, args.replications)
    rows = []
    for name, value in cells:
        inst = _apply_sweep(base, name, value) if name else base
        acc = [0.0] * 6
        for rep in range(reps):
            row = compare_row(inst, cfg.replace(seed=cfg.seed + rep), bounds, args.solver)
            acc = [a + r for a, r in zip(acc, row)]
        row = [a / reps for a in acc]
        rows.append([name or "-", "-" if value is None else f"{value:g}"] + [_fmt(x) for x in row])
    out = _out(args, "compare.csv")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parameter", "value", "Dis-os", "Dis-oc", "df1", "Del-os", "Del-oc", "df2"])
        w.writerows(rows)
    for r in rows:
        print(",".join(r))
    return EXIT_OK


def cmd_export_milp(args) -> int:
    inst = _instance(args)
    bound = args.t_delay if args.t_delay is not None else math.inf
    out = _out(args, "model.lp")
    counts = export_milp(inst, bound, out)
    print(f"wrote {out}: " + ", ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


def cmd_oracle(args) -> int:
    inst = _instance(args)
    bound = args.t_delay if args.t_delay is not None else math.inf
    res = solve_exact(inst, bound, full_charging=args.full_charging)
    out = _out(args, "oracle.json")
    data = solution_to_dict(res.solution, proven=res.proven, nodes_explored=res.nodes_explored,
                            t_delay=_json_num(bound))
    _write_json(out, data)
    print(f"optimal f1={res.optimal_f1:.3f} f2={res.optimal_f2:.3f} -> {out}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="towshare",
                                description="Electric tow tractor scheduling with fleet sharing.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True, config=True):
        if scenario:
            sp.add_argument("--scenario", required=True, help="scenario JSON file")
            sp.add_argument("--mode", choices=("separated", "cooperated"),
                            help="override the scenario's mode")
        if config:
            sp.add_argument("--config", help="search config JSON (defaults otherwise)")
            sp.add_argument("--seed", type=int, help="RNG seed (overrides config)")
        sp.add_argument("--out", help="output path")

    g = sub.add_parser("gen", help="generate a synthetic scenario")
    g.add_argument("--profile", default="A-like", help=f"one of {', '.join(PROFILE_NAMES)}")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--mode", choices=("separated", "cooperated"))
    g.add_argument("--param", action="append", metavar="KEY=JSON",
                   help="profile override, e.g. n_flights=40")
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run the heuristic at one delay bound")
    common(s)
    s.add_argument("--t-delay", type=_float, help="total delay bound (inf for none)")
    s.add_argument("--trace", help="write the per-iteration trace CSV here")
    s.set_defaults(func=cmd_solve)

    pa = sub.add_parser("pareto", help="epsilon-constraint sweep")
    common(pa)
    pa.add_argument("--bounds", help="comma-separated strictly decreasing bounds")
    pa.add_argument("--solver", choices=pareto.SOLVERS, default="coadh")
    pa.add_argument("--solutions", help="also write the point solutions as JSON")
    pa.set_defaults(func=cmd_pareto)

    al = sub.add_parser("allocate", help="improved and traditional Shapley allocation")
    common(al)
    al.add_argument("--bounds")
    al.add_argument("--solver", choices=pareto.SOLVERS, default="coadh")
    al.set_defaults(func=cmd_allocate)

    c = sub.add_parser("compare", help="separated vs cooperated shared utility")
    common(c)
    c.add_argument("--bounds", help="delay bounds for both sweeps (default: inf)")
    c.add_argument("--solver", choices=pareto.SOLVERS, default="coadh")
    c.add_argument("--sweep", help=f"NAME=v1,v2,... with NAME in {', '.join(SWEEPABLE)}")
    c.add_argument("--replications", type=int, default=1)
    c.set_defaults(func=cmd_compare)

    e = sub.add_parser("export-milp", help="write the MILP in LP format")
    common(e, config=False)
    e.add_argument("--t-delay", type=_float)
    e.set_defaults(func=cmd_export_milp)

    o = sub.add_parser("oracle", help="exact optimum of a tiny instance")
    common(o, config=False)
    o.add_argument("--t-delay", type=_float)
    o.add_argument("--full-charging", action="store_true",
                   help="enumerate every charger placement")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except GuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO


if __name__ == "__main__":
    sys.exit(main())
