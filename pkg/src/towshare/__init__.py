"""Electric tow tractor scheduling for separated and cooperating ground handlers."""

from .errors import GuardError, InfeasibleError, ScenarioError, TowshareError
from .instance import Instance, VehicleParams, load_scenario, dump_scenario
from .schedule import EvalConfig, Solution, build_solution, evaluate
from .coadh import SearchConfig, run, search
from .exact import export_milp, solve_exact
from .pareto import ParetoSet, epsilon_sweep
from .generator import generate

__version__ = "0.1.0"

__all__ = [
    "EvalConfig", "GuardError", "InfeasibleError", "Instance", "ParetoSet", "ScenarioError",
    "SearchConfig", "Solution", "TowshareError", "VehicleParams", "build_solution",
    "dump_scenario", "epsilon_sweep", "evaluate", "export_milp", "generate", "load_scenario",
    "run", "search", "solve_exact",
]
