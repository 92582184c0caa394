"""Adaptive large neighbourhood search for tractor dispatch."""

from .destroy import (DESTROY_OPERATORS, PrioritySwap, destroy_delay_chain, destroy_priority,
                      destroy_random, destroy_shaw, destroy_worst)
from .repair import (REPAIR_OPERATORS, repair_greedy, repair_kth_regret, repair_priority,
                     repair_random)
from .search import (OperatorBank, SearchConfig, SearchResult, initial_solution, initial_state,
                     run, search, select_index, update_scores, write_trace)
from .state import RepairFailed, SearchContext, SearchState

__all__ = [
    "DESTROY_OPERATORS", "REPAIR_OPERATORS", "OperatorBank", "PrioritySwap", "RepairFailed",
    "SearchConfig", "SearchContext", "SearchResult", "SearchState", "destroy_delay_chain",
    "destroy_priority", "destroy_random", "destroy_shaw", "destroy_worst", "initial_solution",
    "initial_state", "repair_greedy", "repair_kth_regret", "repair_priority", "repair_random",
    "run", "search", "select_index", "update_scores", "write_trace",
]
