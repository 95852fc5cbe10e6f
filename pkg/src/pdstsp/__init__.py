"""Solver suite for the multi-commodity one-to-one pickup-and-delivery
selective TSP: instance generation, an exact oracle with MILP export,
constructive search, improvement heuristics, and basin/benchmark analysis."""

from .core import (
    EvalResult,
    Instance,
    Route,
    collected_revenue,
    instance_from_json,
    load_profile,
    make_route,
    route_from_json,
    route_length,
    route_sort_key,
    served_requests,
    shaped_objective,
    validate_route,
)
from .generator import GenSpec, gen_batch, gen_instance
from .exact import exhaustive_solve, export_milp, route_to_assignment
from .search import (
    DecodeConfig,
    ExternalScorer,
    FitnessScorer,
    decode,
    greedy_search,
    multi_start_greedy,
    sgbs,
    two_opt_path,
)
from .improve import (
    MslnsConfig,
    SaConfig,
    bi_lns,
    destroy_repair,
    hill_climb,
    lns_random,
    mslns,
    remove_requests,
    repair,
    sa_move,
    simulated_annealing,
    two_opt_route,
)
from .analysis import (
    BenchReport,
    MethodParams,
    basin_profile,
    best_improvement_lns,
    in_k_basin,
    is_k_attractor,
    parse_method,
    run_benchmark,
    solve_with_method,
)

__version__ = "0.1.0"
