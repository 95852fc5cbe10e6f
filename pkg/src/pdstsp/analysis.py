"""Attraction-basin analysis and the benchmark harness.

Basins are defined over served-request sets: a route is a k-attractor when no
destroy-and-repair of up to k served requests strictly raises revenue, and it
lies in the k-basin of a reference when best-improvement k-destroy search run
to convergence lands on the reference's served set.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import Instance, Route, route_sort_key
from .exact import exhaustive_solve
from .improve import (
    MslnsConfig,
    SaConfig,
    bi_lns,
    destroy_repair,
    hill_climb,
    lns_random,
    mslns,
    repair,
    simulated_annealing,
    two_opt_route,
)
from .search import (
    DecodeConfig,
    ExternalScorer,
    FitnessScorer,
    decode,
    greedy_search,
    multi_start_greedy,
    sgbs,
)

_EPS = 1e-9
_ENUM_GUARD = 12


def _removal_sets(served: frozenset, k: int):
    served = sorted(served)
    for size in range(1, min(k, len(served)) + 1):
        yield from itertools.combinations(served, size)


def is_k_attractor(inst: Instance, route: Route, k: int) -> bool:
    """True iff no destroy-and-repair of up to k served requests strictly
    improves revenue. Enumeration is guarded at 12 served requests."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(route.served) > _ENUM_GUARD:
        raise ValueError(f"too many served requests to enumerate (> {_ENUM_GUARD})")
    for subset in _removal_sets(route.served, k):
        cand = destroy_repair(inst, route, subset)
        if cand.revenue > route.revenue + _EPS:
            return False
    return True


def best_improvement_lns(inst: Instance, route: Route, k: int) -> Route:
    """Best-improvement k-destroy search to convergence: every round
    enumerates all removal sets of size <= k and adopts the best strict
    revenue improvement. The result is a k-attractor."""
    if len(route.served) > _ENUM_GUARD:
        raise ValueError(f"too many served requests to enumerate (> {_ENUM_GUARD})")
    route = two_opt_route(inst, repair(inst, route))
    while True:
        best = None
        for subset in _removal_sets(route.served, k):
            cand = destroy_repair(inst, route, subset)
            if cand.revenue > route.revenue + _EPS:
                if best is None or route_sort_key(cand) < route_sort_key(best):
                    best = cand
        if best is None:
            return route
        route = best


def in_k_basin(inst: Instance, route: Route, reference: Route, k: int) -> bool:
    """True iff best-improvement k-destroy search from route converges to the
    reference's served set (revenues equal within tolerance)."""
    terminal = best_improvement_lns(inst, route, k)
    return (
        terminal.served == reference.served
        and abs(terminal.revenue - reference.revenue) <= _EPS
    )


def basin_profile(
    instances: Sequence[Instance],
    method_routes: Dict[str, Sequence[Route]],
    references: Sequence[Route],
    k_values: Sequence[int],
) -> Dict[str, Dict[int, float]]:
    """Fraction of instances whose route lies in the reference's k-basin,
    per method and k. Non-decreasing in k by neighborhood nesting."""
    out: Dict[str, Dict[int, float]] = {}
    for name, routes in method_routes.items():
        if len(routes) != len(instances):
            raise ValueError(f"method {name!r} has {len(routes)} routes "
                             f"for {len(instances)} instances")
        out[name] = {}
        for k in k_values:
            hits = sum(
                in_k_basin(inst, r, ref, k)
                for inst, r, ref in zip(instances, routes, references)
            )
            out[name][k] = hits / len(instances)
    return out


# ---------------------------------------------------------------------------
# Method registry
# ---------------------------------------------------------------------------

CONSTRUCTORS = ("gs", "msgs", "decode", "sgbs", "exact")
IMPROVERS = ("hc", "2opt", "bilns", "lns", "sa", "mslns")


@dataclass(frozen=True)
class MethodParams:
    M: int = 5
    beta: int = 3
    gamma: int = 4
    alpha: float = 1.0
    k_max: Optional[int] = None  # default: 3 for lns, 4 for mslns
    t_max: float = 0.5
    rho: float = 10.0
    mask_mode: str = "inference_2opt"
    seeds_file: Optional[str] = None
    sa: SaConfig = field(default_factory=SaConfig)
    lns_iters: int = 50
    multistart: bool = True


def parse_method(spec: str):
    """Split 'constructor[+improver]' and validate both tokens."""
    parts = spec.split("+")
    if len(parts) == 1:
        ctor, improver = parts[0], None
    elif len(parts) == 2:
        ctor, improver = parts
    else:
        raise ValueError(f"bad method spec {spec!r}")
    if ctor not in CONSTRUCTORS:
        raise ValueError(f"unknown constructor {ctor!r} (choose from {CONSTRUCTORS})")
    if improver is not None and improver not in IMPROVERS:
        raise ValueError(f"unknown improver {improver!r} (choose from {IMPROVERS})")
    return ctor, improver


def _construct(inst: Instance, ctor: str, params: MethodParams,
               instance_id: Optional[str], scorer) -> List[Route]:
    if ctor == "exact":
        return [exhaustive_solve(inst)]
    if ctor == "gs":
        return [greedy_search(inst)]
    if ctor == "msgs":
        return multi_start_greedy(inst, min(params.M, inst.n))
    if ctor == "decode":
        cfg = DecodeConfig(mode="greedy", mask_mode=params.mask_mode, rho=params.rho)
        if scorer is not None:
            return decode(inst, scorer, cfg, instance_id=instance_id)
        return decode(inst, FitnessScorer(), cfg)
    if ctor == "sgbs":
        return [sgbs(inst, scorer or FitnessScorer(), params.beta, params.gamma)]
    raise ValueError(f"unknown constructor {ctor!r}")


def solve_with_method(inst: Instance, spec: str, params: MethodParams,
                      seed: int = 0, instance_id: Optional[str] = None,
                      scorer: Optional[ExternalScorer] = None) -> Route:
    """Run one 'constructor[+improver]' pipeline on one instance."""
    ctor, improver = parse_method(spec)
    seeds = _construct(inst, ctor, params, instance_id, scorer)
    best = min(seeds, key=route_sort_key)
    if improver is None:
        return best
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
    if improver == "hc":
        return hill_climb(inst, best)
    if improver == "2opt":
        return two_opt_route(inst, best)
    if improver == "bilns":
        return bi_lns(inst, best)
    if improver == "lns":
        return lns_random(inst, best, rng, k_max=params.k_max or 3,
                          max_iters=params.lns_iters)
    if improver == "sa":
        return simulated_annealing(inst, best, rng, params.sa)
    if improver == "mslns":
        cfg = MslnsConfig(beta=params.beta, k_max=params.k_max or 4,
                          alpha=params.alpha, t_max=params.t_max,
                          multistart=params.multistart)
        return mslns(inst, seeds, cfg, rng)
    raise ValueError(f"unknown improver {improver!r}")


# ---------------------------------------------------------------------------
# Benchmark harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchRow:
    method: str
    instance_id: str
    time_s: float
    revenue: float
    profit: float
    length: float
    gap_pct: float
    is_winner: bool


@dataclass
class BenchReport:
    rows: List[BenchRow]
    aggregates: Dict[str, Dict[str, float]]  # method -> metric -> value

    def to_csv(self) -> str:
        out = ["method,instance_id,time_s,revenue,profit,length,gap_pct,is_winner"]
        for r in self.rows:
            out.append(
                f"{r.method},{r.instance_id},{r.time_s:.6f},{r.revenue:.9f},"
                f"{r.profit:.9f},{r.length:.9f},{r.gap_pct:.6f},{int(r.is_winner)}"
            )
        out.append("# aggregate")
        out.append("# method,mean_time_s,mean_revenue,mean_profit,mean_gap_pct,win_rate_pct")
        for method, agg in self.aggregates.items():
            out.append(
                f"# {method},{agg['mean_time_s']:.6f},{agg['mean_revenue']:.9f},"
                f"{agg['mean_profit']:.9f},{agg['mean_gap_pct']:.6f},"
                f"{agg['win_rate_pct']:.6f}"
            )
        return "\n".join(out) + "\n"

    def plot_csv(self) -> str:
        """Revenue-vs-time scatter data."""
        out = ["method,instance_id,time_s,revenue"]
        for r in self.rows:
            out.append(f"{r.method},{r.instance_id},{r.time_s:.6f},{r.revenue:.9f}")
        return "\n".join(out) + "\n"


def run_benchmark(
    instances: Sequence[Instance],
    method_specs: Sequence[str],
    params: MethodParams = MethodParams(),
    seed: int = 0,
    oracle: Optional[Sequence[Route]] = None,
    scorer: Optional[ExternalScorer] = None,
    deterministic_time: bool = False,
) -> BenchReport:
    """Run every method on every instance and score against the per-instance
    best-known revenue (max across methods, plus the oracle when given).

    With deterministic_time the time_s column records the configured budget
    instead of measured wall time, so identical seeds give identical CSV bytes.
    """
    for spec in method_specs:
        parse_method(spec)
    results: Dict[str, List[Route]] = {}
    times: Dict[str, List[float]] = {}
    for spec in method_specs:
        _, improver = parse_method(spec)
        budget = params.t_max if improver in ("lns", "mslns") else 0.0
        routes, elapsed = [], []
        for idx, inst in enumerate(instances):
            t0 = time.perf_counter()
            route = solve_with_method(inst, spec, params, seed=seed * 1000003 + idx,
                                      instance_id=str(idx), scorer=scorer)
            dt = time.perf_counter() - t0
            routes.append(route)
            elapsed.append(budget if deterministic_time else dt)
        results[spec] = routes
        times[spec] = elapsed

    best_known = []
    for idx in range(len(instances)):
        best = max(results[spec][idx].revenue for spec in method_specs)
        if oracle is not None:
            best = max(best, oracle[idx].revenue)
        best_known.append(best)

    rows: List[BenchRow] = []
    aggregates: Dict[str, Dict[str, float]] = {}
    for spec in method_specs:
        gaps, wins = [], []
        for idx in range(len(instances)):
            r = results[spec][idx]
            best = best_known[idx]
            gap = 0.0 if best <= _EPS else max(0.0, (best - r.revenue) / best * 100.0)
            win = r.revenue >= best - _EPS
            gaps.append(gap)
            wins.append(win)
            rows.append(BenchRow(
                method=spec,
                instance_id=str(idx),
                time_s=times[spec][idx],
                revenue=r.revenue,
                profit=r.revenue - r.length,
                length=r.length,
                gap_pct=gap,
                is_winner=win,
            ))
        routes = results[spec]
        aggregates[spec] = {
            "mean_time_s": float(np.mean(times[spec])),
            "mean_revenue": float(np.mean([r.revenue for r in routes])),
            "mean_profit": float(np.mean([r.revenue - r.length for r in routes])),
            "mean_gap_pct": float(np.mean(gaps)),
            "win_rate_pct": 100.0 * float(np.mean(wins)),
        }
    return BenchReport(rows, aggregates)
