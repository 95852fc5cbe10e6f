"""Improvement side: greedy insertion repair, in-route 2-Opt, hill climbing,
destroy-and-repair LNS variants, simulated annealing, and a memory-guided
multi-start LNS that works on a pool of routes.

Every function here takes and returns feasible routes; infeasible candidate
moves are simply discarded.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import Instance, Route, make_route, route_sort_key, validate_route

_EPS = 1e-9


def remove_requests(inst: Instance, route: Route, requests: Iterable[int]) -> Route:
    """Drop the pickup and delivery of each request from the route."""
    drop = set()
    for h in requests:
        drop.add(h)
        drop.add(h + inst.n)
    seq = [v for v in route.seq if v not in drop]
    return make_route(inst, seq)


def _best_insertion(inst: Instance, route: Route, h: int) -> Optional[Tuple[float, Route]]:
    """Cheapest feasible insertion of request h; None if no position fits."""
    seq = list(route.seq)
    best = None
    p, d = h, h + inst.n
    for i in range(1, len(seq)):
        for j in range(i, len(seq)):
            cand = seq[:i] + [p] + seq[i:j] + [d] + seq[j:]
            res = validate_route(inst, cand)
            if not res.feasible:
                continue
            delta = res.length - route.length
            if best is None or delta < best[0] - _EPS:
                best = (delta, cand)
    if best is None:
        return None
    return best[0], make_route(inst, best[1])


def repair(inst: Instance, route: Route) -> Route:
    """Greedy insertion to a fixpoint: repeatedly insert the unserved request
    with the largest revenue (cheapest extra length among ties) that still fits.
    """
    res = validate_route(inst, route.seq)
    if not res.feasible:
        raise ValueError(f"repair requires a feasible route ({res.violation})")
    while True:
        best = None  # (-gain, delta_len, h, route)
        for h in range(1, inst.n + 1):
            if h in route.served:
                continue
            ins = _best_insertion(inst, route, h)
            if ins is None:
                continue
            delta, cand = ins
            key = (-float(inst.revenue[h - 1]), delta, h)
            if best is None or key < best[0]:
                best = (key, cand)
        if best is None:
            return route
        route = best[1]


def two_opt_route(inst: Instance, route: Route) -> Route:
    """Feasible improving segment reversals until none remain.

    The visited set never changes, so revenue is invariant and only length
    shrinks. Reversals breaking pickup-before-delivery are rejected by the
    feasibility check.
    """
    seq = list(route.seq)
    improved = True
    while improved:
        improved = False
        for i in range(1, len(seq) - 2):
            for j in range(i + 1, len(seq) - 1):
                cand = seq[:i] + seq[i : j + 1][::-1] + seq[j + 1 :]
                res = validate_route(inst, cand)
                if res.feasible and res.length < route.length - _EPS:
                    seq = cand
                    route = make_route(inst, seq)
                    improved = True
    return route


def hill_climb(inst: Instance, route: Route) -> Route:
    """Alternate insertion repair and 2-Opt until neither changes the route."""
    while True:
        improved = repair(inst, route)
        improved = two_opt_route(inst, improved)
        if improved.seq == route.seq:
            return route
        route = improved


def destroy_repair(inst: Instance, route: Route, requests: Iterable[int]) -> Route:
    """Deterministic neighbor: remove requests, 2-Opt the remainder, re-insert
    greedily, then 2-Opt again."""
    stripped = two_opt_route(inst, remove_requests(inst, route, requests))
    return two_opt_route(inst, repair(inst, stripped))


def bi_lns(inst: Instance, route: Route, t_max: Optional[float] = None) -> Route:
    """Best-improvement LNS with single-request destruction.

    Converges exactly when no 1-request destroy-and-repair strictly raises
    revenue, i.e. the output sits at the bottom of its own 1-basin.
    """
    deadline = None if t_max is None else time.monotonic() + t_max
    route = two_opt_route(inst, repair(inst, route))
    while True:
        if deadline is not None and time.monotonic() >= deadline:
            return route
        best = None
        for h in sorted(route.served):
            cand = destroy_repair(inst, route, [h])
            if cand.revenue > route.revenue + _EPS:
                if best is None or route_sort_key(cand) < route_sort_key(best):
                    best = cand
        if best is None:
            return route
        route = best


def lns_random(inst: Instance, route: Route, rng: np.random.Generator,
               k_max: int = 3, max_iters: int = 50,
               t_max: Optional[float] = None) -> Route:
    """Randomized LNS: destroy k ~ Unif{1..k_max} random served requests,
    repair, keep strictly improving candidates."""
    route = two_opt_route(inst, repair(inst, route))
    deadline = None if t_max is None else time.monotonic() + t_max
    for _ in range(max_iters):
        if deadline is not None and time.monotonic() >= deadline:
            break
        if not route.served:
            break
        k = int(rng.integers(1, k_max + 1))
        served = sorted(route.served)
        k = min(k, len(served))
        idx = rng.choice(len(served), size=k, replace=False)
        cand = destroy_repair(inst, route, [served[i] for i in idx])
        if cand.revenue > route.revenue + _EPS:
            route = cand
    return route


# ---------------------------------------------------------------------------
# Simulated annealing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SaConfig:
    t0: float = 10.0
    cooling: float = 0.95
    t_stop: float = 0.01
    iters_per_temp: int = 20

    def __post_init__(self):
        if not 0.0 < self.cooling < 1.0:
            raise ValueError("cooling must lie in (0, 1)")


SA_OPS = ("swap", "insert", "replace", "destroy")


def _sa_candidate(inst: Instance, route: Route, op: str,
                  rng: np.random.Generator) -> Optional[Route]:
    seq = list(route.seq)
    served = sorted(route.served)
    unserved = [h for h in range(1, inst.n + 1) if h not in route.served]
    if op == "swap":
        if len(seq) < 4:
            return None
        i, j = rng.choice(range(1, len(seq) - 1), size=2, replace=False)
        seq[i], seq[j] = seq[j], seq[i]
        cand = seq
    elif op == "insert":
        if not unserved:
            return None
        h = unserved[int(rng.integers(len(unserved)))]
        i = int(rng.integers(1, len(seq)))
        j = int(rng.integers(i, len(seq)))
        cand = seq[:i] + [h] + seq[i:j] + [h + inst.n] + seq[j:]
    elif op == "replace":
        if not served or not unserved:
            return None
        out = served[int(rng.integers(len(served)))]
        h = unserved[int(rng.integers(len(unserved)))]
        seq = [v for v in seq if v not in (out, out + inst.n)]
        i = int(rng.integers(1, len(seq)))
        j = int(rng.integers(i, len(seq)))
        cand = seq[:i] + [h] + seq[i:j] + [h + inst.n] + seq[j:]
    elif op == "destroy":
        if not served:
            return None
        out = served[int(rng.integers(len(served)))]
        cand = [v for v in seq if v not in (out, out + inst.n)]
    else:
        raise ValueError(f"unknown move {op!r}")
    res = validate_route(inst, cand)
    if not res.feasible:
        return None
    return make_route(inst, cand)


def sa_move(inst: Instance, route: Route, temp: float,
            rng: np.random.Generator) -> Route:
    """One annealing step: uniform random move, Metropolis acceptance on the
    negative-revenue objective, infeasible candidates rejected outright."""
    op = SA_OPS[int(rng.integers(len(SA_OPS)))]
    cand = _sa_candidate(inst, route, op, rng)
    if cand is None:
        return route
    delta = (-cand.revenue) - (-route.revenue)
    if delta <= 0 or rng.random() < np.exp(-delta / temp):
        return cand
    return route


def simulated_annealing(inst: Instance, route: Route, rng: np.random.Generator,
                        cfg: SaConfig = SaConfig(),
                        t_max: Optional[float] = None) -> Route:
    """Geometric-cooling annealing; returns the best feasible route seen."""
    deadline = None if t_max is None else time.monotonic() + t_max
    best = route
    temp = cfg.t0
    while temp > cfg.t_stop:
        if deadline is not None and time.monotonic() >= deadline:
            break
        for _ in range(cfg.iters_per_temp):
            route = sa_move(inst, route, temp, rng)
            if route_sort_key(route) < route_sort_key(best):
                best = route
        temp *= cfg.cooling
    return best


# ---------------------------------------------------------------------------
# Memory-guided multi-start LNS
# ---------------------------------------------------------------------------


class SolutionPool:
    """Routes deduplicated by served set, plus the run-level bookkeeping of
    the memory-guided search: destroyed-request memory, iteration counter,
    and the best route ever seen."""

    def __init__(self, routes: Iterable[Route] = ()):
        self._by_served = {}
        self.memory: set = set()
        self.iteration: int = 0
        self.incumbent_best: Optional[Route] = None
        for r in routes:
            self.add(r)

    def add(self, route: Route):
        prev = self._by_served.get(route.served)
        if prev is None or route_sort_key(route) < route_sort_key(prev):
            self._by_served[route.served] = route
        if self.incumbent_best is None or route_sort_key(route) < route_sort_key(
            self.incumbent_best
        ):
            self.incumbent_best = route

    def truncate(self, beta: int):
        kept = sorted(self._by_served.values(), key=route_sort_key)[:beta]
        self._by_served = {r.served: r for r in kept}

    def routes(self) -> List[Route]:
        return sorted(self._by_served.values(), key=route_sort_key)

    def count_unique(self, exclude: Iterable[int] = ()) -> dict:
        """Occurrence count of each served request across pool routes,
        skipping excluded request ids."""
        exclude = set(exclude)
        counts: dict = {}
        for r in self._by_served.values():
            for h in r.served:
                if h not in exclude:
                    counts[h] = counts.get(h, 0) + 1
        return counts

    def __len__(self):
        return len(self._by_served)


@dataclass(frozen=True)
class MslnsConfig:
    M: int = 5  # seed trajectory count (used by the seed producers)
    beta: int = 3
    alpha: float = 1.0
    k_max: int = 4
    t_max: float = 0.5
    removal: str = "softmax"  # softmax | uniform
    schedule: str = "increasing"  # increasing | fixed_k
    multistart: bool = True

    def __post_init__(self):
        if self.removal not in ("softmax", "uniform"):
            raise ValueError(f"unknown removal mode {self.removal!r}")
        if self.schedule not in ("increasing", "fixed_k"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


def mslns(inst: Instance, seeds: Sequence[Route], cfg: MslnsConfig,
          rng: np.random.Generator) -> Route:
    """Pool-based LNS guided by a destruction memory.

    Each request is destroyed at most once over the whole run; destruction
    probabilities favor requests appearing in many pool routes. With
    multistart off only the single best seed enters the pool.
    """
    if not seeds:
        raise ValueError("mslns needs at least one seed route")
    for r in seeds:
        res = validate_route(inst, r.seq)
        if not res.feasible:
            raise ValueError(f"infeasible seed route ({res.violation})")
    deadline = time.monotonic() + cfg.t_max
    seeds = sorted(seeds, key=route_sort_key)
    if not cfg.multistart:
        seeds = seeds[:1]
    pool = SolutionPool(two_opt_route(inst, repair(inst, r)) for r in seeds)
    pool.truncate(cfg.beta)

    while time.monotonic() < deadline:
        pool.iteration += 1
        counts = pool.count_unique(exclude=pool.memory)
        if not counts:
            break
        candidates = sorted(counts)
        if cfg.schedule == "increasing":
            k = min(pool.iteration + 1, cfg.k_max)
        else:
            k = cfg.k_max
        k = min(k, len(candidates))
        if cfg.removal == "softmax":
            c = np.array([counts[h] for h in candidates], dtype=float)
            w = np.exp(cfg.alpha * (c - c.max()))  # shift-invariant, no overflow
            # keep every entry drawable so k distinct picks always exist
            w = np.maximum(w, 1e-300)
            p = w / w.sum()
        else:
            p = None
        chosen = [int(h) for h in
                  rng.choice(candidates, size=k, replace=False, p=p)]
        pool.memory.update(chosen)
        for r in pool.routes():
            pool.add(destroy_repair(inst, r, chosen))
        pool.truncate(cfg.beta)
    assert pool.incumbent_best is not None
    return pool.incumbent_best
