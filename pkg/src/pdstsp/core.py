"""Instance/route data model and the single authoritative feasibility check.

Vertex numbering: 0 is the start depot, 1..n are pickups, n+1..2n the matching
deliveries, 2n+1 is the end depot. Request h owns pickup h and delivery h+n.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

# Absorbs float summation-order noise when comparing a length against T.
LENGTH_TOL = 1e-9

REVENUE_SETTINGS = ("distance", "ton_distance", "uniform", "constant")

VIOLATION_REPEAT = "repeat_visit"
VIOLATION_PRECEDENCE = "precedence"
VIOLATION_CAPACITY = "capacity"
VIOLATION_LENGTH = "length"


@dataclass(frozen=True)
class Instance:
    """One m1-PDSTSP instance. Immutable after construction."""

    n: int
    coords: np.ndarray  # (2n+2, 2), unit square
    demand: np.ndarray  # (n,) positive ints
    revenue: np.ndarray  # (n,) floats
    capacity: int
    max_length: float
    revenue_setting: str = "distance"
    seed: int = 0

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        demand = np.asarray(self.demand, dtype=int)
        revenue = np.asarray(self.revenue, dtype=float)
        if coords.shape != (2 * self.n + 2, 2):
            raise ValueError(f"coords must have shape ({2 * self.n + 2}, 2)")
        if demand.shape != (self.n,) or revenue.shape != (self.n,):
            raise ValueError("demand and revenue must have length n")
        if coords.min() < -1e-12 or coords.max() > 1.0 + 1e-12:
            raise ValueError("coords must lie in the unit square")
        if (demand <= 0).any():
            raise ValueError("demands must be positive")
        if (revenue < 0).any() or (revenue > 1.5).any():
            raise ValueError("revenues must lie in [0, 1.5]")
        if self.revenue_setting not in REVENUE_SETTINGS:
            raise ValueError(f"unknown revenue setting {self.revenue_setting!r}")
        if self.capacity <= 0 or self.max_length <= 0:
            raise ValueError("capacity and max_length must be positive")
        for arr in (coords, demand, revenue):
            arr.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "demand", demand)
        object.__setattr__(self, "revenue", revenue)
        # plain-float point list keeps per-pair distance lookups cheap
        object.__setattr__(self, "_pts", [(float(x), float(y)) for x, y in coords])

    @property
    def num_vertices(self) -> int:
        return 2 * self.n + 2

    @property
    def end(self) -> int:
        return 2 * self.n + 1

    def is_pickup(self, v: int) -> bool:
        return 1 <= v <= self.n

    def is_delivery(self, v: int) -> bool:
        return self.n + 1 <= v <= 2 * self.n

    def request_of(self, v: int) -> int:
        """Request id (1-based) owning vertex v; raises for depots."""
        if self.is_pickup(v):
            return v
        if self.is_delivery(v):
            return v - self.n
        raise ValueError(f"vertex {v} is a depot")

    def vertex_demand(self, v: int) -> int:
        """Signed load change at v: +q at a pickup, -q at a delivery, 0 at depots."""
        if self.is_pickup(v):
            return int(self.demand[v - 1])
        if self.is_delivery(v):
            return -int(self.demand[v - self.n - 1])
        return 0

    def vertex_revenue(self, v: int) -> float:
        """Revenue of the request owning v; 0 for depots."""
        if self.is_pickup(v):
            return float(self.revenue[v - 1])
        if self.is_delivery(v):
            return float(self.revenue[v - self.n - 1])
        return 0.0

    def dist(self, i: int, j: int) -> float:
        a = self._pts[i]
        b = self._pts[j]
        return math.hypot(a[0] - b[0], a[1] - b[1])

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "coords": [[float(x), float(y)] for x, y in self.coords],
                "demand": [int(q) for q in self.demand],
                "revenue": [float(r) for r in self.revenue],
                "capacity": int(self.capacity),
                "max_length": float(self.max_length),
                "revenue_setting": self.revenue_setting,
                "seed": int(self.seed),
            }
        )


_INSTANCE_FIELDS = {
    "n", "coords", "demand", "revenue", "capacity",
    "max_length", "revenue_setting", "seed",
}


def instance_from_json(text: str) -> Instance:
    obj = json.loads(text)
    unknown = set(obj) - _INSTANCE_FIELDS
    if unknown:
        raise ValueError(f"unknown instance fields: {sorted(unknown)}")
    missing = _INSTANCE_FIELDS - set(obj)
    if missing:
        raise ValueError(f"missing instance fields: {sorted(missing)}")
    return Instance(
        n=int(obj["n"]),
        coords=np.array(obj["coords"], dtype=float),
        demand=np.array(obj["demand"], dtype=int),
        revenue=np.array(obj["revenue"], dtype=float),
        capacity=int(obj["capacity"]),
        max_length=float(obj["max_length"]),
        revenue_setting=str(obj["revenue_setting"]),
        seed=int(obj["seed"]),
    )


@dataclass(frozen=True)
class Route:
    """A depot-to-depot vertex sequence with cached evaluation."""

    seq: tuple
    served: frozenset
    length: float
    revenue: float

    def to_json(self) -> str:
        return json.dumps(
            {"seq": list(self.seq), "revenue": self.revenue, "length": self.length}
        )


def route_from_json(inst: Instance, text: str) -> Route:
    obj = json.loads(text)
    unknown = set(obj) - {"seq", "revenue", "length"}
    if unknown:
        raise ValueError(f"unknown route fields: {sorted(unknown)}")
    route = make_route(inst, obj["seq"])
    if abs(route.length - float(obj["length"])) > 1e-6:
        raise ValueError("cached route length disagrees with recomputation")
    if abs(route.revenue - float(obj["revenue"])) > 1e-6:
        raise ValueError("cached route revenue disagrees with recomputation")
    return route


@dataclass(frozen=True)
class EvalResult:
    length: float
    revenue: float
    profit: float
    feasible: bool
    violation: Optional[str] = None


def _check_indices(inst: Instance, seq: Sequence[int]):
    top = inst.num_vertices
    for v in seq:
        if not 0 <= v < top:
            raise ValueError(f"vertex index {v} out of range [0, {top - 1}]")


def route_length(inst: Instance, seq: Sequence[int]) -> float:
    """Sum of consecutive Euclidean distances along seq."""
    _check_indices(inst, seq)
    dist = inst.dist
    return sum(dist(seq[i], seq[i + 1]) for i in range(len(seq) - 1))


def served_requests(inst: Instance, seq: Sequence[int]) -> frozenset:
    """Requests whose pickup and delivery both appear in seq, pickup first.

    Raises if a pickup appears without its delivery (or vice versa).
    """
    _check_indices(inst, seq)
    pos = {}
    for idx, v in enumerate(seq):
        pos.setdefault(v, idx)
    served = set()
    for h in range(1, inst.n + 1):
        p, d = pos.get(h), pos.get(h + inst.n)
        if p is None and d is None:
            continue
        if p is None or d is None or p > d:
            raise ValueError(f"request {h} is not properly paired in the route")
        served.add(h)
    return frozenset(served)


def collected_revenue(inst: Instance, route) -> float:
    """Total revenue of fully served requests (pickup AND delivery present)."""
    if isinstance(route, Route):
        served = route.served
    else:
        served = served_requests(inst, route)
    return float(sum(inst.revenue[h - 1] for h in served))


def load_profile(inst: Instance, seq: Sequence[int]) -> list:
    """Vehicle load after leaving each vertex of seq (starts at 0)."""
    _check_indices(inst, seq)
    loads = []
    load = 0
    for v in seq:
        load += inst.vertex_demand(v)
        loads.append(load)
    return loads


def validate_route(inst: Instance, seq: Sequence[int]) -> EvalResult:
    """Full feasibility check of an arbitrary vertex sequence.

    Violations are reported in the fixed order repeat -> precedence ->
    capacity -> length so fuzzing is deterministic.
    """
    _check_indices(inst, seq)
    length = route_length(inst, seq)

    def fail(violation, revenue=0.0):
        return EvalResult(length, revenue, revenue - length, False, violation)

    if len(set(seq)) != len(seq):
        return fail(VIOLATION_REPEAT)
    if len(seq) < 2 or seq[0] != 0 or seq[-1] != inst.end:
        return fail(VIOLATION_PRECEDENCE)
    try:
        served = served_requests(inst, seq)
    except ValueError:
        return fail(VIOLATION_PRECEDENCE)
    revenue = float(sum(inst.revenue[h - 1] for h in served))
    load = 0
    for v in seq:
        load += inst.vertex_demand(v)
        if load > inst.capacity:
            return fail(VIOLATION_CAPACITY, revenue)
    if length > inst.max_length + LENGTH_TOL:
        return fail(VIOLATION_LENGTH, revenue)
    return EvalResult(length, revenue, revenue - length, True, None)


def make_route(inst: Instance, seq: Sequence[int]) -> Route:
    """Build a Route with cached length/revenue. Pairing must hold; the route
    may still violate capacity or length (shaped-objective training allows it).
    """
    seq = tuple(int(v) for v in seq)
    served = served_requests(inst, seq)
    return Route(
        seq=seq,
        served=served,
        length=route_length(inst, seq),
        revenue=float(sum(inst.revenue[h - 1] for h in served)),
    )


def shaped_objective(inst: Instance, route: Route, rho: float) -> float:
    """Negative revenue plus rho-weighted route-length overage.

    Only length overage is shaped; structural violations (repeats, pairing,
    capacity) are errors.
    """
    res = validate_route(inst, route.seq)
    if res.violation in (VIOLATION_REPEAT, VIOLATION_PRECEDENCE, VIOLATION_CAPACITY):
        raise ValueError(f"route is structurally invalid: {res.violation}")
    return -route.revenue + rho * max(0.0, route.length - inst.max_length)


def route_sort_key(route: Route):
    """Total order used everywhere: revenue desc, length asc, lexicographic seq."""
    return (-route.revenue, route.length, route.seq)
