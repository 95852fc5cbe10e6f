"""Exact branch-and-bound oracle for small n, plus MILP export in LP format."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .core import Instance, Route, make_route

_EPS = 1e-12

DEFAULT_MAX_N = 6


def exhaustive_solve(inst: Instance, max_n: int = DEFAULT_MAX_N) -> Route:
    """Revenue-maximal feasible route by pruned depth-first search.

    Ties broken by smaller length, then lexicographically smaller sequence,
    so the result is a deterministic regression fixture.
    """
    if inst.n > max_n:
        raise ValueError(f"instance has n={inst.n} > max_n={max_n}")
    n = inst.n
    end = inst.end
    dist = inst.dist
    cap = inst.capacity
    t_budget = inst.max_length + 1e-9
    revenue = inst.revenue
    demand = inst.demand

    best: List = [(0, end), 0.0, dist(0, end)]  # seq, revenue, length

    def better(rev, length, seq):
        brev, blen = best[1], best[2]
        if rev > brev + _EPS:
            return True
        if rev < brev - _EPS:
            return False
        if length < blen - _EPS:
            return True
        if length > blen + _EPS:
            return False
        return seq < best[0]

    seq = [0]
    visited = [False] * (2 * n + 2)
    visited[0] = True

    def recurse(cur, load, length, rev, pending, pend_rev):
        # pending: set of delivery vertices owed; pend_rev: their revenue sum
        # optimistic revenue: everything pending plus every untaken pickup
        ub = rev + pend_rev + sum(
            revenue[h - 1] for h in range(1, n + 1) if not visited[h]
        )
        if ub < best[1] - _EPS:
            return
        # admissible length lower bound on any completion
        lb = dist(cur, end)
        for d in pending:
            lb = max(lb, dist(cur, d) + dist(d, end))
        if length + lb > t_budget:
            return
        if not pending:
            total = length + dist(cur, end)
            if total <= t_budget:
                cand = tuple(seq) + (end,)
                if better(rev, total, cand):
                    best[0], best[1], best[2] = cand, rev, total
        for v in range(1, 2 * n + 1):
            if visited[v]:
                continue
            if v <= n:
                q = int(demand[v - 1])
                if load + q > cap:
                    continue
                recurse_child(v, load + q, length + dist(cur, v), rev,
                              pending | {v + n}, pend_rev + revenue[v - 1])
            else:
                if v not in pending:
                    continue
                q = int(demand[v - n - 1])
                r = revenue[v - n - 1]
                recurse_child(v, load - q, length + dist(cur, v), rev + r,
                              pending - {v}, pend_rev - r)

    def recurse_child(v, load, length, rev, pending, pend_rev):
        visited[v] = True
        seq.append(v)
        recurse(v, load, length, rev, pending, pend_rev)
        seq.pop()
        visited[v] = False

    recurse(0, 0, 0.0, 0.0, frozenset(), 0.0)
    return make_route(inst, best[0])


# ---------------------------------------------------------------------------
# MILP export
# ---------------------------------------------------------------------------


@dataclass
class LinRow:
    """One linear constraint: sum(coeffs) <sense> rhs."""

    name: str
    coeffs: Dict[str, float]
    sense: str  # "<=", ">=", "="
    rhs: float

    def violated(self, values: Dict[str, float], tol: float = 1e-6) -> bool:
        lhs = sum(c * values.get(v, 0.0) for v, c in self.coeffs.items())
        if self.sense == "<=":
            return lhs > self.rhs + tol
        if self.sense == ">=":
            return lhs < self.rhs - tol
        return abs(lhs - self.rhs) > tol


@dataclass
class MilpModel:
    objective: Dict[str, float]  # minimized
    rows: List[LinRow]
    binaries: List[str]
    bounds: Dict[str, Tuple[float, Optional[float]]] = field(default_factory=dict)

    def check_assignment(self, values: Dict[str, float], tol: float = 1e-6) -> List[str]:
        """Names of rows (and bound entries) the assignment violates."""
        bad = [row.name for row in self.rows if row.violated(values, tol)]
        for var, (lo, hi) in self.bounds.items():
            val = values.get(var, 0.0)
            if val < lo - tol or (hi is not None and val > hi + tol):
                bad.append(f"bound:{var}")
        return bad


def _xv(i, j):
    return f"X_{i}_{j}"


def _tv(i):
    return f"Tm_{i}"


def _lv(i):
    return f"L_{i}"


def export_milp(inst: Instance) -> Tuple[MilpModel, str]:
    """Arc-flow model with big-M linearized indicator constraints.

    M_T = T + max c_ij bounds cumulative-length rows, M_L = Q + max q bounds
    load-propagation rows; both are the tightest constants derivable from the
    instance data.
    """
    n = inst.n
    end = inst.end
    V = list(range(2 * n + 2))
    P = list(range(1, n + 1))
    D = list(range(n + 1, 2 * n + 1))
    max_c = max(inst.dist(i, j) for i in V for j in V)
    big_t = inst.max_length + max_c
    big_l = inst.capacity + int(inst.demand.max())

    rows: List[LinRow] = []

    def add(name, coeffs, sense, rhs):
        rows.append(LinRow(name, coeffs, sense, rhs))

    # objective: minimize the negative collected revenue
    objective: Dict[str, float] = {}
    for h in P:
        for j in V:
            objective[_xv(h, j)] = objective.get(_xv(h, j), 0.0) - float(inst.revenue[h - 1])

    for i in V:
        add(f"noself_{i}", {_xv(i, i): 1.0}, "=", 0.0)
    add("start_out", {_xv(0, j): 1.0 for j in P}, "=", 1.0)
    add("end_in", {_xv(i, end): 1.0 for i in D}, "=", 1.0)
    add("start_in", {_xv(i, 0): 1.0 for i in V}, "=", 0.0)
    add("end_out", {_xv(end, j): 1.0 for j in V}, "=", 0.0)
    for i in P + D:
        coeffs = {_xv(i, j): 1.0 for j in V if j != i}
        for j in V:
            if j != i:
                coeffs[_xv(j, i)] = coeffs.get(_xv(j, i), 0.0) - 1.0
        add(f"flow_{i}", coeffs, "=", 0.0)
    for i in V:
        if i != end:
            add(f"outdeg_{i}", {_xv(i, j): 1.0 for j in V if j != i}, "<=", 1.0)
    for j in V:
        if j != 0:
            add(f"indeg_{j}", {_xv(i, j): 1.0 for i in V if i != j}, "<=", 1.0)
    for i in P:
        coeffs = {_xv(i, j): 1.0 for j in V if j != i}
        for j in V:
            if j != i + n:
                coeffs[_xv(j, i + n)] = coeffs.get(_xv(j, i + n), 0.0) - 1.0
        add(f"pairvisit_{i}", coeffs, "=", 0.0)
    add("t_start", {_tv(0): 1.0}, "=", 0.0)
    add("t_budget", {_tv(end): 1.0}, "<=", inst.max_length)
    # T_j >= T_i + c_ij - M_T (1 - X_ij)
    for i in V:
        for j in V:
            if i == j:
                continue
            add(
                f"tprop_{i}_{j}",
                {_tv(j): 1.0, _tv(i): -1.0, _xv(i, j): -big_t},
                ">=",
                inst.dist(i, j) - big_t,
            )
    # T_{i+n} >= T_i - M_T (1 - sum_j X_ij)
    for i in P:
        coeffs = {_tv(i + n): 1.0, _tv(i): -1.0}
        for j in V:
            if j != i:
                coeffs[_xv(i, j)] = -big_t
        add(f"precedence_{i}", coeffs, ">=", -big_t)
    add("l_start", {_lv(0): 1.0}, "=", 0.0)
    add("l_end", {_lv(end): 1.0}, "=", 0.0)
    # L_j = L_i + q_j on visited arcs into a pickup, = L_i - q_{j-n} into a delivery
    for j in P + D:
        dq = float(inst.vertex_demand(j))
        for i in V:
            if i == j:
                continue
            add(
                f"load_up_{i}_{j}",
                {_lv(j): 1.0, _lv(i): -1.0, _xv(i, j): big_l},
                "<=",
                dq + big_l,
            )
            add(
                f"load_lo_{i}_{j}",
                {_lv(j): 1.0, _lv(i): -1.0, _xv(i, j): -big_l},
                ">=",
                dq - big_l,
            )

    binaries = [_xv(i, j) for i in V for j in V]
    bounds = {}
    for i in V:
        bounds[_lv(i)] = (0.0, float(inst.capacity))
        bounds[_tv(i)] = (0.0, None)
    model = MilpModel(objective, rows, binaries, bounds)
    return model, lp_text(model)


def _term_str(coef: float, var: str) -> str:
    sign = "-" if coef < 0 else "+"
    return f" {sign} {abs(coef):.12g} {var}"


def lp_text(model: MilpModel) -> str:
    """Render the model in standard LP-file format."""
    out = ["Minimize", " obj:" + "".join(
        _term_str(c, v) for v, c in sorted(model.objective.items()) if c != 0.0
    )]
    out.append("Subject To")
    for row in model.rows:
        expr = "".join(_term_str(c, v) for v, c in sorted(row.coeffs.items()))
        sense = {"<=": "<=", ">=": ">=", "=": "="}[row.sense]
        out.append(f" {row.name}:{expr} {sense} {row.rhs:.12g}")
    out.append("Bounds")
    for var, (lo, hi) in sorted(model.bounds.items()):
        if hi is None:
            out.append(f" {var} >= {lo:.12g}")
        else:
            out.append(f" {lo:.12g} <= {var} <= {hi:.12g}")
    out.append("Binary")
    out.append(" " + " ".join(model.binaries))
    out.append("End")
    return "\n".join(out) + "\n"


def route_to_assignment(inst: Instance, route: Route) -> Dict[str, float]:
    """X/T/L values induced by a feasible route (unvisited vertices at 0)."""
    values: Dict[str, float] = {}
    seq = route.seq
    cum = 0.0
    load = 0
    values[_tv(seq[0])] = 0.0
    values[_lv(seq[0])] = 0.0
    for a, b in zip(seq, seq[1:]):
        values[_xv(a, b)] = 1.0
        cum += inst.dist(a, b)
        load += inst.vertex_demand(b)
        values[_tv(b)] = cum
        values[_lv(b)] = float(load)
    return values
