"""Constructive side: masked MDP decoding, rule-based greedy search, and the
fixed-endpoint 2-Opt path builder used as a feasibility witness.

Two mask modes exist. ``train_lb`` screens pickups with a cheap straight-line
lower bound and may let length-infeasible routes through (shaped objective
handles them). ``inference_2opt`` certifies every unmasked action with an
explicit 2-Opt completion path, so decoded routes are always feasible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import Instance, Route, make_route, LENGTH_TOL

MASK_TRAIN_LB = "train_lb"
MASK_INFERENCE_2OPT = "inference_2opt"


@dataclass(frozen=True)
class DecodeState:
    """Partial route plus the running capacity/length bookkeeping."""

    seq: tuple
    visited: frozenset
    cap_frac: float  # remaining capacity, normalized to [0, 1]
    remaining: float  # remaining route length budget
    pending: frozenset  # delivery vertices owed
    # certified completion from the current vertex (deliveries order + end);
    # only maintained in inference mode
    witness: tuple = ()

    @property
    def current(self) -> int:
        return self.seq[-1]

    def done(self, inst: Instance) -> bool:
        return self.current == inst.end


def initial_state(inst: Instance) -> DecodeState:
    return DecodeState(
        seq=(0,),
        visited=frozenset({0}),
        cap_frac=1.0,
        remaining=float(inst.max_length),
        pending=frozenset(),
        witness=(inst.end,),
    )


def advance(inst: Instance, state: DecodeState, v: int,
            witness: tuple = ()) -> DecodeState:
    """Deterministic MDP transition: append v and update Q-hat / T_t."""
    if v in state.visited:
        raise ValueError(f"vertex {v} already visited")
    qhat = inst.vertex_demand(v) / inst.capacity
    pending = set(state.pending)
    if inst.is_pickup(v):
        pending.add(v + inst.n)
    elif inst.is_delivery(v):
        pending.discard(v)
    return DecodeState(
        seq=state.seq + (v,),
        visited=state.visited | {v},
        cap_frac=max(state.cap_frac - qhat, 0.0),
        remaining=state.remaining - inst.dist(state.current, v),
        pending=frozenset(pending),
        witness=witness,
    )


def path_length(inst: Instance, seq: Sequence[int]) -> float:
    dist = inst.dist
    return sum(dist(seq[i], seq[i + 1]) for i in range(len(seq) - 1))


def two_opt_path(inst: Instance, start: int, end: int, mids,
                 hint: Optional[Sequence[int]] = None) -> Tuple[tuple, float]:
    """Fixed-endpoint path through all of ``mids``: nearest-neighbor build,
    then 2-Opt segment reversals to no improvement.

    ``hint`` is an ordering of (a subset of) mids used as an alternative
    initial tour; the result is never longer than the better initial tour,
    which makes witness lengths monotone along a decode.
    """
    mids = set(mids)
    if not mids:
        seq = (start, end)
        return seq, inst.dist(start, end)
    dist = inst.dist

    def nn_order(from_v, pool):
        order = []
        cur = from_v
        pool = set(pool)
        while pool:
            nxt = min(pool, key=lambda m: (dist(cur, m), m))
            order.append(nxt)
            pool.discard(nxt)
            cur = nxt
        return order

    inits = [nn_order(start, mids)]
    if hint:
        order = [v for v in hint if v in mids]
        missing = mids - set(order)
        for m in sorted(missing):
            # cheapest insertion of the missing vertex
            best_pos, best_cost = 0, None
            pts = [start] + order + [end]
            for pos in range(len(pts) - 1):
                cost = dist(pts[pos], m) + dist(m, pts[pos + 1]) - dist(pts[pos], pts[pos + 1])
                if best_cost is None or cost < best_cost:
                    best_pos, best_cost = pos, cost
            order.insert(best_pos, m)
        inits.append(order)

    def total(order):
        return path_length(inst, [start] + order + [end])

    order = min(inits, key=total)
    seq = [start] + order + [end]
    improved = True
    while improved:
        improved = False
        for i in range(1, len(seq) - 2):
            for j in range(i + 1, len(seq) - 1):
                delta = (
                    dist(seq[i - 1], seq[j]) + dist(seq[i], seq[j + 1])
                    - dist(seq[i - 1], seq[i]) - dist(seq[j], seq[j + 1])
                )
                if delta < -1e-12:
                    seq[i : j + 1] = reversed(seq[i : j + 1])
                    improved = True
        # loop again until a full clean pass
    return tuple(seq), path_length(inst, seq)


@dataclass
class MaskVector:
    """Per-vertex admissibility for the next decode step.

    In inference mode, ``witnesses[v]`` holds the certified completion path
    (from v through all then-pending deliveries to the end depot).
    """

    allowed: np.ndarray
    witnesses: Dict[int, tuple] = field(default_factory=dict)


def compute_mask(state: DecodeState, inst: Instance,
                 mask_mode: str = MASK_INFERENCE_2OPT) -> MaskVector:
    n = inst.n
    end = inst.end
    cur = state.current
    allowed = np.zeros(inst.num_vertices, dtype=bool)
    witnesses: Dict[int, tuple] = {}
    if state.done(inst):
        return MaskVector(allowed, witnesses)
    tol = LENGTH_TOL
    rem = state.remaining

    # deliveries: pickup done, not yet delivered
    for d in state.pending:
        if mask_mode == MASK_TRAIN_LB:
            allowed[d] = True
        else:
            hint = [v for v in state.witness if v != d and v != end]
            path, plen = two_opt_path(inst, d, end, state.pending - {d}, hint=hint)
            if inst.dist(cur, d) + plen <= rem + tol:
                allowed[d] = True
                witnesses[d] = path[1:]

    # pickups: unvisited, capacity fits, completion survives the length budget
    for p in range(1, n + 1):
        if p in state.visited:
            continue
        if inst.demand[p - 1] / inst.capacity > state.cap_frac + 1e-12:
            continue
        if mask_mode == MASK_TRAIN_LB:
            lb = inst.dist(cur, p) + inst.dist(p, p + n) + inst.dist(p + n, end)
            if lb <= rem + tol:
                allowed[p] = True
        else:
            hint = [v for v in state.witness if v != end]
            path, plen = two_opt_path(inst, p, end, set(state.pending) | {p + n},
                                      hint=hint)
            if inst.dist(cur, p) + plen <= rem + tol:
                allowed[p] = True
                witnesses[p] = path[1:]

    # end depot: only when nothing is owed; masked at the very first step if
    # any pickup is still available, so decodes never return a trivial route
    if not state.pending:
        if mask_mode == MASK_TRAIN_LB or inst.dist(cur, end) <= rem + tol:
            allowed[end] = True
            witnesses[end] = ()
        if len(state.seq) == 1 and allowed[1 : n + 1].any():
            allowed[end] = False
    return MaskVector(allowed, witnesses)


# ---------------------------------------------------------------------------
# Scorers
# ---------------------------------------------------------------------------


class Scorer:
    """Pre-mask per-vertex action scores."""

    def score(self, state: DecodeState, inst: Instance) -> np.ndarray:
        raise NotImplementedError


class FitnessScorer(Scorer):
    """Rule-based fitness: request revenue minus travel cost from the current
    vertex (depots carry zero revenue)."""

    def score(self, state: DecodeState, inst: Instance) -> np.ndarray:
        cur = state.current
        out = np.empty(inst.num_vertices)
        for v in range(inst.num_vertices):
            out[v] = inst.vertex_revenue(v) - inst.dist(cur, v)
        return out


class ExternalScorer(Scorer):
    """Replays fixed trajectories produced elsewhere (e.g. a trained policy).

    The seed file is JSONL with one object per instance:
    ``{"instance_id": str, "routes": [[0, ..., 2n+1], ...]}``.
    """

    def __init__(self, trajectories: Dict[str, List[List[int]]]):
        self.trajectories = trajectories

    @classmethod
    def from_file(cls, path: str) -> "ExternalScorer":
        trajectories = {}
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                trajectories[str(obj["instance_id"])] = obj["routes"]
        return cls(trajectories)

    def routes_for(self, inst: Instance, instance_id: str) -> List[Route]:
        return [make_route(inst, seq) for seq in self.trajectories[instance_id]]

    def score(self, state: DecodeState, inst: Instance) -> np.ndarray:
        raise RuntimeError("ExternalScorer replays trajectories; it has no logits")


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------


@dataclass
class DecodeConfig:
    mode: str = "greedy"  # greedy | sample | beam | multistart
    M: int = 1
    beta: int = 3
    eta: int = 8
    mask_mode: str = MASK_INFERENCE_2OPT
    rho: float = 10.0
    softmax_scale: float = 10.0  # C


def action_probabilities(scores: np.ndarray, mask: MaskVector,
                         scale: float = 10.0) -> np.ndarray:
    """softmax(C * tanh(score)) over unmasked vertices; masked entries are 0."""
    logits = scale * np.tanh(scores)
    logits = np.where(mask.allowed, logits, -np.inf)
    m = logits.max()
    if not np.isfinite(m):
        raise ValueError("no admissible action")
    w = np.exp(logits - m)
    return w / w.sum()


def _rollout(inst: Instance, scorer: Scorer, cfg: DecodeConfig,
             rng: Optional[np.random.Generator] = None,
             first: Optional[int] = None) -> Route:
    state = initial_state(inst)
    while not state.done(inst):
        mask = compute_mask(state, inst, cfg.mask_mode)
        if not mask.allowed.any():
            raise RuntimeError("dead decode state (no admissible action)")
        if first is not None:
            v = first
            if not mask.allowed[v]:
                raise ValueError(f"start pickup {v} is not admissible")
            first = None
        elif mask.allowed.sum() == 1:
            v = int(np.argmax(mask.allowed))
        elif rng is not None:
            probs = action_probabilities(scorer.score(state, inst), mask,
                                         cfg.softmax_scale)
            v = int(rng.choice(len(probs), p=probs))
        else:
            scores = scorer.score(state, inst)
            scores = np.where(mask.allowed, scores, -np.inf)
            v = int(np.argmax(scores))
        state = advance(inst, state, v, witness=mask.witnesses.get(v, ()))
    return make_route(inst, state.seq)


def _start_pickups(inst: Instance, scorer: Scorer, cfg: DecodeConfig, m: int) -> List[int]:
    """Top-m admissible first pickups by initial score."""
    state = initial_state(inst)
    mask = compute_mask(state, inst, cfg.mask_mode)
    scores = scorer.score(state, inst)
    cands = [p for p in range(1, inst.n + 1) if mask.allowed[p]]
    cands.sort(key=lambda p: (-scores[p], p))
    return cands[:m]


def _beam_decode(inst: Instance, scorer: Scorer, cfg: DecodeConfig) -> List[Route]:
    beams = [(0.0, initial_state(inst))]  # (logprob, state)
    finished: Dict[frozenset, Tuple[float, Route]] = {}
    while beams:
        candidates = []
        for logp, state in beams:
            mask = compute_mask(state, inst, cfg.mask_mode)
            probs = action_probabilities(scorer.score(state, inst), mask,
                                         cfg.softmax_scale)
            for v in np.flatnonzero(mask.allowed):
                v = int(v)
                child = advance(inst, state, v, witness=mask.witnesses.get(v, ()))
                lp = logp + math.log(max(probs[v], 1e-300))
                if child.done(inst):
                    route = make_route(inst, child.seq)
                    prev = finished.get(route.served)
                    if prev is None or lp > prev[0]:
                        finished[route.served] = (lp, route)
                else:
                    candidates.append((lp, child))
        # dedup live partials by served set, keep best log-probability
        by_served: Dict[frozenset, Tuple[float, DecodeState]] = {}
        for lp, child in candidates:
            served = frozenset(inst.request_of(v) for v in child.visited
                               if inst.is_pickup(v))
            prev = by_served.get(served)
            if prev is None or lp > prev[0]:
                by_served[served] = (lp, child)
        beams = sorted(by_served.values(), key=lambda t: -t[0])[: cfg.beta]
    routes = [r for _, r in finished.values()]
    routes.sort(key=lambda r: (-r.revenue, r.length, r.seq))
    return routes


def decode(inst: Instance, scorer: Scorer, cfg: DecodeConfig,
           rng_seed: int = 0, instance_id: Optional[str] = None) -> List[Route]:
    """Construct routes per cfg.mode. In inference mode every returned route
    is feasible; in train mode routes may overrun T (shaped objective)."""
    if isinstance(scorer, ExternalScorer):
        if instance_id is None:
            raise ValueError("ExternalScorer replay needs an instance_id")
        routes = scorer.routes_for(inst, instance_id)
        return routes
    if cfg.mode == "greedy":
        return [_rollout(inst, scorer, cfg)]
    if cfg.mode == "sample":
        rng = np.random.default_rng(rng_seed)
        return [_rollout(inst, scorer, cfg, rng=rng) for _ in range(cfg.eta)]
    if cfg.mode == "multistart":
        starts = _start_pickups(inst, scorer, cfg, cfg.M)
        if starts:
            return [_rollout(inst, scorer, cfg, first=p) for p in starts]
        return [_rollout(inst, scorer, cfg)]
    if cfg.mode == "beam":
        return _beam_decode(inst, scorer, cfg)
    raise ValueError(f"unknown decode mode {cfg.mode!r}")


# ---------------------------------------------------------------------------
# Rule-based constructors
# ---------------------------------------------------------------------------


def greedy_search(inst: Instance, start_pickup: Optional[int] = None) -> Route:
    """Fitness-greedy construction under the inference (certified) mask."""
    cfg = DecodeConfig(mode="greedy")
    return _rollout(inst, FitnessScorer(), cfg, first=start_pickup)


def multi_start_greedy(inst: Instance, M: int) -> List[Route]:
    """Greedy runs from the top-M first-pickup fitness ranks.

    Returns as many routes as there are admissible first pickups (at most M);
    the best is simply max by revenue.
    """
    if M > inst.n:
        raise ValueError("M must be <= n")
    cfg = DecodeConfig(mode="multistart", M=M)
    return decode(inst, FitnessScorer(), cfg)


def sgbs(inst: Instance, scorer: Scorer, beta: int, gamma: int,
         rollout: Optional[Scorer] = None) -> Route:
    """Simulation-guided beam search: expand gamma children per node, rank by
    a greedy-rollout evaluation, dedup by served set, keep beta."""
    if beta < 1 or gamma < 1:
        raise ValueError("beta and gamma must be >= 1")
    rollout = rollout or scorer
    cfg = DecodeConfig(mode="greedy")

    def complete(state: DecodeState) -> Route:
        while not state.done(inst):
            mask = compute_mask(state, inst, cfg.mask_mode)
            scores = np.where(mask.allowed, rollout.score(state, inst), -np.inf)
            v = int(np.argmax(scores))
            state = advance(inst, state, v, witness=mask.witnesses.get(v, ()))
        return make_route(inst, state.seq)

    best: Optional[Route] = None

    def consider(route: Route):
        nonlocal best
        if best is None or (-route.revenue, route.length, route.seq) < (
            -best.revenue, best.length, best.seq
        ):
            best = route

    beams = [initial_state(inst)]
    while beams:
        scored: Dict[frozenset, Tuple[float, float, DecodeState]] = {}
        for state in beams:
            mask = compute_mask(state, inst, cfg.mask_mode)
            scores = np.where(mask.allowed, scorer.score(state, inst), -np.inf)
            top = np.argsort(-scores)[:gamma]
            for v in top:
                v = int(v)
                if not mask.allowed[v]:
                    continue
                child = advance(inst, state, v, witness=mask.witnesses.get(v, ()))
                if child.done(inst):
                    consider(make_route(inst, child.seq))
                    continue
                rolled = complete(child)
                consider(rolled)
                served = frozenset(inst.request_of(u) for u in child.visited
                                   if inst.is_pickup(u))
                prev = scored.get(served)
                key = (rolled.revenue, -rolled.length)
                if prev is None or key > (prev[0], -prev[1]):
                    scored[served] = (rolled.revenue, rolled.length, child)
        ranked = sorted(scored.values(), key=lambda t: (-t[0], t[1]))
        beams = [state for _, _, state in ranked[:beta]]
    assert best is not None
    return best
