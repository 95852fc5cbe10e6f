import itertools
import math

import numpy as np
import pytest

from pdstsp.core import make_route, validate_route
from pdstsp.exact import exhaustive_solve
from pdstsp.generator import GenSpec, gen_instance
from pdstsp.improve import (
    MslnsConfig,
    SaConfig,
    SolutionPool,
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
from pdstsp.search import greedy_search, multi_start_greedy
from conftest import build_instance


def dominated_pair_instance():
    """Two mutually exclusive requests (length budget), revenues 0.2 and 1.0."""
    return build_instance(
        coords=[[0.5, 0.5], [0.1, 0.5], [0.9, 0.5], [0.1, 0.6],
                [0.9, 0.6], [0.5, 0.6]],
        demand=[2, 2],
        revenue=[0.2, 1.0],
        capacity=10,
        max_length=1.0,
    )


# ---------------------------------------------------------------------------
# repair
# ---------------------------------------------------------------------------


def test_remove_requests(tiny_instance):
    route = make_route(tiny_instance, (0, 1, 3, 2, 4, 5))
    assert remove_requests(tiny_instance, route, [1]).seq == (0, 2, 4, 5)
    assert remove_requests(tiny_instance, route, [1, 2]).seq == (0, 5)


def test_repair_inserts_everything_that_fits(tiny_instance):
    empty = make_route(tiny_instance, (0, 5))
    repaired = repair(tiny_instance, empty)
    assert repaired.served == frozenset({1, 2})
    assert validate_route(tiny_instance, repaired.seq).feasible


def test_repair_matches_brute_force_single_insertion():
    inst = gen_instance(GenSpec(n=3, seed=8), 0)
    base = exhaustive_solve(inst)
    missing = [h for h in range(1, 4) if h not in base.served]
    if not missing:
        base = remove_requests(inst, base, [min(base.served)])
        missing = [h for h in range(1, 4) if h not in base.served]
    repaired = repair(inst, base)
    # oracle: enumerate every insertion of every missing request directly
    best = (-base.revenue, base.length)
    seq = base.seq
    for h in [x for x in range(1, 4) if x not in base.served]:
        for i in range(1, len(seq)):
            for j in range(i, len(seq)):
                cand = seq[:i] + (h,) + seq[i:j] + (h + 3,) + seq[j:]
                res = validate_route(inst, cand)
                if res.feasible:
                    best = min(best, (-res.revenue, res.length))
    assert -repaired.revenue <= best[0] + 1e-12


def test_repair_fixpoint_and_monotone():
    for seed in range(10):
        inst = gen_instance(GenSpec(n=5, seed=seed), 0)
        start = greedy_search(inst)
        out = repair(inst, start)
        assert out.revenue >= start.revenue - 1e-12
        assert repair(inst, out).seq == out.seq  # no further insertion fits
        assert validate_route(inst, out.seq).feasible


def test_repair_rejects_infeasible_input(tiny_instance):
    bad = make_route(tiny_instance, (0, 1, 2, 3, 4, 5))  # capacity breach
    with pytest.raises(ValueError, match="feasible"):
        repair(tiny_instance, bad)


# ---------------------------------------------------------------------------
# two_opt_route
# ---------------------------------------------------------------------------


def test_two_opt_route_trivial_cases(tiny_instance):
    empty = make_route(tiny_instance, (0, 5))
    assert two_opt_route(tiny_instance, empty).seq == (0, 5)


def test_two_opt_route_uncrosses_planted_crossing():
    inst = build_instance(
        coords=[[0.0, 0.0], [0.1, 0.0], [0.2, 0.0], [0.5, 0.5],
                [0.3, 0.1], [0.6, 0.0]],
        demand=[2, 2],
        revenue=[1.0, 1.0],
        capacity=10,
        max_length=5.0,
    )
    crossed = make_route(inst, (0, 1, 2, 3, 4, 5))
    fixed = two_opt_route(inst, crossed)
    assert fixed.seq == (0, 1, 2, 4, 3, 5)
    assert fixed.length < crossed.length


def test_two_opt_route_invariants():
    for seed in range(10):
        inst = gen_instance(GenSpec(n=5, seed=seed), 0)
        route = greedy_search(inst)
        out = two_opt_route(inst, route)
        assert out.served == route.served
        assert out.length <= route.length + 1e-12
        assert validate_route(inst, out.seq).feasible


# ---------------------------------------------------------------------------
# hill climbing / BI-LNS / LNS
# ---------------------------------------------------------------------------


def test_hill_climb_is_a_joint_fixpoint():
    for seed in range(8):
        inst = gen_instance(GenSpec(n=5, seed=seed), 0)
        start = greedy_search(inst)
        out = hill_climb(inst, start)
        assert out.revenue >= start.revenue - 1e-12
        assert repair(inst, out).seq == out.seq
        assert two_opt_route(inst, out).seq == out.seq


def test_bi_lns_swaps_out_dominated_request():
    inst = dominated_pair_instance()
    weak = make_route(inst, (0, 1, 3, 5))
    assert validate_route(inst, weak.seq).feasible
    out = bi_lns(inst, weak)
    assert out.served == frozenset({2})
    assert out.revenue == pytest.approx(1.0)


def test_bi_lns_converged_output_has_no_improving_neighbor():
    for seed in range(8):
        inst = gen_instance(GenSpec(n=5, seed=seed), 0)
        out = bi_lns(inst, greedy_search(inst))
        for h in out.served:
            neighbor = destroy_repair(inst, out, [h])
            assert neighbor.revenue <= out.revenue + 1e-9
        assert bi_lns(inst, out).seq == out.seq  # already converged


def test_bi_lns_oracle_sandwich():
    for seed in range(10):
        inst = gen_instance(GenSpec(n=5, seed=seed), 0)
        gs = greedy_search(inst)
        out = bi_lns(inst, gs)
        assert gs.revenue - 1e-12 <= out.revenue
        assert out.revenue <= exhaustive_solve(inst).revenue + 1e-9


def test_lns_random_reproducible_and_monotone():
    inst = gen_instance(GenSpec(n=6, seed=4), 0)
    start = greedy_search(inst)
    a = lns_random(inst, start, np.random.default_rng(12), max_iters=30)
    b = lns_random(inst, start, np.random.default_rng(12), max_iters=30)
    assert a.seq == b.seq
    assert a.revenue >= start.revenue - 1e-12
    assert validate_route(inst, a.seq).feasible


# ---------------------------------------------------------------------------
# simulated annealing
# ---------------------------------------------------------------------------


def test_sa_config_validation():
    with pytest.raises(ValueError):
        SaConfig(cooling=1.5)


def test_sa_moves_preserve_feasibility():
    rng = np.random.default_rng(0)
    inst = gen_instance(GenSpec(n=6, seed=2), 0)
    route = greedy_search(inst)
    for _ in range(2000):
        route = sa_move(inst, route, temp=5.0, rng=rng)
        assert validate_route(inst, route.seq).feasible


def test_simulated_annealing_returns_best_seen():
    for seed in range(5):
        inst = gen_instance(GenSpec(n=5, seed=seed), 0)
        start = greedy_search(inst)
        out = simulated_annealing(inst, start, np.random.default_rng(seed))
        assert out.revenue >= start.revenue - 1e-12
        assert out.revenue <= exhaustive_solve(inst).revenue + 1e-9
        assert validate_route(inst, out.seq).feasible


# ---------------------------------------------------------------------------
# memory-guided multi-start LNS
# ---------------------------------------------------------------------------


class RecordingRng:
    """Wraps a real generator and records every destruction draw."""

    def __init__(self, seed=0):
        self._rng = np.random.default_rng(seed)
        self.calls = []

    def choice(self, candidates, size, replace, p):
        picked = self._rng.choice(candidates, size=size, replace=replace, p=p)
        self.calls.append({"candidates": list(candidates), "size": int(size),
                           "p": None if p is None else np.asarray(p), "picked": picked})
        return picked


def test_pool_count_unique(tiny_instance):
    r12 = make_route(tiny_instance, (0, 1, 3, 2, 4, 5))
    r1 = make_route(tiny_instance, (0, 1, 3, 5))
    r2 = make_route(tiny_instance, (0, 2, 4, 5))
    pool = SolutionPool([r12, r1])
    assert pool.count_unique() == {1: 2, 2: 1}
    pool.add(r2)
    assert pool.count_unique() == {1: 2, 2: 2}
    assert pool.count_unique(exclude={1}) == {2: 2}


def test_pool_dedups_by_served_set(tiny_instance):
    shorter = make_route(tiny_instance, (0, 1, 3, 5))
    longer = make_route(tiny_instance, (0, 1, 2, 4, 3, 5))
    pool = SolutionPool([longer])
    pool.add(shorter)
    kept = [r for r in pool.routes() if r.served == frozenset({1})]
    assert len(kept) == 1 and kept[0].seq == shorter.seq


def test_softmax_removal_probabilities():
    # counts (2,1,1) at unit temperature: p = (e^2, e, e) / (e^2 + 2e)
    inst = gen_instance(GenSpec(n=6, seed=10), 0)
    seeds = multi_start_greedy(inst, 3)
    rng = RecordingRng(1)
    mslns(inst, seeds, MslnsConfig(t_max=5.0), rng)
    first = rng.calls[0]
    counts = SolutionPool(
        two_opt_route(inst, repair(inst, r)) for r in seeds
    ).count_unique()
    c = np.array([counts[h] for h in first["candidates"]], dtype=float)
    expected = np.exp(c - c.max()) / np.exp(c - c.max()).sum()
    assert first["p"] == pytest.approx(expected, abs=1e-12)
    z = math.exp(2) + 2 * math.e
    assert math.exp(2) / z == pytest.approx(0.5761168847658291)


def test_first_round_destroys_two_requests():
    inst = gen_instance(GenSpec(n=6, seed=5), 0)
    seeds = multi_start_greedy(inst, 3)
    rng = RecordingRng(0)
    mslns(inst, seeds, MslnsConfig(t_max=5.0, k_max=4), rng)
    sizes = [c["size"] for c in rng.calls]
    assert sizes[0] == 2
    assert all(s <= 4 for s in sizes)
    # the destroy size ramps up while enough undisturbed requests remain
    for i, s in enumerate(sizes):
        assert s <= i + 2


def test_each_request_destroyed_at_most_once():
    inst = gen_instance(GenSpec(n=8, seed=3), 0)
    seeds = multi_start_greedy(inst, 4)
    rng = RecordingRng(7)
    mslns(inst, seeds, MslnsConfig(t_max=5.0), rng)
    destroyed = [int(h) for call in rng.calls for h in call["picked"]]
    assert len(destroyed) == len(set(destroyed))


def test_sharp_softmax_picks_most_frequent_request():
    inst = gen_instance(GenSpec(n=7, seed=6), 0)
    seeds = multi_start_greedy(inst, 4)
    rng = RecordingRng(2)
    mslns(inst, seeds, MslnsConfig(t_max=5.0, alpha=1e9), rng)
    first = rng.calls[0]
    counts = SolutionPool(
        two_opt_route(inst, repair(inst, r)) for r in seeds
    ).count_unique()
    top = max(counts.values())
    top_set = {h for h, c in counts.items() if c == top}
    assert set(int(h) for h in first["picked"][:1]) <= top_set


def test_mslns_dominates_seeds():
    for seed in range(6):
        inst = gen_instance(GenSpec(n=6, seed=seed), 0)
        seeds = multi_start_greedy(inst, 3)
        out = mslns(inst, seeds, MslnsConfig(t_max=1.0), np.random.default_rng(seed))
        assert out.revenue >= max(r.revenue for r in seeds) - 1e-12
        assert validate_route(inst, out.seq).feasible


def test_mslns_ablation_switches():
    inst = gen_instance(GenSpec(n=6, seed=1), 0)
    seeds = multi_start_greedy(inst, 3)
    for cfg in (
        MslnsConfig(t_max=0.5, removal="uniform"),
        MslnsConfig(t_max=0.5, schedule="fixed_k"),
        MslnsConfig(t_max=0.5, multistart=False),
    ):
        out = mslns(inst, seeds, cfg, np.random.default_rng(0))
        assert validate_route(inst, out.seq).feasible
    with pytest.raises(ValueError):
        MslnsConfig(removal="nope")
    with pytest.raises(ValueError):
        MslnsConfig(schedule="nope")


def test_mslns_rejects_bad_seeds(tiny_instance):
    with pytest.raises(ValueError, match="seed"):
        mslns(tiny_instance, [], MslnsConfig(), np.random.default_rng(0))
    bad = make_route(tiny_instance, (0, 1, 2, 3, 4, 5))
    with pytest.raises(ValueError, match="infeasible"):
        mslns(tiny_instance, [bad], MslnsConfig(), np.random.default_rng(0))
