import numpy as np
import pytest

from pdstsp.analysis import (
    MethodParams,
    basin_profile,
    best_improvement_lns,
    in_k_basin,
    is_k_attractor,
    parse_method,
    run_benchmark,
    solve_with_method,
)
from pdstsp.core import make_route, validate_route
from pdstsp.exact import exhaustive_solve
from pdstsp.generator import GenSpec, gen_instance
from pdstsp.search import greedy_search
from conftest import build_instance


def dominated_pair_instance():
    return build_instance(
        coords=[[0.5, 0.5], [0.1, 0.5], [0.9, 0.5], [0.1, 0.6],
                [0.9, 0.6], [0.5, 0.6]],
        demand=[2, 2],
        revenue=[0.2, 1.0],
        capacity=10,
        max_length=1.0,
    )


def test_single_request_route_is_1_attractor():
    inst = build_instance(
        coords=[[0.0, 0.0], [0.3, 0.0], [0.3, 0.4], [0.9, 0.0]],
        demand=[2],
        revenue=[1.0],
        capacity=5,
        max_length=5.0,
    )
    route = make_route(inst, (0, 1, 2, 3))
    assert is_k_attractor(inst, route, 1)


def test_dominated_request_route_is_not_1_attractor():
    inst = dominated_pair_instance()
    weak = make_route(inst, (0, 1, 3, 5))
    assert not is_k_attractor(inst, weak, 1)


def test_exact_optimum_is_k_attractor_for_all_k():
    for seed in range(8):
        inst = gen_instance(GenSpec(n=5, seed=seed), 0)
        opt = exhaustive_solve(inst)
        for k in range(1, max(len(opt.served), 1) + 1):
            assert is_k_attractor(inst, opt, k)


def test_attractor_enumeration_guard():
    # a dense cluster lets all 13 requests fit, tripping the subset guard
    pts = [[0.5 + 0.001 * i, 0.5] for i in range(28)]
    inst = build_instance(coords=pts, demand=[2] * 13, revenue=[1.0] * 13,
                          capacity=30, max_length=5.0)
    seq = [0] + [v for h in range(1, 14) for v in (h, h + 13)] + [27]
    route = make_route(inst, seq)
    assert validate_route(inst, route.seq).feasible
    with pytest.raises(ValueError, match="enumerate"):
        is_k_attractor(inst, route, 1)


def test_reference_is_in_its_own_basin():
    for seed in range(5):
        inst = gen_instance(GenSpec(n=4, seed=seed), 0)
        opt = exhaustive_solve(inst)
        for k in (1, 2, 3):
            assert in_k_basin(inst, opt, opt, k)


def test_basin_membership_monotone_in_k():
    for seed in range(10):
        inst = gen_instance(GenSpec(n=5, seed=seed), 0)
        opt = exhaustive_solve(inst)
        route = greedy_search(inst)
        hits = [in_k_basin(inst, route, opt, k) for k in (1, 2, 3, 4)]
        for a, b in zip(hits, hits[1:]):
            assert (not a) or b


def test_full_destroy_reaches_optimum_when_repair_rebuilds_it():
    for seed in range(8):
        inst = gen_instance(GenSpec(n=4, seed=seed), 0)
        opt = exhaustive_solve(inst)
        rebuilt = best_improvement_lns(inst, make_route(inst, (0, inst.end)), inst.n)
        if rebuilt.served == opt.served:
            assert in_k_basin(inst, greedy_search(inst), opt, inst.n) == (
                best_improvement_lns(inst, greedy_search(inst), inst.n).served
                == opt.served
            )


def test_basin_profile_shape_and_monotonicity():
    instances = [gen_instance(GenSpec(n=4, seed=s), 0) for s in range(12)]
    refs = [exhaustive_solve(inst) for inst in instances]
    methods = {
        "oracle": refs,
        "gs": [greedy_search(inst) for inst in instances],
    }
    table = basin_profile(instances, methods, refs, [1, 2, 3])
    assert table["oracle"] == {1: 1.0, 2: 1.0, 3: 1.0}
    for name in methods:
        fr = [table[name][k] for k in (1, 2, 3)]
        assert all(0.0 <= x <= 1.0 for x in fr)
        assert fr == sorted(fr)  # non-decreasing in k
    with pytest.raises(ValueError):
        basin_profile(instances, {"gs": refs[:3]}, refs, [1])


# ---------------------------------------------------------------------------
# method registry
# ---------------------------------------------------------------------------


def test_parse_method():
    assert parse_method("gs") == ("gs", None)
    assert parse_method("msgs+mslns") == ("msgs", "mslns")
    for bad in ("nope", "gs+nope", "gs+hc+2opt", "mslns"):
        with pytest.raises(ValueError):
            parse_method(bad)


def test_every_method_combination_runs():
    inst = gen_instance(GenSpec(n=4, seed=3), 0)
    params = MethodParams(M=3, t_max=0.1)
    for ctor in ("gs", "msgs", "decode", "sgbs", "exact"):
        for improver in (None, "hc", "2opt", "bilns", "lns", "sa", "mslns"):
            spec = ctor if improver is None else f"{ctor}+{improver}"
            route = solve_with_method(inst, spec, params, seed=1)
            assert validate_route(inst, route.seq).feasible, spec


def test_improvers_never_lose_revenue():
    inst = gen_instance(GenSpec(n=5, seed=9), 0)
    params = MethodParams(M=3, t_max=0.2)
    base = solve_with_method(inst, "gs", params, seed=0)
    for improver in ("hc", "bilns", "lns", "sa", "mslns"):
        improved = solve_with_method(inst, f"gs+{improver}", params, seed=0)
        assert improved.revenue >= base.revenue - 1e-12, improver


# ---------------------------------------------------------------------------
# benchmark harness
# ---------------------------------------------------------------------------


def test_single_method_gap_zero_wr_hundred():
    instances = [gen_instance(GenSpec(n=4, seed=s), 0) for s in range(5)]
    report = run_benchmark(instances, ["gs"], deterministic_time=True)
    agg = report.aggregates["gs"]
    assert agg["mean_gap_pct"] == 0.0
    assert agg["win_rate_pct"] == 100.0
    assert all(row.is_winner for row in report.rows)


def test_oracle_can_only_lower_win_rate():
    instances = [gen_instance(GenSpec(n=4, seed=s), 0) for s in range(8)]
    oracle = [exhaustive_solve(inst) for inst in instances]
    without = run_benchmark(instances, ["gs"], deterministic_time=True)
    with_oracle = run_benchmark(instances, ["gs"], oracle=oracle,
                                deterministic_time=True)
    assert (with_oracle.aggregates["gs"]["win_rate_pct"]
            <= without.aggregates["gs"]["win_rate_pct"])
    for row in with_oracle.rows:
        assert row.gap_pct >= 0.0


def test_per_instance_best_method_has_zero_gap():
    instances = [gen_instance(GenSpec(n=4, seed=s), 0) for s in range(6)]
    report = run_benchmark(instances, ["gs", "gs+hc", "exact"],
                           deterministic_time=True)
    by_inst = {}
    for row in report.rows:
        by_inst.setdefault(row.instance_id, []).append(row)
    for rows in by_inst.values():
        best = min(r.gap_pct for r in rows)
        assert best == 0.0
        assert any(r.is_winner for r in rows)


def test_benchmark_csv_deterministic():
    instances = [gen_instance(GenSpec(n=5, seed=s), 0) for s in range(4)]
    params = MethodParams(M=3, t_max=0.1)
    a = run_benchmark(instances, ["gs+2opt", "msgs+mslns"], params=params,
                      seed=11, deterministic_time=True)
    b = run_benchmark(instances, ["gs+2opt", "msgs+mslns"], params=params,
                      seed=11, deterministic_time=True)
    assert a.to_csv() == b.to_csv()
    assert a.plot_csv() == b.plot_csv()
    header = a.to_csv().splitlines()[0]
    assert header == "method,instance_id,time_s,revenue,profit,length,gap_pct,is_winner"


def test_benchmark_rejects_unknown_method():
    inst = gen_instance(GenSpec(n=3, seed=0), 0)
    with pytest.raises(ValueError):
        run_benchmark([inst], ["gs", "warp"])
