"""Command-line entry point: gen / exact / milp / solve / bench / basin."""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional

from .analysis import (
    BenchReport,
    MethodParams,
    basin_profile,
    parse_method,
    run_benchmark,
    solve_with_method,
)
from .core import Instance, instance_from_json
from .exact import DEFAULT_MAX_N, exhaustive_solve, export_milp
from .generator import GenSpec, gen_batch
from .search import ExternalScorer

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _default_seed() -> int:
    return int(os.environ.get("PDSTSP_SEED", "0"))


def _read_instances(path: str) -> List[Instance]:
    instances = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                instances.append(instance_from_json(line))
    return instances


def _write_lines(path: Optional[str], lines: List[str]):
    text = "\n".join(lines) + ("\n" if lines else "")
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _params_from_args(args) -> MethodParams:
    return MethodParams(
        M=args.M,
        beta=args.beta,
        alpha=args.alpha,
        k_max=args.k_max,
        t_max=args.t_max,
        rho=args.rho,
        mask_mode=args.mask_mode,
        seeds_file=args.seeds_file,
    )


def _scorer_from_args(args) -> Optional[ExternalScorer]:
    if args.seeds_file:
        return ExternalScorer.from_file(args.seeds_file)
    return None


_SOLVE_CTX = {}


def _solve_worker(idx: int):
    ctx = _SOLVE_CTX
    route = solve_with_method(
        ctx["instances"][idx], ctx["method"], ctx["params"],
        seed=ctx["seed"] * 1000003 + idx, instance_id=str(idx),
        scorer=ctx["scorer"],
    )
    return idx, route.to_json()


def _cmd_gen(args) -> int:
    spec = GenSpec(n=args.n, revenue_setting=args.revenue,
                   seed=args.seed, count=args.count)
    _write_lines(args.out, [inst.to_json() for inst in gen_batch(spec)])
    return EXIT_OK


def _cmd_exact(args) -> int:
    instances = _read_instances(args.infile)
    lines = [exhaustive_solve(inst, DEFAULT_MAX_N).to_json() for inst in instances]
    _write_lines(args.out, lines)
    return EXIT_OK


def _cmd_milp(args) -> int:
    instances = _read_instances(args.infile)
    texts = [export_milp(inst)[1] for inst in instances]
    if args.out is None:
        sys.stdout.write("".join(texts))
    elif len(texts) == 1:
        with open(args.out, "w") as fh:
            fh.write(texts[0])
    else:
        base, ext = os.path.splitext(args.out)
        for i, text in enumerate(texts):
            with open(f"{base}_{i}{ext or '.lp'}", "w") as fh:
                fh.write(text)
    return EXIT_OK


def _cmd_solve(args) -> int:
    parse_method(args.method)
    instances = _read_instances(args.infile)
    _SOLVE_CTX.update(
        instances=instances,
        method=args.method,
        params=_params_from_args(args),
        seed=args.seed,
        scorer=_scorer_from_args(args),
    )
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_solve_worker, range(len(instances))))
    else:
        results = [_solve_worker(i) for i in range(len(instances))]
    results.sort()
    _write_lines(args.out, [line for _, line in results])
    return EXIT_OK


def _cmd_bench(args) -> int:
    methods = [m.strip() for m in args.method.split(",") if m.strip()]
    if not methods:
        raise ValueError("bench needs at least one method")
    for m in methods:
        parse_method(m)
    instances = _read_instances(args.infile)
    report = run_benchmark(
        instances,
        methods,
        params=_params_from_args(args),
        seed=args.seed,
        scorer=_scorer_from_args(args),
        deterministic_time=not args.measured_time,
    )
    _write_lines(args.out, report.to_csv().splitlines())
    if args.plot:
        _write_lines(args.plot, report.plot_csv().splitlines())
    return EXIT_OK


def _cmd_basin(args) -> int:
    methods = [m.strip() for m in args.method.split(",") if m.strip()]
    for m in methods:
        parse_method(m)
    instances = _read_instances(args.infile)
    references = [exhaustive_solve(inst, DEFAULT_MAX_N) for inst in instances]
    params = _params_from_args(args)
    scorer = _scorer_from_args(args)
    method_routes = {
        m: [
            solve_with_method(inst, m, params, seed=args.seed * 1000003 + i,
                              instance_id=str(i), scorer=scorer)
            for i, inst in enumerate(instances)
        ]
        for m in methods
    }
    k_values = list(range(1, (args.k_max or 3) + 1))
    table = basin_profile(instances, method_routes, references, k_values)
    lines = ["method,k,fraction"]
    for m in methods:
        for k in k_values:
            lines.append(f"{m},{k},{table[m][k]:.6f}")
    _write_lines(args.out, lines)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdstsp")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_in=True):
        if needs_in:
            p.add_argument("--in", dest="infile", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=_default_seed())

    p_gen = sub.add_parser("gen", help="generate random instances as JSONL")
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--count", type=int, default=1)
    p_gen.add_argument("--revenue", default="distance",
                       choices=["distance", "ton_distance", "uniform", "constant"])
    common(p_gen, needs_in=False)
    p_gen.set_defaults(func=_cmd_gen)

    p_exact = sub.add_parser("exact", help="solve small instances exactly")
    common(p_exact)
    p_exact.set_defaults(func=_cmd_exact)

    p_milp = sub.add_parser("milp", help="export instances as LP files")
    common(p_milp)
    p_milp.set_defaults(func=_cmd_milp)

    def method_opts(p):
        p.add_argument("--method", required=True,
                       help="constructor[+improver], e.g. msgs+mslns")
        p.add_argument("--M", type=int, default=5)
        p.add_argument("--beta", type=int, default=3)
        p.add_argument("--alpha", type=float, default=1.0)
        p.add_argument("--k-max", dest="k_max", type=int, default=None)
        p.add_argument("--t-max", dest="t_max", type=float, default=0.5)
        p.add_argument("--rho", type=float, default=10.0)
        p.add_argument("--mask-mode", dest="mask_mode", default="inference_2opt",
                       choices=["inference_2opt", "train_lb"])
        p.add_argument("--seeds-file", dest="seeds_file", default=None)
        p.add_argument("--jobs", type=int, default=1)

    p_solve = sub.add_parser("solve", help="run a heuristic pipeline")
    common(p_solve)
    method_opts(p_solve)
    p_solve.set_defaults(func=_cmd_solve)

    p_bench = sub.add_parser("bench", help="compare methods, emit CSV")
    common(p_bench)
    method_opts(p_bench)
    p_bench.add_argument("--plot", default=None,
                         help="also write revenue-vs-time scatter CSV here")
    p_bench.add_argument("--measured-time", action="store_true",
                         help="record wall time instead of the configured budget")
    p_bench.set_defaults(func=_cmd_bench)

    p_basin = sub.add_parser("basin", help="basin-profile methods vs the exact optimum")
    common(p_basin)
    method_opts(p_basin)
    p_basin.set_defaults(func=_cmd_basin)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ValueError as exc:
        # bad method strings / malformed inputs are config errors
        msg = str(exc)
        sys.stderr.write(f"error: {msg}\n")
        if "unknown" in msg or "bad method" in msg:
            return EXIT_CONFIG
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
