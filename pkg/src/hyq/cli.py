"""Command-line entry point ``hyq``.

Solution JSON contains no timings, so two runs with the same seed write
identical bytes; timings go to the trace and report CSV files.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import bench, cellform, linear, molconf
from .errors import HyqError, ResourceLimitError
from .partition import PartitionParams, solve_partitioned
from .qubo import QuboModel
from .samplers import BACKENDS, REMOTE_URL_ENV, SamplerConfig, get_backend
from .trace import HybridTrace


def _common(p: argparse.ArgumentParser, backend: bool = True) -> None:
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--out", help="write solution JSON here instead of stdout")
    if backend:
        p.add_argument("--backend", choices=sorted(BACKENDS), default="bruteforce")
        p.add_argument("--num-reads", type=int, default=SamplerConfig.num_reads)
        p.add_argument("--sweeps", type=int, default=SamplerConfig.sa_sweeps, help="annealing sweeps per read")
        p.add_argument("--subqubo-size", type=int, help="partition models larger than this")
        p.add_argument("--remote-url", help=f"remote sampler URL (default ${REMOTE_URL_ENV})")
        p.add_argument("--trace", help="write per-iteration trace CSV here")


def _sampler(args) -> tuple:
    kwargs = {"url": args.remote_url} if args.backend == "remote" else {}
    cfg = SamplerConfig(num_reads=args.num_reads, seed=args.seed, sa_sweeps=args.sweeps)
    return get_backend(args.backend, **kwargs), cfg


def _emit(args, data) -> None:
    text = bench.dumps(data)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _write_trace(args, trace: HybridTrace | None) -> None:
    if getattr(args, "trace", None) and trace is not None:
        trace.to_csv(args.trace)


def cmd_qubo_solve(args) -> int:
    model = QuboModel.from_json(json.loads(Path(args.model).read_text()))
    backend, cfg = _sampler(args)
    limit = args.subqubo_size or backend.max_vars
    if limit is not None and model.num_vars > limit:
        params = PartitionParams(subqubo_size=limit, backend=backend, seed=args.seed, sampler_config=cfg)
        bits, e, trace = solve_partitioned(model, params)
    else:
        t = time.perf_counter()
        bits, e = backend.sample(model, cfg).first
        trace = HybridTrace()
        trace.append(iteration=1, best_energy=e, classical_time=0.0, backend_time=time.perf_counter() - t)
    _write_trace(args, trace)
    _emit(args, {"bits": [int(b) for b in bits], "energy": e})
    return 0


def cmd_lp_solve(args) -> int:
    model = linear.load_model(args.model)
    if isinstance(model, linear.MilpModel):
        result = linear.solve_milp(model, node_limit=args.node_limit)
    else:
        result = linear.solve_lp(model)
    _emit(args, result.to_json())
    return 0 if result.status in (linear.Status.OPTIMAL, linear.Status.INFEASIBLE, linear.Status.UNBOUNDED) else 1


def _run_kind(kind: str, inst, args, **options) -> int:
    backend, cfg = _sampler(args)
    out = bench.solve_instance(kind, inst, backend, cfg, args.max_iters, args.subqubo_size, **options)
    _write_trace(args, out.trace)
    if getattr(args, "gantt", None) and out.gantt is not None:
        Path(args.gantt).write_text(out.gantt)
    if getattr(args, "routes", None):
        Path(args.routes).write_text(bench.dumps(out.solution))
    _emit(args, out.solution)
    return 0


def cmd_molconf(args) -> int:
    if args.instance:
        inst = bench.load_instance("molconf", args.instance)
    elif args.beads and args.side:
        inst = molconf.unit_instance(args.beads, args.side)
    else:
        raise SystemExit("molconf: give --instance or both --beads and --side")
    return _run_kind("molconf", inst, args)


def cmd_jobshop(args) -> int:
    return _run_kind("jobshop", bench.load_instance("jobshop", args.instance), args, start_times=args.start_times)


def cmd_cellform(args) -> int:
    return _run_kind("cellform", bench.load_instance("cellform", args.instance), args, select=args.select)


def cmd_vrp(args) -> int:
    return _run_kind("vrp", bench.load_instance("vrp", args.instance), args, delta=args.delta)


def cmd_gen(args) -> int:
    inst = bench.generate_instance(args.kind, args.sizes, args.seed)
    _emit(args, inst.to_json())
    return 0


def cmd_bench(args) -> int:
    if bool(args.instance) == bool(args.sizes):
        raise SystemExit("bench: give --instance files or --sizes, not both")
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    sampler = SamplerConfig(num_reads=args.num_reads, sa_sweeps=args.sweeps)
    runs = [dict(instance_path=p, seed=args.seed) for p in args.instance or []]
    if args.sizes:
        runs += [dict(sizes=tuple(args.sizes), seed=s) for s in (args.seeds or [args.seed])]
    if not args.report:
        sys.stdout.write(",".join(bench.REPORT_COLUMNS) + "\n")
    failed = 0
    for k, run in enumerate(runs):
        stem = out_dir / f"{args.kind}-{k:03d}-seed{run['seed']}" if out_dir else None
        cfg = bench.ExperimentConfig(
            kind=args.kind, backend=args.backend, sampler=sampler, max_iters=args.max_iters,
            subqubo_size=args.subqubo_size, report_csv=args.report, remote_url=args.remote_url,
            solution_json=f"{stem}.json" if stem else None, trace_csv=f"{stem}-trace.csv" if stem else None,
            gantt_txt=f"{stem}-gantt.txt" if stem and args.kind == "jobshop" else None, **run)
        report = bench.run_experiment(cfg)
        if not args.report:
            sys.stdout.write(report.csv_line())
        failed += report.row["status"].startswith("error")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyq", description="Hybrid QUBO / MILP decomposition solvers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("qubo-solve", help="sample a QUBO model file")
    p.add_argument("--model", required=True)
    _common(p)
    p.set_defaults(func=cmd_qubo_solve)

    p = sub.add_parser("lp-solve", help="solve an LP or MILP model file")
    p.add_argument("--model", required=True)
    p.add_argument("--node-limit", type=int, default=1_000_000)
    _common(p, backend=False)
    p.set_defaults(func=cmd_lp_solve)

    p = sub.add_parser("molconf", help="lattice molecular conformation")
    p.add_argument("--instance")
    p.add_argument("--beads", type=int)
    p.add_argument("--side", type=int)
    p.add_argument("--max-iters", type=int, default=50, help="partition solver outer iterations")
    _common(p)
    p.set_defaults(func=cmd_molconf)

    p = sub.add_parser("jobshop", help="job-shop scheduling with release and due dates")
    p.add_argument("--instance", required=True)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--gantt", help="write a text Gantt chart here")
    p.add_argument("--start-times", choices=("sequence", "vertex"), default="sequence")
    _common(p)
    p.set_defaults(func=cmd_jobshop)

    p = sub.add_parser("cellform", help="manufacturing cell formation")
    p.add_argument("--instance", required=True)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--select", choices=("bound", "energy"), default="bound")
    _common(p)
    p.set_defaults(func=cmd_cellform)

    p = sub.add_parser("vrp", help="vehicle routing with a cost/time ratio objective")
    p.add_argument("--instance", required=True)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--delta", type=float, default=1e-6, help="ratio convergence tolerance")
    p.add_argument("--routes", help="write the route plan JSON here")
    _common(p)
    p.set_defaults(func=cmd_vrp)

    p = sub.add_parser("gen", help="generate a random instance")
    p.add_argument("kind", choices=bench.KINDS)
    p.add_argument("--sizes", type=int, nargs="+", required=True)
    _common(p, backend=False)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="run experiments and write a CSV report")
    p.add_argument("--kind", choices=bench.KINDS, required=True)
    p.add_argument("--instance", nargs="+", help="instance files")
    p.add_argument("--sizes", type=int, nargs="+", help="generate instances of this size")
    p.add_argument("--seeds", type=int, nargs="+", help="one generated instance per seed")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--report", help="append report rows to this CSV (default stdout)")
    p.add_argument("--out-dir", help="write per-run solution, trace and Gantt files here")
    _common(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ResourceLimitError as exc:
        print(f"hyq: {exc}", file=sys.stderr)
        return 3
    except (HyqError, ValueError, OSError, cellform.DualInfeasible) as exc:
        print(f"hyq: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
