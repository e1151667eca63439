"""Instance generators, experiment runner and CSV run reports.

Random schemes: costs and times are uniform integers in [1, 10]; job release
dates are uniform in [0, horizon / 2] with due date = release + slack *
shortest processing time; conformation instances use unit LJ parameters.
"""
from __future__ import annotations

import csv
import io
import json
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import cellform, jobshop, molconf, vrp
from .errors import HyqError, ResourceLimitError
from .jobshop import render_gantt
from .partition import PartitionParams, solve_partitioned
from .samplers import SamplerConfig, get_backend
from .trace import HybridTrace

KINDS = ("jobshop", "molconf", "cellform", "vrp")
REPORT_COLUMNS = ["kind", "instance", "sizes", "seed", "backend", "binary_vars", "continuous_vars", "iterations",
                  "classical_time", "backend_time", "total_time", "objective", "status"]
MAX_WIDENINGS = 10


class GenerationError(HyqError):
    pass


def dumps(data) -> str:
    """Canonical JSON text used for every file the harness writes."""
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def _jobshop(jobs: int, machines: int, rng: np.random.Generator) -> jobshop.JobShopInstance:
    C = rng.integers(1, 11, (jobs, machines))
    P = rng.integers(1, 11, (jobs, machines))
    min_p = P.min(axis=1)
    horizon = int(min_p.sum())
    R = rng.integers(0, horizon // 2 + 1, jobs)
    slack = rng.uniform(1.0, 3.0, jobs)
    U = int(P.max(axis=1).sum())
    for _ in range(MAX_WIDENINGS):
        D = R + np.ceil(slack * min_p)
        # keep every window inside U of the earliest release so the big-U disjunction stays valid
        D = np.maximum(R + min_p, np.minimum(D, R.min() + U))
        inst = jobshop.JobShopInstance(C, P, R, D)
        if jobshop.solve_relaxed(inst)[0] is not None:
            return inst
        slack = slack * 1.5
    raise GenerationError("job windows still infeasible after widening")


def _cellform(parts: int, machines: int, cells: int, rng: np.random.Generator) -> cellform.CellFormationInstance:
    a = (rng.random((parts, machines)) < 0.4).astype(float)
    for i in range(parts):
        if not a[i].any():
            a[i, rng.integers(machines)] = 1.0
    return cellform.CellFormationInstance(rng.integers(1, 11, parts), rng.integers(1, 11, parts),
                                          rng.integers(1, 11, (parts, machines)),
                                          rng.integers(1, 11, (parts, machines)), a, cells)


def _vrp(customers: int, vehicles: int, rng: np.random.Generator) -> vrp.VrpInstance:
    V = customers + 1
    C = rng.integers(1, 11, (V, V)).astype(float)
    W = rng.integers(1, 11, (V, V)).astype(float)
    np.fill_diagonal(C, 0.0)
    np.fill_diagonal(W, 0.0)
    return vrp.VrpInstance(C, W, vehicles)


def generate_instance(kind: str, sizes, seed: int = 0):
    """Deterministic random instance.

    sizes: jobshop (jobs, machines); molconf (beads, side); cellform
    (parts, machines, cells); vrp (customers, vehicles).
    """
    sizes = tuple(int(s) for s in sizes)
    rng = np.random.default_rng(seed)
    expected = {"jobshop": 2, "molconf": 2, "cellform": 3, "vrp": 2}
    if kind not in expected:
        raise ValueError(f"unknown kind {kind!r}; choose from {KINDS}")
    if len(sizes) != expected[kind] or any(s < 1 for s in sizes):
        raise ValueError(f"{kind} needs {expected[kind]} positive sizes, got {sizes}")
    if kind == "jobshop":
        return _jobshop(*sizes, rng)
    if kind == "molconf":
        return molconf.unit_instance(*sizes)
    if kind == "cellform":
        return _cellform(*sizes, rng)
    return _vrp(*sizes, rng)


def write_instance(inst, path) -> None:
    Path(path).write_text(dumps(inst.to_json()))


def load_instance(kind: str, path):
    data = json.loads(Path(path).read_text())
    cls = {"jobshop": jobshop.JobShopInstance, "molconf": molconf.ConformationInstance,
           "cellform": cellform.CellFormationInstance, "vrp": vrp.VrpInstance}[kind]
    return cls.from_json(data)


@dataclass
class ExperimentConfig:
    kind: str
    instance_path: str | None = None
    sizes: tuple[int, ...] | None = None
    seed: int = 0
    backend: str = "bruteforce"
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    max_iters: int = 100
    subqubo_size: int | None = None
    report_csv: str | None = None
    solution_json: str | None = None
    trace_csv: str | None = None
    gantt_txt: str | None = None
    remote_url: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if (self.instance_path is None) == (self.sizes is None):
            raise ValueError("give exactly one of instance_path or sizes")

    def instance(self):
        if self.instance_path is not None:
            return load_instance(self.kind, self.instance_path)
        return generate_instance(self.kind, self.sizes, self.seed)

    def make_backend(self):
        if self.backend == "remote":
            return get_backend("remote", url=self.remote_url)
        return get_backend(self.backend)


@dataclass
class RunReport:
    row: dict
    solution: dict | None = None
    trace: object | None = None
    gantt: str | None = None

    def csv_line(self) -> str:
        buf = io.StringIO()
        csv.DictWriter(buf, REPORT_COLUMNS, lineterminator="\n").writerow(self.row)
        return buf.getvalue()


def _sum(trace, name):
    return float(sum(trace.column(name))) if trace is not None and len(trace) else 0.0


@dataclass
class SolveOutcome:
    solution: dict
    trace: HybridTrace
    objective: float | None
    status: str
    counts: dict
    gantt: str | None = None


def _solve_molconf(inst, backend, cfg, subqubo_size, max_iters):
    q, _ = molconf.build_conformation_qubo(inst)
    if backend.max_vars is None or q.num_vars <= backend.max_vars:
        t = time.perf_counter()
        bits, e = backend.sample(q, cfg).first
        trace = HybridTrace()
        trace.append(iteration=1, best_energy=e, classical_time=0.0, backend_time=time.perf_counter() - t)
    else:
        params = PartitionParams(subqubo_size=subqubo_size or backend.max_vars, max_outer_iters=max_iters,
                                 backend=backend, seed=cfg.seed, sampler_config=cfg)
        bits, _, trace = solve_partitioned(q, params)
    report = molconf.decode_conformation(inst, bits)
    return SolveOutcome(report.to_json(), trace, report.objective, "feasible" if report.feasible else "infeasible",
                        {"binary": q.num_vars, "continuous": 0})


def solve_instance(kind: str, inst, backend, cfg: SamplerConfig, max_iters: int = 100,
                   subqubo_size: int | None = None, **options) -> SolveOutcome:
    """Run the hybrid solver matching ``kind`` on ``inst``.

    ``options`` go to the solver unchanged (``start_times`` for jobshop,
    ``select`` for cellform, ``delta`` for vrp).
    """
    if kind == "molconf":
        return _solve_molconf(inst, backend, cfg, subqubo_size, max_iters)
    if kind == "jobshop":
        sched, trace = jobshop.solve_jobshop_hybrid(inst, backend, cfg, max_iters=max_iters,
                                                    subqubo_size=subqubo_size, **options)
        dims = jobshop.full_milp_dimensions(inst)
        counts = {"binary": dims["binary"], "continuous": dims["continuous"]}
        if sched is None:
            return SolveOutcome({"status": "infeasible"}, trace, None, "infeasible", counts)
        return SolveOutcome(sched.to_json(), trace, sched.objective, "optimal", counts, render_gantt(sched))
    if kind == "cellform":
        sol, trace = cellform.solve_cellform_hybrid(inst, backend, cfg, max_iters=max_iters,
                                                    subqubo_size=subqubo_size, **options)
        return SolveOutcome(sol.to_json(), trace, sol.objective, trace.meta["status"], inst.dimensions())
    if kind == "vrp":
        plan, trace = vrp.solve_vrp_parametric(inst, backend, cfg, max_iters=max_iters,
                                               subqubo_size=subqubo_size, **options)
        counts = {"binary": inst.num_vars, "continuous": 0}
        if plan is None:
            return SolveOutcome({"status": "infeasible"}, trace, None, "infeasible", counts)
        return SolveOutcome(plan.to_json(), trace, plan.ratio, "optimal", counts)
    raise ValueError(f"unknown kind {kind!r}")


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    """Solve one configured instance, write the requested artifacts, return the report row.

    Failures are recorded in the ``status`` column rather than raised, so a
    batch never silently drops a run.
    """
    row = {c: "" for c in REPORT_COLUMNS}
    row.update(kind=cfg.kind, instance=cfg.instance_path or "generated",
               sizes="x".join(map(str, cfg.sizes)) if cfg.sizes else "", seed=cfg.seed, backend=cfg.backend)
    scfg = replace(cfg.sampler, seed=cfg.seed)
    t0 = time.perf_counter()
    report = RunReport(row)
    try:
        out = solve_instance(cfg.kind, cfg.instance(), cfg.make_backend(), scfg, cfg.max_iters, cfg.subqubo_size)
        row.update(binary_vars=out.counts["binary"], continuous_vars=out.counts["continuous"],
                   iterations=len(out.trace), classical_time=_sum(out.trace, "classical_time"),
                   backend_time=_sum(out.trace, "backend_time"),
                   objective="" if out.objective is None else out.objective, status=out.status)
        report = RunReport(row, out.solution, out.trace, out.gantt)
    except (HyqError, ValueError, KeyError, OSError, cellform.DualInfeasible) as exc:
        if isinstance(exc, ResourceLimitError):
            report.trace = exc.trace
        row["status"] = f"error: {type(exc).__name__}: {exc}"
    row["total_time"] = time.perf_counter() - t0
    _write_artifacts(cfg, report)
    return report


def _write_artifacts(cfg: ExperimentConfig, report: RunReport) -> None:
    if cfg.report_csv:
        new = not os.path.exists(cfg.report_csv) or os.path.getsize(cfg.report_csv) == 0
        with open(cfg.report_csv, "a", newline="") as fh:
            w = csv.DictWriter(fh, REPORT_COLUMNS, lineterminator="\n")
            if new:
                w.writeheader()
            w.writerow(report.row)
    if cfg.solution_json and report.solution is not None:
        Path(cfg.solution_json).write_text(dumps(report.solution))
    if cfg.trace_csv and report.trace is not None:
        report.trace.to_csv(cfg.trace_csv)
    if cfg.gantt_txt and report.gantt is not None:
        Path(cfg.gantt_txt).write_text(report.gantt)


def count_formulas(kind: str, sizes) -> dict:
    """Variable counts each builder must reproduce."""
    s = tuple(int(v) for v in sizes)
    if kind == "molconf":
        return {"binary": s[0] * s[1] ** 3, "continuous": 0}
    if kind == "jobshop":
        n, m = s
        return {"binary": n * (n - 1) + n * m, "continuous": n}
    if kind == "cellform":
        p, m, r = s
        return {"binary": m * r, "continuous": p * r}
    if kind == "vrp":
        c, h = s
        return {"binary": h * (c + 1) * (c + 1), "continuous": 0}
    raise ValueError(kind)
