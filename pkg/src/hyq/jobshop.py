"""Single-stage parallel-machine scheduling with release and due dates.

Three models share one instance type:

* the full MILP (assignment, start times, sequencing with big-U
  disjunctions and logic cuts), used as an exact oracle;
* the relaxed assignment MILP (timing windows plus assignment, no
  sequencing) with accumulated integer cuts;
* a sequencing QUBO over ordering bits for jobs sharing a machine, with
  start times held fixed.

``solve_jobshop_hybrid`` alternates the last two until every machine's
sequence checks out.
"""
from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ResourceLimitError
from .linear import MilpModel, Status, solve_milp
from .partition import sample_with_capacity
from .qubo import QuboModel
from .samplers import BruteForceSampler, Sampler, SamplerConfig
from .trace import HybridTrace

TIME_TOL = 1e-9
EXACT_RETIME_MAX = 8


@dataclass(frozen=True)
class JobShopInstance:
    C: np.ndarray
    P: np.ndarray
    R: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        P = np.asarray(self.P, dtype=float)
        R = np.asarray(self.R, dtype=float)
        D = np.asarray(self.D, dtype=float)
        if C.ndim != 2 or C.shape != P.shape:
            raise ValueError("C and P must be |I| x |M| matrices of equal shape")
        if R.shape != (C.shape[0],) or D.shape != (C.shape[0],):
            raise ValueError("R and D need one entry per job")
        if np.any(P <= 0):
            raise ValueError("processing times must be positive")
        if np.any(R > D):
            raise ValueError("release date after due date")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "D", D)

    @property
    def num_jobs(self) -> int:
        return self.C.shape[0]

    @property
    def num_machines(self) -> int:
        return self.C.shape[1]

    def to_json(self) -> dict:
        return {"jobs": self.num_jobs, "machines": self.num_machines, "C": self.C.tolist(),
                "P": self.P.tolist(), "R": self.R.tolist(), "D": self.D.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "JobShopInstance":
        inst = cls(data["C"], data["P"], data["R"], data["D"])
        if inst.num_jobs != data.get("jobs", inst.num_jobs) or inst.num_machines != data.get("machines",
                                                                                               inst.num_machines):
            raise ValueError("declared job/machine counts do not match the matrices")
        return inst


def big_u(inst: JobShopInstance) -> float:
    """Sum over jobs of the longest processing time."""
    return float(inst.P.max(axis=1).sum())


def big_u_is_valid(inst: JobShopInstance) -> bool:
    """True when U exceeds every start-time gap the windows allow, so y_ij = 0 never binds."""
    if inst.num_jobs < 2:
        return True
    return float(inst.D.max() - max(inst.R.min(), 0.0)) <= big_u(inst)


@dataclass(frozen=True)
class IntegerCut:
    """Forbid assigning all of ``jobs`` to ``machine`` together."""

    machine: int
    jobs: tuple[int, ...]

    def __post_init__(self):
        if len(self.jobs) < 2:
            raise ValueError("an integer cut needs at least two jobs")

    def violated_by(self, machine_of) -> bool:
        return all(machine_of[i] == self.machine for i in self.jobs)


@dataclass
class AssignmentSolution:
    machine: list[int]
    start: list[float]

    def x(self, num_machines: int) -> np.ndarray:
        x = np.zeros((len(self.machine), num_machines), dtype=np.int8)
        x[np.arange(len(self.machine)), self.machine] = 1
        return x

    def jobs_on(self, m: int) -> list[int]:
        return [i for i, mm in enumerate(self.machine) if mm == m]


@dataclass
class Schedule:
    assignment: AssignmentSolution
    y: dict[tuple[int, int], int]
    objective: float
    durations: list[float]
    num_machines: int

    def to_json(self) -> dict:
        return {"objective": self.objective, "machine": self.assignment.machine,
                "start": self.assignment.start,
                "order": [[i, j] for (i, j), v in sorted(self.y.items()) if v]}


def full_milp_dimensions(inst: JobShopInstance, logic_cuts: bool = True) -> dict:
    """Variable and row counts of :func:`build_full_milp` without building it."""
    n, m = inst.num_jobs, inst.num_machines
    pairs = n * (n - 1) // 2
    rows = n + n + pairs * m + n * (n - 1)
    if logic_cuts:
        rows += pairs + pairs * m * (m - 1)
    return {"continuous": n, "binary": n * m + n * (n - 1), "constraints": rows}


def _y_index(n: int):
    """Column offsets of y_ij for ordered i != j, after ts and x."""
    idx = {}
    for i in range(n):
        for j in range(n):
            if i != j:
                idx[(i, j)] = len(idx)
    return idx


def build_full_milp(inst: JobShopInstance, logic_cuts: bool = True) -> MilpModel:
    """Columns: ts_i, then x_im (job-major), then y_ij for ordered i != j (row-major)."""
    n, nm = inst.num_jobs, inst.num_machines
    U = big_u(inst)
    mdl = MilpModel(sense="min")
    ts = [mdl.add_variable(f"ts[{i}]", lb=max(inst.R[i], 0.0)) for i in range(n)]
    x = [[mdl.add_binary(f"x[{i},{m}]", cost=inst.C[i, m]) for m in range(nm)] for i in range(n)]
    y = {k: mdl.add_binary(f"y[{k[0]},{k[1]}]") for k in _y_index(n)}
    for i in range(n):
        row = {ts[i]: 1.0}
        row.update({x[i][m]: inst.P[i, m] for m in range(nm)})
        mdl.add_constraint(row, "<=", inst.D[i])
    for i in range(n):
        mdl.add_constraint({x[i][m]: 1.0 for m in range(nm)}, "=", 1.0)
    for i in range(n):
        for j in range(i + 1, n):
            for m in range(nm):
                mdl.add_constraint({y[i, j]: 1.0, y[j, i]: 1.0, x[i][m]: -1.0, x[j][m]: -1.0}, ">=", -1.0)
    for (i, j), yij in y.items():
        row = {ts[j]: 1.0, ts[i]: -1.0, yij: -U}
        for m in range(nm):
            row[x[i][m]] = -inst.P[i, m]
        mdl.add_constraint(row, ">=", -U)
    if logic_cuts:
        for i in range(n):
            for j in range(i + 1, n):
                mdl.add_constraint({y[i, j]: 1.0, y[j, i]: 1.0}, "<=", 1.0)
        for i in range(n):
            for j in range(i + 1, n):
                for m in range(nm):
                    for mm in range(nm):
                        if m != mm:
                            mdl.add_constraint({y[i, j]: 1.0, y[j, i]: 1.0, x[i][m]: 1.0, x[j][mm]: 1.0},
                                               "<=", 2.0)
    return mdl


def decode_full_milp(inst: JobShopInstance, values) -> Schedule:
    n, nm = inst.num_jobs, inst.num_machines
    v = np.asarray(values)
    xs = v[n:n + n * nm].reshape(n, nm)
    yv = v[n + n * nm:]
    y = {k: int(round(yv[c])) for k, c in _y_index(n).items()}
    machine = [int(np.argmax(xs[i])) for i in range(n)]
    sol = AssignmentSolution(machine, [float(t) for t in v[:n]])
    return Schedule(sol, {(i, j): b for (i, j), b in y.items() if machine[i] == machine[j]},
                    float(sum(inst.C[i, machine[i]] for i in range(n))), _durations(inst, sol), nm)


def _durations(inst: JobShopInstance, sol: AssignmentSolution) -> list[float]:
    return [float(inst.P[i, m]) for i, m in enumerate(sol.machine)]


def build_relaxed_milp(inst: JobShopInstance, cuts=(), jobs=None) -> MilpModel:
    """Timing windows, assignment and integer cuts over ``jobs`` (default all).

    Columns: ts for each listed job, then x_im job-major.  Cuts that mention
    jobs outside ``jobs`` are skipped.
    """
    jobs = list(range(inst.num_jobs)) if jobs is None else list(jobs)
    nm = inst.num_machines
    mdl = MilpModel(sense="min")
    ts = {i: mdl.add_variable(f"ts[{i}]", lb=max(inst.R[i], 0.0)) for i in jobs}
    x = {i: [mdl.add_binary(f"x[{i},{m}]", cost=inst.C[i, m]) for m in range(nm)] for i in jobs}
    for i in jobs:
        row = {ts[i]: 1.0}
        row.update({x[i][m]: inst.P[i, m] for m in range(nm)})
        mdl.add_constraint(row, "<=", inst.D[i])
    for i in jobs:
        mdl.add_constraint({x[i][m]: 1.0 for m in range(nm)}, "=", 1.0)
    members = set(jobs)
    for cut in cuts:
        if set(cut.jobs) <= members:
            mdl.add_constraint({x[i][cut.machine]: 1.0 for i in cut.jobs}, "<=", len(cut.jobs) - 1)
    return mdl


def _components(n: int, cuts) -> list[list[int]]:
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for cut in cuts:
        root = find(cut.jobs[0])
        for j in cut.jobs[1:]:
            parent[find(j)] = root
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values())


def solve_relaxed(inst: JobShopInstance, cuts=()):
    """Solve the relaxed MILP one cut-connected group of jobs at a time.

    Returns (AssignmentSolution, objective), or (None, None) when infeasible.
    """
    machine = [0] * inst.num_jobs
    start = [0.0] * inst.num_jobs
    total = 0.0
    nm = inst.num_machines
    for group in _components(inst.num_jobs, cuts):
        res = solve_milp(build_relaxed_milp(inst, cuts, group))
        if res.status == Status.INFEASIBLE:
            return None, None
        if res.status != Status.OPTIMAL:
            raise RuntimeError(f"relaxed MILP returned {res.status.value}")
        k = len(group)
        xs = res.x[k:].reshape(k, nm)
        for a, i in enumerate(group):
            machine[i] = int(np.argmax(xs[a]))
            start[i] = float(res.x[a])
        total += res.objective
    return AssignmentSolution(machine, start), float(total)


def _sequence_starts(inst: JobShopInstance, jobs, order_of_jobs):
    """Earliest starts along a fixed order, or None if a due date is missed."""
    t = -math.inf
    out = {}
    for i, m_p in order_of_jobs:
        s = max(inst.R[i], 0.0, t)
        if s + m_p > inst.D[i] + TIME_TOL:
            return None
        out[i] = s
        t = s + m_p
    return out


def retime_machine(inst: JobShopInstance, jobs, m: int):
    """Start times within the windows that let ``jobs`` run back to back on ``m``.

    Exhaustive over orders for up to EXACT_RETIME_MAX jobs, otherwise earliest
    due date first.  Returns None when no order was found.
    """
    jobs = list(jobs)
    if len(jobs) <= 1:
        return None
    if len(jobs) <= EXACT_RETIME_MAX:
        orders = itertools.permutations(jobs)
    else:
        orders = [sorted(jobs, key=lambda i: (inst.D[i], inst.R[i], i))]
    for order in orders:
        st = _sequence_starts(inst, jobs, [(i, inst.P[i, m]) for i in order])
        if st is not None:
            return st
    return None


def retime(inst: JobShopInstance, sol: AssignmentSolution) -> AssignmentSolution:
    """Move start times inside their windows so each machine's jobs can be sequenced.

    Start times carry no cost in the relaxed MILP, so the result is another
    optimal solution of it with the same assignment.  Machines with no
    feasible order keep their original starts.
    """
    start = list(sol.start)
    for m in sorted(set(sol.machine)):
        st = retime_machine(inst, sol.jobs_on(m), m)
        if st:
            for i, s in st.items():
                start[i] = float(s)
    return AssignmentSolution(list(sol.machine), start)


def same_machine_pairs(sol: AssignmentSolution) -> list[tuple[int, int]]:
    pairs = []
    for m in sorted(set(sol.machine)):
        jobs = sol.jobs_on(m)
        pairs += [(a, b) for ai, a in enumerate(jobs) for b in jobs[ai + 1:]]
    return pairs


def build_sequencing_qubo(inst: JobShopInstance, sol: AssignmentSolution):
    """Ordering QUBO at fixed starts.

    Per unordered same-machine pair (i, j): 1 - y_ij - y_ji + 2 y_ij y_ji plus
    y_ij (U (ts_i - ts_j) + P_i) and y_ji (U (ts_j - ts_i) + P_j), where P_i
    is the processing time on the assigned machine.  Returns (model, keys)
    with keys[v] = (i, j) for variable v meaning "j runs after i".
    """
    U = big_u(inst)
    keys: list[tuple[int, int]] = []
    lin: dict[int, float] = {}
    quad: dict[tuple[int, int], float] = {}
    offset = 0.0
    for i, j in same_machine_pairs(sol):
        a, b = len(keys), len(keys) + 1
        keys += [(i, j), (j, i)]
        pi = inst.P[i, sol.machine[i]]
        pj = inst.P[j, sol.machine[j]]
        offset += 1.0
        lin[a] = -1.0 + U * (sol.start[i] - sol.start[j]) + pi
        lin[b] = -1.0 + U * (sol.start[j] - sol.start[i]) + pj
        quad[(a, b)] = 2.0
    labels = {v: f"y[{i},{j}]" for v, (i, j) in enumerate(keys)}
    return QuboModel.from_terms(len(keys), lin, quad, offset, labels), keys


@dataclass
class ScheduleCheck:
    failing: list[int]
    reasons: dict[int, list[str]] = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return not self.failing


def check_schedule(inst: JobShopInstance, sol: AssignmentSolution, y: dict) -> ScheduleCheck:
    """Classical check of orderings at fixed starts; lists machines that fail."""
    reasons: dict[int, list[str]] = {}
    for i, j in same_machine_pairs(sol):
        m = sol.machine[i]
        yij, yji = int(y.get((i, j), 0)), int(y.get((j, i), 0))
        if yij + yji != 1:
            reasons.setdefault(m, []).append(f"jobs {i},{j}: {yij + yji} orderings chosen")
            continue
        a, b = (i, j) if yij else (j, i)
        if sol.start[b] < sol.start[a] + inst.P[a, m] - TIME_TOL:
            reasons.setdefault(m, []).append(f"job {b} starts before job {a} finishes")
    for i, m in enumerate(sol.machine):
        if sol.start[i] < max(inst.R[i], 0.0) - TIME_TOL or sol.start[i] + inst.P[i, m] > inst.D[i] + TIME_TOL:
            reasons.setdefault(m, []).append(f"job {i} outside its window")
    return ScheduleCheck(sorted(reasons), reasons)


def solve_jobshop_hybrid(inst: JobShopInstance, backend: Sampler | None = None,
                         config: SamplerConfig | None = None, max_iters: int = 1000,
                         start_times: str = "sequence", subqubo_size: int | None = None):
    """Alternate the relaxed MILP and the sequencing QUBO until all machines check out.

    ``start_times="sequence"`` picks, among the relaxed MILP's optimal
    solutions, start times that admit a sequence on every machine where one
    exists; ``"vertex"`` keeps the simplex vertex as-is.

    Returns (Schedule or None, HybridTrace); None means the relaxed MILP went
    infeasible, so no schedule exists under the accumulated cuts.
    """
    if start_times not in ("sequence", "vertex"):
        raise ValueError("start_times must be 'sequence' or 'vertex'")
    backend = backend or BruteForceSampler()
    cfg = config or SamplerConfig()
    cuts: list[IntegerCut] = []
    trace = HybridTrace(meta={"jobs": inst.num_jobs, "machines": inst.num_machines, "start_times": start_times})
    t0 = time.perf_counter()
    for it in range(1, max_iters + 1):
        tc = time.perf_counter()
        sol, obj = solve_relaxed(inst, cuts)
        classical = time.perf_counter() - tc
        if sol is None:
            trace.append(iteration=it, relaxed_objective=None, qubo_vars=0, failing_machines=0,
                         cuts=len(cuts), classical_time=classical, backend_time=0.0,
                         elapsed=time.perf_counter() - t0)
            trace.meta.update(status="infeasible", cuts=[[c.machine, list(c.jobs)] for c in cuts])
            return None, trace
        tc = time.perf_counter()
        if start_times == "sequence":
            sol = retime(inst, sol)
        q, keys = build_sequencing_qubo(inst, sol)
        classical += time.perf_counter() - tc
        tb = time.perf_counter()
        if q.num_vars:
            bits, _ = sample_with_capacity(q, backend, cfg.derive(it), subqubo_size)
        else:
            bits = np.zeros(0, dtype=np.int8)
        backend_time = time.perf_counter() - tb
        y = {k: int(b) for k, b in zip(keys, bits)}
        tc = time.perf_counter()
        report = check_schedule(inst, sol, y)
        for m in report.failing:
            cuts.append(IntegerCut(m, tuple(sol.jobs_on(m))))
        classical += time.perf_counter() - tc
        trace.append(iteration=it, relaxed_objective=obj, qubo_vars=q.num_vars,
                     failing_machines=len(report.failing), cuts=len(cuts), classical_time=classical,
                     backend_time=backend_time, elapsed=time.perf_counter() - t0)
        if report.feasible:
            trace.meta.update(status="optimal", cuts=[[c.machine, list(c.jobs)] for c in cuts])
            return Schedule(sol, y, obj, _durations(inst, sol), inst.num_machines), trace
    trace.meta.update(status="iteration_limit")
    raise ResourceLimitError(f"no feasible schedule after {max_iters} iterations", trace=trace)


def render_gantt(schedule: Schedule) -> str:
    """One line per machine: id, then [Jjob:start–end] in start order (1-based ids)."""
    sol = schedule.assignment
    lines = []
    for m in range(schedule.num_machines):
        jobs = sorted(sol.jobs_on(m), key=lambda i: (sol.start[i], i))
        cells = [f"[J{i + 1}:{_fmt(sol.start[i])}–{_fmt(sol.start[i] + schedule.durations[i])}]"
                 for i in jobs]
        lines.append(" ".join([f"M{m + 1}"] + cells))
    return "\n".join(lines) + "\n"


def _fmt(v: float) -> str:
    return f"{v:g}"


def load_instance(path) -> JobShopInstance:
    with open(path) as fh:
        return JobShopInstance.from_json(json.load(fh))
