"""Dense two-phase simplex and LP-based branch and bound.

Sized for small subproblems (a few hundred rows).  Pivoting uses Bland's
rule throughout, so the method cannot cycle; a hard iteration cap turns any
runaway into an explicit status instead of a silent loop.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .errors import ResourceLimitError

FEAS_TOL = 1e-7
INT_TOL = 1e-6
PIVOT_TOL = 1e-9
COST_TOL = 1e-9
INF = math.inf

_RELATIONS = ("<=", ">=", "=")


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"
    NUMERICAL = "numerical_failure"


@dataclass
class LpModel:
    """min/max c.x  s.t.  rows (<=, >=, =) rhs,  lower <= x <= upper."""

    sense: str = "min"
    objective: list[float] = field(default_factory=list)
    lower: list[float] = field(default_factory=list)
    upper: list[float] = field(default_factory=list)
    names: list[str] = field(default_factory=list)
    rows: list[dict[int, float]] = field(default_factory=list)
    relations: list[str] = field(default_factory=list)
    rhs: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")

    @property
    def num_vars(self) -> int:
        return len(self.objective)

    @property
    def num_constraints(self) -> int:
        return len(self.rows)

    def add_variable(self, name: str | None = None, lb: float = 0.0, ub: float = INF, cost: float = 0.0) -> int:
        if lb > ub:
            raise ValueError(f"variable {name}: lower bound {lb} above upper bound {ub}")
        self.objective.append(float(cost))
        self.lower.append(float(lb))
        self.upper.append(float(ub))
        self.names.append(name if name is not None else f"x{len(self.objective) - 1}")
        return len(self.objective) - 1

    def add_constraint(self, coeffs: Mapping[int, float], relation: str, rhs: float) -> int:
        if relation not in _RELATIONS:
            raise ValueError(f"relation must be one of {_RELATIONS}")
        row = {}
        for j, v in coeffs.items():
            if not 0 <= j < self.num_vars:
                raise IndexError(f"constraint references unknown variable {j}")
            if not math.isfinite(v):
                raise ValueError("constraint coefficients must be finite")
            if v != 0.0:
                row[int(j)] = row.get(int(j), 0.0) + float(v)
        self.rows.append(row)
        self.relations.append(relation)
        self.rhs.append(float(rhs))
        return len(self.rows) - 1

    def dense(self):
        A = np.zeros((self.num_constraints, self.num_vars))
        for r, row in enumerate(self.rows):
            for j, v in row.items():
                A[r, j] = v
        return (np.array(self.objective, dtype=float), A, list(self.relations),
                np.array(self.rhs, dtype=float), np.array(self.lower, dtype=float),
                np.array(self.upper, dtype=float))

    def to_json(self) -> dict:
        return {
            "sense": self.sense,
            "variables": [
                {"name": n, "lb": _num_out(l), "ub": _num_out(u), "cost": c}
                for n, l, u, c in zip(self.names, self.lower, self.upper, self.objective)
            ],
            "constraints": [
                {"coeffs": [[j, v] for j, v in sorted(row.items())], "relation": rel, "rhs": b}
                for row, rel, b in zip(self.rows, self.relations, self.rhs)
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "LpModel":
        m = cls(sense=data.get("sense", "min"))
        _fill_from_json(m, data)
        return m


@dataclass
class MilpModel(LpModel):
    """An LP whose variables in ``integer`` must take integral values."""

    integer: set[int] = field(default_factory=set)

    def add_variable(self, name=None, lb=0.0, ub=INF, cost=0.0, integer: bool = False) -> int:
        if integer and not (math.isfinite(lb) and math.isfinite(ub)):
            raise ValueError(f"integer variable {name} needs finite bounds")
        j = super().add_variable(name, lb, ub, cost)
        if integer:
            self.integer.add(j)
        return j

    def add_binary(self, name=None, cost: float = 0.0) -> int:
        return self.add_variable(name, 0.0, 1.0, cost, integer=True)

    @property
    def num_integer(self) -> int:
        return len(self.integer)

    def to_json(self) -> dict:
        out = super().to_json()
        for j, var in enumerate(out["variables"]):
            var["integer"] = j in self.integer
        return out

    @classmethod
    def from_json(cls, data: dict) -> "MilpModel":
        m = cls(sense=data.get("sense", "min"))
        _fill_from_json(m, data)
        return m


def _num_out(v: float):
    return None if math.isinf(v) else v


def _fill_from_json(m: LpModel, data: dict) -> None:
    for var in data["variables"]:
        lb = -INF if var.get("lb", 0.0) is None else float(var.get("lb", 0.0))
        ub = INF if var.get("ub") is None else float(var["ub"])
        if isinstance(m, MilpModel):
            m.add_variable(var.get("name"), lb, ub, float(var.get("cost", 0.0)), bool(var.get("integer", False)))
        else:
            m.add_variable(var.get("name"), lb, ub, float(var.get("cost", 0.0)))
    for con in data.get("constraints", []):
        m.add_constraint({int(j): float(v) for j, v in con["coeffs"]}, con["relation"], float(con["rhs"]))


@dataclass
class LpResult:
    status: Status
    objective: float | None = None
    x: np.ndarray | None = None
    iterations: int = 0
    phase1_objective: float | None = None

    def to_json(self) -> dict:
        return {"status": self.status.value, "objective": self.objective,
                "x": None if self.x is None else self.x.tolist(),
                "iterations": self.iterations, "phase1_objective": self.phase1_objective}


@dataclass
class MilpResult(LpResult):
    nodes: int = 0

    def to_json(self) -> dict:
        return {**super().to_json(), "nodes": self.nodes}


class _Tableau:
    """Simplex tableau: constraint rows, then one objective row; last column is the RHS."""

    def __init__(self, T: np.ndarray, basis: np.ndarray):
        self.T = T
        self.basis = basis
        self.iterations = 0

    def pivot(self, r: int, c: int) -> None:
        T = self.T
        T[r] /= T[r, c]
        col = T[:, c].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = c
        self.iterations += 1

    def run(self, allowed: int, max_iter: int) -> str:
        """Minimize the objective row over columns < ``allowed``."""
        T = self.T
        m = T.shape[0] - 1
        while True:
            rc = T[m, :allowed]
            cand = np.flatnonzero(rc < -COST_TOL)
            if cand.size == 0:
                return "optimal"
            if self.iterations >= max_iter:
                return "iteration_limit"
            c = int(cand[0])
            col = T[:m, c]
            pos = col > PIVOT_TOL
            if not pos.any():
                return "unbounded"
            ratios = np.full(m, INF)
            ratios[pos] = T[:m, -1][pos] / col[pos]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + 1e-12 * max(1.0, abs(best)))
            r = int(ties[np.argmin(self.basis[ties])])
            self.pivot(r, c)


def _solve_arrays(c, A, relations, b, lower, upper, max_iter=20000) -> LpResult:
    """Minimize c.x over the box-and-rows polyhedron."""
    n = len(c)
    # column mapping: x_j = shift_j + sum(sign * z_col)
    shift = np.zeros(n)
    cols: list[tuple[int, float]] = []
    ub_rows: list[tuple[int, float]] = []
    for j in range(n):
        lo, hi = lower[j], upper[j]
        if math.isfinite(lo) and math.isfinite(hi) and hi - lo <= 0.0:
            shift[j] = lo
            continue
        if math.isfinite(lo):
            shift[j] = lo
            cols.append((j, 1.0))
            if math.isfinite(hi):
                ub_rows.append((len(cols) - 1, hi - lo))
        elif math.isfinite(hi):
            shift[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    nz = len(cols)
    src = np.array([j for j, _ in cols], dtype=np.int64)
    sgn = np.array([s for _, s in cols])
    Az = A[:, src] * sgn if nz else np.zeros((A.shape[0], 0))
    bz = b - A @ shift
    cz = c[src] * sgn if nz else np.zeros(0)
    const = float(c @ shift)
    rels = list(relations)
    if ub_rows:
        U = np.zeros((len(ub_rows), nz))
        for k, (col, _) in enumerate(ub_rows):
            U[k, col] = 1.0
        Az = np.vstack([Az, U])
        bz = np.concatenate([bz, [v for _, v in ub_rows]])
        rels += ["<="] * len(ub_rows)

    m = Az.shape[0]
    flip = bz < 0
    Az = np.where(flip[:, None], -Az, Az)
    bz = np.abs(bz)
    rels = [(">=" if r == "<=" else "<=" if r == ">=" else "=") if f else r for r, f in zip(rels, flip)]

    n_slack = sum(1 for r in rels if r != "=")
    n_art = sum(1 for r in rels if r != "<=")
    ncol = nz + n_slack + n_art
    T = np.zeros((m + 1, ncol + 1))
    T[:m, :nz] = Az
    T[:m, -1] = bz
    basis = np.zeros(m, dtype=np.int64)
    s = nz
    a = nz + n_slack
    art_rows = []
    for i, r in enumerate(rels):
        if r == "<=":
            T[i, s] = 1.0
            basis[i] = s
            s += 1
        elif r == ">=":
            T[i, s] = -1.0
            s += 1
            T[i, a] = 1.0
            basis[i] = a
            art_rows.append(i)
            a += 1
        else:
            T[i, a] = 1.0
            basis[i] = a
            art_rows.append(i)
            a += 1
    tab = _Tableau(T, basis)
    art_start = nz + n_slack

    phase1 = 0.0
    if n_art:
        T[m, art_start:ncol] = 1.0
        for i in art_rows:
            T[m] -= T[i]
        st = tab.run(ncol, max_iter)
        if st == "iteration_limit":
            return LpResult(Status.ITERATION_LIMIT, iterations=tab.iterations)
        phase1 = -T[m, -1]
        if phase1 > FEAS_TOL:
            return LpResult(Status.INFEASIBLE, iterations=tab.iterations, phase1_objective=float(phase1))
        # drive zero-level artificials out of the basis, dropping redundant rows
        keep = np.ones(m, dtype=bool)
        for i in range(m):
            if tab.basis[i] >= art_start:
                nonzero = np.flatnonzero(np.abs(T[i, :art_start]) > PIVOT_TOL)
                if nonzero.size:
                    tab.pivot(i, int(nonzero[0]))
                else:
                    keep[i] = False
        if not keep.all():
            rows = np.concatenate([np.flatnonzero(keep), [m]])
            tab.T = T = T[rows]
            tab.basis = tab.basis[keep]
            m = T.shape[0] - 1
        tab.T = T = np.hstack([T[:, :art_start], T[:, -1:]])

    T[m, :] = 0.0
    T[m, :nz] = cz
    for i in range(m):
        cb = T[m, tab.basis[i]]
        if cb != 0.0:
            T[m] -= cb * T[i]
    st = tab.run(art_start, max_iter)
    if st == "iteration_limit":
        return LpResult(Status.ITERATION_LIMIT, iterations=tab.iterations, phase1_objective=float(phase1))
    if st == "unbounded":
        return LpResult(Status.UNBOUNDED, iterations=tab.iterations, phase1_objective=float(phase1))
    z = np.zeros(art_start)
    z[tab.basis] = T[:m, -1]
    x = shift.copy()
    if nz:
        np.add.at(x, src, sgn * z[:nz])
    obj = float(c @ x)
    # verify against the original rows: a wrong "optimal" is worse than an explicit failure
    act = A @ x
    for r, rel in enumerate(relations):
        tol = FEAS_TOL * max(1.0, abs(b[r]))
        if (rel == "<=" and act[r] > b[r] + tol) or (rel == ">=" and act[r] < b[r] - tol) or \
                (rel == "=" and abs(act[r] - b[r]) > tol):
            return LpResult(Status.NUMERICAL, iterations=tab.iterations, phase1_objective=float(phase1))
    if np.any(x < lower - FEAS_TOL) or np.any(x > upper + FEAS_TOL):
        return LpResult(Status.NUMERICAL, iterations=tab.iterations, phase1_objective=float(phase1))
    del const
    return LpResult(Status.OPTIMAL, obj, x, tab.iterations, float(phase1))


def solve_lp(lp: LpModel, max_iter: int = 20000) -> LpResult:
    c, A, rel, b, lo, hi = lp.dense()
    sign = -1.0 if lp.sense == "max" else 1.0
    res = _solve_arrays(sign * c, A, rel, b, lo, hi, max_iter)
    if res.objective is not None:
        res.objective = float(c @ res.x)
    return res


def solve_milp(m: MilpModel, node_limit: int = 1_000_000, max_iter: int = 20000) -> MilpResult:
    """Depth-first LP branch and bound, most-fractional branching, lowest index on ties."""
    c, A, rel, b, lo, hi = m.dense()
    sign = -1.0 if m.sense == "max" else 1.0
    cmin = sign * c
    ints = np.array(sorted(m.integer), dtype=np.int64)
    if ints.size:
        lo = lo.copy()
        hi = hi.copy()
        lo[ints] = np.ceil(lo[ints] - INT_TOL)
        hi[ints] = np.floor(hi[ints] + INT_TOL)
    best_x = None
    best = INF
    nodes = 0
    iters = 0
    stack = [(lo, hi)]
    while stack:
        node_lo, node_hi = stack.pop()
        if np.any(node_lo > node_hi):
            continue
        nodes += 1
        if nodes > node_limit:
            inc = None if best_x is None else MilpResult(Status.OPTIMAL, float(c @ best_x), best_x, iters, nodes=nodes)
            raise ResourceLimitError(f"branch and bound exceeded {node_limit} nodes", incumbent=inc)
        res = _solve_arrays(cmin, A, rel, b, node_lo, node_hi, max_iter)
        iters += res.iterations
        if res.status == Status.INFEASIBLE:
            if nodes == 1:
                return MilpResult(Status.INFEASIBLE, iterations=iters, phase1_objective=res.phase1_objective,
                                  nodes=nodes)
            continue
        if res.status != Status.OPTIMAL:
            # unbounded relaxation at any node, or a numerical failure
            return MilpResult(res.status, iterations=iters, nodes=nodes)
        zval = float(cmin @ res.x)
        if zval >= best - 1e-9 * max(1.0, abs(best)):
            continue
        x = res.x
        if ints.size:
            frac = np.abs(x[ints] - np.round(x[ints]))
            fractional = frac > INT_TOL
        else:
            fractional = np.zeros(0, dtype=bool)
        if not fractional.any():
            if ints.size:
                x = x.copy()
                x[ints] = np.round(x[ints])
            best_x, best = x, float(cmin @ x)
            continue
        dist = np.where(fractional, np.minimum(x[ints] - np.floor(x[ints]), np.ceil(x[ints]) - x[ints]), -1.0)
        k = int(np.argmax(dist))
        j = int(ints[k])
        down_hi = node_hi.copy()
        down_hi[j] = math.floor(x[j])
        up_lo = node_lo.copy()
        up_lo[j] = math.ceil(x[j])
        down = (node_lo, down_hi)
        up = (up_lo, node_hi)
        # explore the side the LP value leans towards first; stack is LIFO
        if x[j] - math.floor(x[j]) >= 0.5:
            stack += [down, up]
        else:
            stack += [up, down]
    if best_x is None:
        return MilpResult(Status.INFEASIBLE, iterations=iters, nodes=nodes)
    return MilpResult(Status.OPTIMAL, float(c @ best_x), best_x, iters, nodes=nodes)


def load_model(path) -> LpModel:
    with open(path) as fh:
        data = json.load(fh)
    if any(v.get("integer") for v in data.get("variables", [])):
        return MilpModel.from_json(data)
    return LpModel.from_json(data)


def dual_of_standard(c: Sequence[float], A, b: Sequence[float]) -> LpModel:
    """Dual of ``max c.x, A x <= b, x >= 0``: ``min b.y, A^T y >= c, y >= 0``."""
    A = np.asarray(A, dtype=float)
    d = LpModel(sense="min")
    for bi in b:
        d.add_variable(lb=0.0, cost=float(bi))
    for j in range(A.shape[1]):
        d.add_constraint({i: A[i, j] for i in range(A.shape[0])}, ">=", float(c[j]))
    return d
