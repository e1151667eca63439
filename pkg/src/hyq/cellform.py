"""Manufacturing cell formation: machines and parts grouped into cells.

With the machine-to-cell bits ``y`` fixed, the cost is linear in the
part-to-cell weights ``x`` and its linearized LP has the dual built by
:func:`build_dual_lp`.  Each dual solution gives an affine minorant
``F_t - sum_jk Q_jkt y_jk`` of the cost as a function of ``y``; the master
QUBO picks the next ``y`` from those minorants.
"""
from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ResourceLimitError
from .linear import LpModel, Status, solve_lp
from .partition import sample_with_capacity
from .qubo import QuboModel, add_exact_one_penalty, safe_penalty_weight
from .samplers import BruteForceSampler, Sampler, SamplerConfig
from .trace import HybridTrace

BOUND_TOL = 1e-6


@dataclass(frozen=True)
class CellFormationInstance:
    c: np.ndarray
    v: np.ndarray
    u: np.ndarray
    o: np.ndarray
    a: np.ndarray
    cells: int

    def __post_init__(self):
        arr = {k: np.asarray(getattr(self, k), dtype=float) for k in ("c", "v", "u", "o", "a")}
        p = arr["c"].shape[0]
        if arr["c"].shape != (p,) or arr["v"].shape != (p,):
            raise ValueError("c and v need one entry per part")
        if arr["u"].ndim != 2 or arr["u"].shape[0] != p:
            raise ValueError("u must be parts x machines")
        for k in ("o", "a"):
            if arr[k].shape != arr["u"].shape:
                raise ValueError(f"{k} must be parts x machines")
        if any(np.any(arr[k] < 0) for k in ("c", "v", "u", "o")):
            raise ValueError("costs, units and operation counts must be non-negative")
        if np.any((arr["a"] < 0) | (arr["a"] > 1)):
            raise ValueError("requirement values a_ij must lie in [0, 1]")
        if self.cells < 1:
            raise ValueError("need at least one cell")
        for k, val in arr.items():
            object.__setattr__(self, k, val)

    @property
    def num_parts(self) -> int:
        return self.u.shape[0]

    @property
    def num_machines(self) -> int:
        return self.u.shape[1]

    @property
    def move_cost(self) -> np.ndarray:
        """c_i v_i o_ij a_ij: cost when part i and machine j sit in different cells."""
        return (self.c * self.v)[:, None] * self.o * self.a

    @property
    def idle_cost(self) -> np.ndarray:
        """u_ij v_i (1 - a_ij): cost when part i shares a cell with an unneeded machine j."""
        return self.u * self.v[:, None] * (1.0 - self.a)

    def dimensions(self) -> dict:
        return {"binary": self.num_machines * self.cells, "continuous": self.num_parts * self.cells}

    def to_json(self) -> dict:
        return {"parts": self.num_parts, "machines": self.num_machines, "cells": self.cells,
                "c": self.c.tolist(), "v": self.v.tolist(), "u": self.u.tolist(),
                "o": self.o.tolist(), "a": self.a.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "CellFormationInstance":
        inst = cls(data["c"], data["v"], data["u"], data["o"], data["a"], int(data["cells"]))
        if (inst.num_parts, inst.num_machines) != (data.get("parts", inst.num_parts),
                                                   data.get("machines", inst.num_machines)):
            raise ValueError("declared part/machine counts do not match the matrices")
        return inst


def total_cost(inst: CellFormationInstance, x, y) -> float:
    """Inter-cell movement plus underutilization cost of (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (inst.num_parts, inst.cells) or y.shape != (inst.num_machines, inst.cells):
        raise ValueError("x must be parts x cells and y machines x cells")
    move = np.einsum("ij,ik,jk->", inst.move_cost, x, 1.0 - y)
    idle = np.einsum("ij,ik,jk->", inst.idle_cost, x, y)
    return float(move + idle)


def part_cell_costs(inst: CellFormationInstance, y) -> np.ndarray:
    """cost[i, k] of putting part i wholly in cell k given machine cells y."""
    y = np.asarray(y, dtype=float)
    return inst.move_cost @ (1.0 - y) + inst.idle_cost @ y


def optimal_parts_given_cells(inst: CellFormationInstance, y) -> np.ndarray:
    """Each part goes wholly to its cheapest cell; ties to the lowest cell index."""
    cost = part_cell_costs(inst, y)
    x = np.zeros((inst.num_parts, inst.cells))
    x[np.arange(inst.num_parts), np.argmin(cost, axis=1)] = 1.0
    return x


def check_cells(inst: CellFormationInstance, y) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (inst.num_machines, inst.cells):
        raise ValueError("y must be machines x cells")
    if not np.all(np.isin(y, (0, 1))) or not np.all(y.sum(1) == 1):
        raise ValueError("y must put every machine in exactly one cell")
    return y


@dataclass
class DualLayout:
    """Column offsets of l, m, n (each P x M x R, row-major) and s (P) in the dual LP."""

    parts: int
    machines: int
    cells: int

    @property
    def block(self) -> int:
        return self.parts * self.machines * self.cells

    def l(self, i, j, k):
        return (i * self.machines + j) * self.cells + k

    def m(self, i, j, k):
        return self.block + self.l(i, j, k)

    def n(self, i, j, k):
        return 2 * self.block + self.l(i, j, k)

    def s(self, i):
        return 3 * self.block + i


def build_dual_lp(inst: CellFormationInstance, y) -> LpModel:
    """Dual of the linearized cost at fixed y.

    max  sum_i s_i - sum y_jk m_ijk + sum (y_jk - 1) n_ijk
    s.t. sum_j l_ijk - sum_j n_ijk + s_i <= sum_j c_i v_i a_ij o_ij     (i, k)
         n_ijk - l_ijk - m_ijk <= u_ij v_i (1 - a_ij) - c_i v_i o_ij a_ij (i, j, k)
         l, m, n >= 0, s free
    """
    y = check_cells(inst, y)
    P, M, R = inst.num_parts, inst.num_machines, inst.cells
    lay = DualLayout(P, M, R)
    lp = LpModel(sense="max")
    for name in ("l", "m", "n"):
        for i, j, k in itertools.product(range(P), range(M), range(R)):
            cost = 0.0
            if name == "m":
                cost = -float(y[j, k])
            elif name == "n":
                cost = float(y[j, k]) - 1.0
            lp.add_variable(f"{name}[{i},{j},{k}]", lb=0.0, cost=cost)
    for i in range(P):
        lp.add_variable(f"s[{i}]", lb=-math.inf, ub=math.inf, cost=1.0)
    move, idle = inst.move_cost, inst.idle_cost
    for i in range(P):
        for k in range(R):
            row = {lay.s(i): 1.0}
            for j in range(M):
                row[lay.l(i, j, k)] = 1.0
                row[lay.n(i, j, k)] = -1.0
            lp.add_constraint(row, "<=", float(move[i].sum()))
    for i, j, k in itertools.product(range(P), range(M), range(R)):
        lp.add_constraint({lay.n(i, j, k): 1.0, lay.l(i, j, k): -1.0, lay.m(i, j, k): -1.0},
                          "<=", float(idle[i, j] - move[i, j]))
    return lp


@dataclass
class DualSolution:
    l: np.ndarray
    m: np.ndarray
    n: np.ndarray
    s: np.ndarray
    objective: float

    @property
    def Q(self) -> np.ndarray:
        """Q_jk = sum_i (m_ijk - n_ijk)."""
        return (self.m - self.n).sum(axis=0)

    @property
    def F(self) -> float:
        """F = sum_i s_i - sum_ijk n_ijk."""
        return float(self.s.sum() - self.n.sum())


class DualInfeasible(Exception):
    """The dual LP has no feasible point, so the cost is unbounded below."""


def solve_dual(inst: CellFormationInstance, y) -> DualSolution:
    res = solve_lp(build_dual_lp(inst, y))
    if res.status == Status.INFEASIBLE:
        raise DualInfeasible("dual LP infeasible; the cell formation cost is unbounded")
    if res.status != Status.OPTIMAL:
        raise RuntimeError(f"dual LP returned {res.status.value}")
    P, M, R = inst.num_parts, inst.num_machines, inst.cells
    b = P * M * R
    v = res.x
    shape = (P, M, R)
    return DualSolution(v[:b].reshape(shape), v[b:2 * b].reshape(shape), v[2 * b:3 * b].reshape(shape),
                        v[3 * b:], float(res.objective))


@dataclass
class BendersState:
    machines: int
    cells: int
    Q: list[np.ndarray] = field(default_factory=list)
    F: list[float] = field(default_factory=list)
    z_prev: float | None = None
    A: float = 1.0
    B: float = 1.0
    lb: float = -math.inf
    ub: float = math.inf

    @property
    def T(self) -> int:
        return len(self.F)

    def add_cut(self, dual: DualSolution) -> None:
        self.Q.append(dual.Q)
        self.F.append(dual.F)


def lower_bound_value(state: BendersState, y_hat) -> float:
    """max over recorded cuts of F_t - sum_jk Q_jkt y_jk."""
    if not state.T:
        raise ValueError("no cuts recorded")
    y = np.asarray(y_hat, dtype=float)
    return max(F - float((Q * y).sum()) for Q, F in zip(state.Q, state.F))


def master_objective(state: BendersState) -> QuboModel:
    """Objective part of the master QUBO over y_jk (variable j * cells + k)."""
    if not state.T:
        raise ValueError("master QUBO needs at least one recorded cut")
    if state.z_prev is None:
        raise ValueError("previous dual objective is not set")
    nv = state.machines * state.cells
    lin = np.zeros(nv)
    G = np.zeros((nv, nv))
    for Q, F in zip(state.Q, state.F):
        q = Q.ravel()
        lin -= state.A * q + 2.0 * state.B * q * (F - state.z_prev)
        G += np.outer(q, q)
    # ordered double sum: the diagonal folds into linear (y^2 = y), each off-diagonal pair appears twice
    lin += np.diag(G)
    J = 2.0 * G
    np.fill_diagonal(J, 0.0)
    return QuboModel.from_dense(lin, J)


def build_master_qubo(state: BendersState, penalty: float | None = None) -> QuboModel:
    """Objective plus one-cell-per-machine penalty scaled by ``penalty`` (default: safe weight)."""
    obj = master_objective(state)
    w = safe_penalty_weight(obj) if penalty is None else float(penalty)
    model = obj
    for j in range(state.machines):
        model = add_exact_one_penalty(model, [j * state.cells + k for k in range(state.cells)], w)
    return model


def repair_cells(y_bits, linear: np.ndarray, machines: int, cells: int):
    """Give every machine with zero or several cells its cell of smallest linear coefficient.

    Returns (y, repaired machine list).
    """
    y = np.asarray(y_bits, dtype=np.int8).reshape(machines, cells).copy()
    lin = np.asarray(linear).reshape(machines, cells)
    fixed = []
    for j in range(machines):
        if y[j].sum() != 1:
            y[j] = 0
            y[j, int(np.argmin(lin[j]))] = 1
            fixed.append(j)
    return y, fixed


def _master_samples(master: QuboModel, backend: Sampler, cfg: SamplerConfig, subqubo_size):
    """Distinct samples in energy order; a single state when the model had to be partitioned."""
    if backend.max_vars is None or master.num_vars <= backend.max_vars:
        return list(backend.sample(master, cfg).states)
    return [sample_with_capacity(master, backend, cfg, subqubo_size)[0]]


def _pick_cells(state: BendersState, candidates, linear, select: str):
    """Returns (y_hat, repaired machines, cut value at y_hat)."""
    best = None
    for bits in candidates:
        y, fixed = repair_cells(bits, linear, state.machines, state.cells)
        z = lower_bound_value(state, y)
        if select == "energy":
            return y, fixed, z
        if best is None or z < best[2] - 1e-12:
            best = (y, fixed, z)
    return best


def round_robin_cells(machines: int, cells: int) -> np.ndarray:
    y = np.zeros((machines, cells), dtype=np.int8)
    y[np.arange(machines), np.arange(machines) % cells] = 1
    return y


@dataclass
class CellSolution:
    x: np.ndarray
    y: np.ndarray
    objective: float

    def to_json(self) -> dict:
        return {"objective": self.objective, "x": self.x.tolist(), "y": self.y.tolist(),
                "part_cell": [int(k) for k in np.argmax(self.x, axis=1)],
                "machine_cell": [int(k) for k in np.argmax(self.y, axis=1)]}


def solve_cellform_hybrid(inst: CellFormationInstance, backend: Sampler | None = None,
                          config: SamplerConfig | None = None, max_iters: int = 100,
                          A: float = 1.0, B: float = 1.0, subqubo_size: int | None = None,
                          select: str = "bound"):
    """Dual LP / master QUBO alternation with lower and upper bounds.

    ``select="bound"`` takes, among the distinct repaired samples the backend
    returns, the one with the smallest cut value max_t(F_t - Q_t . y); when
    the samples cover every feasible y this is the exact master minimum and
    the lower bound is valid.  ``select="energy"`` takes the lowest-energy
    sample as-is.

    Returns (CellSolution, HybridTrace).  Raises DualInfeasible when the dual
    LP has no feasible point.
    """
    if select not in ("bound", "energy"):
        raise ValueError("select must be 'bound' or 'energy'")
    backend = backend or BruteForceSampler()
    cfg = config or SamplerConfig()
    M, R = inst.num_machines, inst.cells
    state = BendersState(M, R, A=A, B=B)
    y = round_robin_cells(M, R)
    best_y = y
    trace = HybridTrace(meta={"parts": inst.num_parts, "machines": M, "cells": R, "A": A, "B": B,
                              "select": select})
    t0 = time.perf_counter()
    for T in range(1, max_iters + 1):
        tc = time.perf_counter()
        dual = solve_dual(inst, y)
        if state.z_prev is None:
            state.z_prev = dual.objective
            trace.meta["z0"] = dual.objective
        if dual.objective < state.ub:
            state.ub = dual.objective
            best_y = y
        state.add_cut(dual)
        master = build_master_qubo(state)
        classical = time.perf_counter() - tc
        tb = time.perf_counter()
        candidates = _master_samples(master, backend, cfg.derive(T), subqubo_size)
        backend_time = time.perf_counter() - tb
        lin = master_objective(state).dense[0]
        y_hat, repaired, z_hat = _pick_cells(state, candidates, lin, select)
        state.lb = max(state.lb, z_hat)
        trace.append(iteration=T, dual_objective=dual.objective, z_hat=z_hat, lb=state.lb, ub=state.ub,
                     repaired=len(repaired), classical_time=classical, backend_time=backend_time,
                     elapsed=time.perf_counter() - t0)
        if state.lb >= state.ub - BOUND_TOL:
            x = optimal_parts_given_cells(inst, best_y)
            trace.meta["status"] = "converged"
            return CellSolution(x, best_y.copy(), total_cost(inst, x, best_y)), trace
        state.z_prev = dual.objective
        y = y_hat
    x = optimal_parts_given_cells(inst, best_y)
    trace.meta["status"] = "iteration_limit"
    raise ResourceLimitError(f"bounds did not meet within {max_iters} iterations",
                             incumbent=CellSolution(x, best_y.copy(), total_cost(inst, x, best_y)), trace=trace)


def exhaustive_optimum(inst: CellFormationInstance):
    """min over every feasible y of the x-optimal cost. Returns (cost, y)."""
    M, R = inst.num_machines, inst.cells
    best, best_y = math.inf, None
    for cells in itertools.product(range(R), repeat=M):
        y = np.zeros((M, R), dtype=np.int8)
        y[np.arange(M), cells] = 1
        cost = float(part_cell_costs(inst, y).min(axis=1).sum())
        if cost < best - 1e-12:
            best, best_y = cost, y
    return best, best_y


def load_instance(path) -> CellFormationInstance:
    with open(path) as fh:
        return CellFormationInstance.from_json(json.load(fh))


