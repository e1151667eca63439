"""Vehicle routing with a cost / working-time ratio objective.

Variables x[v, p, i] say vehicle v is at vertex i on step p (vertex 0 is the
depot, steps 0..|V|-1), indexed (v * steps + p) * |V| + i.  Every vehicle
starts at the depot on step 0.  A route then visits customers on steps
1, 2, ... and either returns to the depot explicitly on the following step
or, if it ends on the last step, implicitly.  Unused vehicles have nothing
after step 0.

The ratio is minimized by a parametric loop: minimize C - lambda W as a
QUBO, then set lambda to the ratio of the plan found, until lambda stops
moving.
"""
from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ResourceLimitError
from .partition import sample_with_capacity
from .qubo import QuboModel, clamp, merge_assignment, safe_penalty_weight
from .samplers import BruteForceSampler, Sampler, SamplerConfig
from .trace import HybridTrace

DEFAULT_DELTA = 1e-6


@dataclass(frozen=True)
class VrpInstance:
    C: np.ndarray
    W: np.ndarray
    vehicles: int

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        W = np.asarray(self.W, dtype=float)
        if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape != W.shape:
            raise ValueError("C and W must be square matrices of equal size")
        if C.shape[0] < 2:
            raise ValueError("need a depot and at least one customer")
        if not (np.all(np.isfinite(C)) and np.all(np.isfinite(W))):
            raise ValueError("C and W must be finite")
        off = ~np.eye(len(C), dtype=bool)
        if np.any(C < 0) or np.any(W[off] <= 0):
            raise ValueError("need C >= 0 and W > 0 off the diagonal")
        if self.vehicles < 1:
            raise ValueError("need at least one vehicle")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "W", W)

    @property
    def num_vertices(self) -> int:
        return self.C.shape[0]

    @property
    def num_steps(self) -> int:
        return self.C.shape[0]

    @property
    def customers(self) -> range:
        return range(1, self.num_vertices)

    @property
    def num_vars(self) -> int:
        return self.vehicles * self.num_steps * self.num_vertices

    def var(self, v: int, p: int, i: int) -> int:
        return (v * self.num_steps + p) * self.num_vertices + i

    def to_json(self) -> dict:
        return {"vertices": self.num_vertices, "vehicles": self.vehicles, "C": self.C.tolist(),
                "W": self.W.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "VrpInstance":
        inst = cls(data["C"], data["W"], int(data["vehicles"]))
        if inst.num_vertices != data.get("vertices", inst.num_vertices):
            raise ValueError("declared vertex count does not match the matrices")
        return inst


def _arcs(routes):
    for r in routes:
        if r:
            path = [0, *r, 0]
            yield from zip(path[:-1], path[1:])


def route_totals(inst: VrpInstance, routes) -> tuple[float, float]:
    cost = sum(inst.C[i, j] for i, j in _arcs(routes))
    work = sum(inst.W[i, j] for i, j in _arcs(routes))
    return float(cost), float(work)


@dataclass
class RoutePlan:
    routes: list[list[int]]
    cost: float
    time: float

    @property
    def ratio(self) -> float:
        if self.time <= 0:
            raise ZeroDivisionError("plan has no working time")
        return self.cost / self.time

    def to_json(self) -> dict:
        return {"routes": self.routes, "cost": self.cost, "time": self.time, "ratio": self.ratio}


def make_plan(inst: VrpInstance, routes) -> RoutePlan:
    routes = [list(map(int, r)) for r in routes]
    c, w = route_totals(inst, routes)
    return RoutePlan(routes, c, w)


def logistic_ratio(inst: VrpInstance, plan: RoutePlan | list) -> float:
    """Total travel cost over total working time, depot departure and return arcs included."""
    routes = plan.routes if isinstance(plan, RoutePlan) else plan
    c, w = route_totals(inst, routes)
    if w <= 0:
        raise ValueError("logistic ratio undefined: zero working time")
    return c / w


def objective_qubo(inst: VrpInstance, lam: float) -> QuboModel:
    """sum over vehicles and consecutive steps of (C_ij - lam W_ij) x[v,p,i] x[v,p+1,j], i != j,
    plus the implicit return arc from a customer on the last step."""
    V, N = inst.num_vertices, inst.num_steps
    K = inst.C - lam * inst.W
    lin: dict[int, float] = {}
    quad: dict[tuple[int, int], float] = {}
    for v in range(inst.vehicles):
        for p in range(N - 1):
            for i in range(V):
                for j in range(V):
                    if i != j and K[i, j] != 0.0:
                        quad[(inst.var(v, p, i), inst.var(v, p + 1, j))] = K[i, j]
        for i in inst.customers:
            if K[i, 0] != 0.0:
                lin[inst.var(v, N - 1, i)] = K[i, 0]
    return QuboModel.from_terms(inst.num_vars, lin, quad)


def constraint_terms(inst: VrpInstance):
    """Unit-weight penalty terms (linear, quadratic, offset), zero exactly on valid encodings.

    * each customer once over all vehicles and steps;
    * step 0 of every vehicle is the depot;
    * continuity: (customers at p) - (vertices at p+1) squared, for p >= 1;
    * at most one vertex per vehicle step.
    """
    V, N = inst.num_vertices, inst.num_steps
    lin: dict[int, float] = {}
    quad: dict[tuple[int, int], float] = {}
    offset = 0.0

    def add_square(terms, const):
        """(sum_k a_k x_k + const)^2 with x binary."""
        nonlocal offset
        offset += const * const
        for a, (u, cu) in enumerate(terms):
            lin[u] = lin.get(u, 0.0) + cu * cu + 2.0 * const * cu
            for w, cw in terms[a + 1:]:
                key = (u, w) if u < w else (w, u)
                quad[key] = quad.get(key, 0.0) + 2.0 * cu * cw

    for i in inst.customers:
        add_square([(inst.var(v, p, i), 1.0) for v in range(inst.vehicles) for p in range(N)], -1.0)
    for v in range(inst.vehicles):
        add_square([(inst.var(v, 0, 0), 1.0)], -1.0)
        for i in inst.customers:
            add_square([(inst.var(v, 0, i), 1.0)], 0.0)
        for p in range(1, N - 1):
            terms = [(inst.var(v, p, i), 1.0) for i in inst.customers]
            terms += [(inst.var(v, p + 1, i), -1.0) for i in range(V)]
            add_square(terms, 0.0)
        for p in range(1, N):
            cells = [inst.var(v, p, i) for i in range(V)]
            for a in range(V):
                for b in range(a + 1, V):
                    quad[(cells[a], cells[b])] = quad.get((cells[a], cells[b]), 0.0) + 2.0
    return lin, quad, offset


def build_vrp_qubo(inst: VrpInstance, lam: float, A: float | None = None):
    """H = objective + A * constraints; A defaults to the safe weight of the objective.

    Returns (model, index) with index[v, p, i] the variable of x[v, p, i].
    """
    obj = objective_qubo(inst, lam)
    safe = safe_penalty_weight(obj)
    A = safe if A is None else float(A)
    if A < safe:
        raise ValueError(f"penalty weight A={A} is below the safe weight {safe}")
    lin, quad, off = constraint_terms(inst)
    pen = QuboModel.from_terms(inst.num_vars, {k: A * c for k, c in lin.items()},
                               {k: A * c for k, c in quad.items()}, A * off)
    index = np.arange(inst.num_vars).reshape(inst.vehicles, inst.num_steps, inst.num_vertices)
    return obj + pen, index


def depot_start_fixing(inst: VrpInstance) -> dict[int, int]:
    """Step-0 bits of every vehicle: depot on, customers off."""
    fixed = {}
    for v in range(inst.vehicles):
        for i in range(inst.num_vertices):
            fixed[inst.var(v, 0, i)] = 1 if i == 0 else 0
    return fixed


@dataclass
class RouteCheck:
    plan: RoutePlan | None
    unserved: list[int] = field(default_factory=list)
    repeated: list[int] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.plan is not None


def decode_routes(inst: VrpInstance, a) -> RouteCheck:
    V, N, H = inst.num_vertices, inst.num_steps, inst.vehicles
    x = np.asarray(a, dtype=np.int64).ravel()
    if x.shape[0] != inst.num_vars:
        raise ValueError(f"assignment has {x.shape[0]} bits, instance has {inst.num_vars} variables")
    grid = x.reshape(H, N, V)
    served = grid[:, :, 1:].sum(axis=(0, 1))
    unserved = [i + 1 for i in np.flatnonzero(served == 0)]
    repeated = [i + 1 for i in np.flatnonzero(served > 1)]
    violations = []
    if unserved:
        violations.append(f"customers not served: {unserved}")
    if repeated:
        violations.append(f"customers served more than once: {repeated}")
    routes = []
    for v in range(H):
        steps = [list(np.flatnonzero(grid[v, p])) for p in range(N)]
        if steps[0] != [0]:
            violations.append(f"vehicle {v}: step 0 is not the depot")
        for p in range(1, N):
            if len(steps[p]) > 1:
                violations.append(f"vehicle {v}: step {p} holds {len(steps[p])} vertices")
        route = []
        ended = False
        for p in range(1, N):
            here = steps[p]
            if ended:
                if here:
                    violations.append(f"vehicle {v}: vertex at step {p} after the route ended")
                continue
            if not here:
                if route:
                    violations.append(f"vehicle {v}: leaves customer {route[-1]} without returning")
                ended = True
            elif here == [0]:
                ended = True
            elif len(here) == 1:
                route.append(int(here[0]))
        routes.append(route)
    if violations:
        return RouteCheck(None, unserved, repeated, violations)
    return RouteCheck(make_plan(inst, routes), unserved, repeated, violations)


def encode_routes(inst: VrpInstance, routes) -> np.ndarray:
    if len(routes) != inst.vehicles:
        raise ValueError(f"need one route per vehicle ({inst.vehicles})")
    x = np.zeros(inst.num_vars, dtype=np.int8)
    for v, r in enumerate(routes):
        x[inst.var(v, 0, 0)] = 1
        if len(r) > inst.num_steps - 1:
            raise ValueError(f"route {v} is longer than the step horizon")
        for p, i in enumerate(r, start=1):
            x[inst.var(v, p, i)] = 1
        if r and len(r) + 1 < inst.num_steps:
            x[inst.var(v, len(r) + 1, 0)] = 1
    return x


def enumerate_route_plans(inst: VrpInstance):
    """Every split of the customers into at most ``vehicles`` ordered routes, vehicle order canonical."""
    cust = list(inst.customers)
    seen = set()
    for owner in itertools.product(range(inst.vehicles), repeat=len(cust)):
        groups = [[c for c, o in zip(cust, owner) if o == v] for v in range(inst.vehicles)]
        for orders in itertools.product(*[itertools.permutations(g) for g in groups]):
            key = tuple(sorted(tuple(r) for r in orders if r))
            if key in seen:
                continue
            seen.add(key)
            routes = [list(r) for r in key] + [[] for _ in range(inst.vehicles - len(key))]
            yield routes


def exhaustive_best_ratio(inst: VrpInstance):
    """Returns (ratio, routes) minimizing the logistic ratio over all plans."""
    best, best_r = math.inf, None
    for routes in enumerate_route_plans(inst):
        r = logistic_ratio(inst, routes)
        if r < best - 1e-15:
            best, best_r = r, routes
    return best, best_r


def solve_vrp_parametric(inst: VrpInstance, backend: Sampler | None = None, config: SamplerConfig | None = None,
                         delta: float = DEFAULT_DELTA, max_iters: int = 100, resamples: int = 3,
                         subqubo_size: int | None = None):
    """lambda <- ratio of the plan minimizing C - lambda W, until |lambda - previous| <= delta.

    Returns (RoutePlan or None, HybridTrace); None means every sample in an
    iteration decoded to an infeasible plan.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if resamples < 0:
        raise ValueError("resamples must be >= 0")
    backend = backend or BruteForceSampler()
    cfg = config or SamplerConfig()
    lam, obj = 0.0, math.inf
    plan = None
    fixed = depot_start_fixing(inst)
    trace = HybridTrace(meta={"vertices": inst.num_vertices, "vehicles": inst.vehicles, "delta": delta})
    t0 = time.perf_counter()
    it = 0
    while abs(lam - obj) > delta:
        it += 1
        if it > max_iters:
            trace.meta["status"] = "iteration_limit"
            raise ResourceLimitError(f"lambda did not settle within {max_iters} iterations", incumbent=plan,
                                     trace=trace)
        tc = time.perf_counter()
        model, _ = build_vrp_qubo(inst, lam)
        A = safe_penalty_weight(objective_qubo(inst, lam))
        sub, free = clamp(model, fixed)
        classical = time.perf_counter() - tc
        tb = time.perf_counter()
        check = None
        for attempt in range(resamples + 1):
            bits, _ = sample_with_capacity(sub, backend, cfg.derive(it, attempt), subqubo_size)
            check = decode_routes(inst, merge_assignment(inst.num_vars, fixed, free, bits))
            if check.feasible:
                break
        backend_time = time.perf_counter() - tb
        if not check.feasible:
            trace.append(iteration=it, lam=lam, obj=obj, penalty=A, attempts=attempt + 1, feasible=False,
                         classical_time=classical, backend_time=backend_time, elapsed=time.perf_counter() - t0)
            trace.meta.update(status="infeasible", violations=check.violations)
            return None, trace
        plan = check.plan
        obj = lam
        lam = plan.ratio
        trace.append(iteration=it, lam=lam, obj=obj, penalty=A, attempts=attempt + 1, feasible=True,
                     classical_time=classical, backend_time=backend_time, elapsed=time.perf_counter() - t0)
    trace.meta["status"] = "converged"
    return plan, trace


def load_instance(path) -> VrpInstance:
    with open(path) as fh:
        return VrpInstance.from_json(json.load(fh))
