"""Large-neighborhood QUBO search over backend-sized sub-problems.

Each outer iteration ranks variables by how much flipping them alone would
change the energy, cuts that ranking into blocks of ``subqubo_size``, solves
every block with the rest clamped to the incumbent, and finishes with a tabu
pass.  Block results are only spliced in when they do not raise the energy,
so the incumbent energy never increases.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BackendError, DimensionError
from .qubo import QuboModel, energy
from .samplers import BruteForceSampler, Sampler, SamplerConfig, tabu_search
from .trace import HybridTrace


@dataclass
class PartitionParams:
    subqubo_size: int = 64
    max_outer_iters: int = 50
    stall_limit: int = 2
    backend: Sampler = field(default_factory=BruteForceSampler)
    seed: int = 0
    sampler_config: SamplerConfig | None = None

    def __post_init__(self):
        if self.subqubo_size < 2:
            raise ValueError("subqubo_size must be >= 2")
        if self.max_outer_iters < 1 or self.stall_limit < 1:
            raise ValueError("iteration limits must be >= 1")

    def config(self) -> SamplerConfig:
        return replace(self.sampler_config or SamplerConfig(), seed=self.seed)


def flip_deltas(model: QuboModel, current) -> np.ndarray:
    x = np.asarray(current, dtype=float)
    if x.shape != (model.num_vars,):
        raise DimensionError(f"assignment has shape {x.shape}, model has {model.num_vars} vars")
    h, J = model.dense
    return (1.0 - 2.0 * x) * (h + J @ x)


def impact_order(model: QuboModel, current) -> list[int]:
    """Variables by decreasing |energy change| of a single flip; ties by index."""
    d = np.abs(flip_deltas(model, current))
    return [int(i) for i in np.lexsort((np.arange(len(d)), -d))]


def _subproblem(h, J, offset, x, block):
    """Clamp everything outside ``block`` to ``x``; dense equivalent of qubo.clamp."""
    block = np.asarray(block)
    rest = np.setdiff1d(np.arange(len(h)), block)
    xr = x[rest].astype(float)
    sub_h = h[block] + J[np.ix_(block, rest)] @ xr
    sub_J = J[np.ix_(block, block)]
    sub_off = offset + h[rest] @ xr + 0.5 * xr @ J[np.ix_(rest, rest)] @ xr
    return QuboModel.from_dense(sub_h, sub_J, sub_off)


def solve_partitioned(model: QuboModel, params: PartitionParams | None = None):
    """Returns (assignment, energy, HybridTrace)."""
    params = params or PartitionParams()
    n = model.num_vars
    if n == 0:
        raise ValueError("model has no variables")
    cfg = params.config()
    h, J = model.dense
    k = params.subqubo_size
    if params.backend.max_vars is not None:
        k = min(k, params.backend.max_vars)

    t0 = time.perf_counter()
    inc, inc_e = tabu_search(model, cfg, np.zeros(n, dtype=np.int8)).first
    trace = HybridTrace()
    trace.meta.update(initial_energy=inc_e, subqubo_size=k)
    stall = 0
    for it in range(1, params.max_outer_iters + 1):
        start_e = inc_e
        ti = time.perf_counter()
        order = impact_order(model, inc)
        blocks = [order[b:b + k] for b in range(0, n, k)]
        accepted = 0
        backend_time = 0.0
        for bi, block in enumerate(blocks):
            block = sorted(block)
            sub = _subproblem(h, J, model.offset, inc, block)
            tb = time.perf_counter()
            try:
                ss = params.backend.sample(sub, cfg.derive(it, bi), initial=inc[block])
            except BackendError as exc:
                raise BackendError(f"outer iteration {it}, block {bi}: {exc}") from exc
            backend_time += time.perf_counter() - tb
            cand = inc.copy()
            cand[block] = ss.states[0]
            cand_e = energy(model, cand)
            if cand_e <= inc_e:
                inc, inc_e = cand, cand_e
                accepted += 1
        tabu_x, tabu_e = tabu_search(model, cfg.derive(it), inc).first
        if tabu_e <= inc_e:
            inc, inc_e = tabu_x, tabu_e
        improved = inc_e < start_e - 1e-12
        stall = 0 if improved else stall + 1
        trace.append(iteration=it, blocks=len(blocks), accepted_blocks=accepted,
                     best_energy=inc_e, improved=improved,
                     classical_time=time.perf_counter() - ti - backend_time, backend_time=backend_time,
                     elapsed=time.perf_counter() - t0)
        if stall >= params.stall_limit:
            trace.meta["stop"] = "stall"
            break
    else:
        trace.meta["stop"] = "max_outer_iters"
    return inc, inc_e, trace


def sample_with_capacity(model: QuboModel, backend: Sampler, cfg: SamplerConfig, subqubo_size: int | None = None):
    """Sample directly when the backend can take the model, else partition.

    Returns (assignment, energy).
    """
    if backend.max_vars is None or model.num_vars <= backend.max_vars:
        return backend.sample(model, cfg).first
    size = subqubo_size or backend.max_vars
    x, e, _ = solve_partitioned(model, PartitionParams(subqubo_size=size, backend=backend, seed=cfg.seed,
                                                       sampler_config=cfg))
    return x, e
