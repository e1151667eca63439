"""Classical QUBO samplers behind a common ``sample`` contract.

Every backend returns a :class:`~hyq.qubo.SampleSet` whose energies are exact
re-evaluations against the input model, and is deterministic given the model
and ``SamplerConfig.seed``.
"""
from __future__ import annotations

import json
import os
import urllib.error
import urllib.request
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import _kernels
from .errors import BackendError, CapacityError, DimensionError
from .qubo import QuboModel, SampleSet

BRUTE_FORCE_CAP = 24
REMOTE_URL_ENV = "HYQ_REMOTE_SAMPLER_URL"


@dataclass(frozen=True)
class SamplerConfig:
    num_reads: int = 1000
    seed: int = 0
    sa_sweeps: int = 1000
    sa_beta_initial: float = 0.1
    sa_beta_final: float = 10.0
    tabu_tenure: int = 20
    tabu_max_no_improve: int = 200

    def __post_init__(self):
        for name in ("num_reads", "sa_sweeps", "tabu_tenure", "tabu_max_no_improve"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not 0 < self.sa_beta_initial < self.sa_beta_final:
            raise ValueError("need 0 < sa_beta_initial < sa_beta_final")

    def derive(self, *keys: int) -> "SamplerConfig":
        """Config with a seed derived from this one and ``keys``."""
        ss = np.random.SeedSequence([self.seed, *keys])
        return replace(self, seed=int(ss.generate_state(1, dtype=np.uint64)[0]))


def read_seeds(seed: int, num_reads: int) -> np.ndarray:
    """One 32-bit seed per read, all derived from ``seed``."""
    ss = np.random.SeedSequence(seed)
    return ss.generate_state(num_reads, dtype=np.uint32).astype(np.int64)


def brute_force(model: QuboModel, keep: int = 1000, cap: int = BRUTE_FORCE_CAP) -> SampleSet:
    """Enumerate all 2**n assignments; keep the ``keep`` lowest-energy ones."""
    n = model.num_vars
    if n > cap:
        raise CapacityError(f"brute force limited to {cap} variables, model has {n}")
    if n == 0:
        return SampleSet.from_states(model, np.zeros((1, 0), dtype=np.int8))
    h, J = model.dense
    total = 1 << n
    chunk = min(total, 1 << 20)
    best_t = np.zeros(0, dtype=np.int64)
    best_e = np.zeros(0)
    for start in range(0, total, chunk):
        e = _kernels.gray_energies(h, J, start, chunk)
        t = np.arange(start, start + chunk, dtype=np.int64)
        if len(e) > keep:
            idx = np.argpartition(e, keep - 1)[:keep]
            e, t = e[idx], t[idx]
        best_e = np.concatenate([best_e, e])
        best_t = np.concatenate([best_t, t])
        if len(best_e) > keep:
            idx = np.argpartition(best_e, keep - 1)[:keep]
            best_e, best_t = best_e[idx], best_t[idx]
    g = best_t ^ (best_t >> 1)
    states = ((g[:, None] >> np.arange(n)) & 1).astype(np.int8)
    return SampleSet.from_states(model, states, info={"sampler": "bruteforce"})


def _beta_schedule(cfg: SamplerConfig) -> np.ndarray:
    if cfg.sa_sweeps == 1:
        return np.array([cfg.sa_beta_final])
    return np.geomspace(cfg.sa_beta_initial, cfg.sa_beta_final, cfg.sa_sweeps)


def simulated_anneal(model: QuboModel, cfg: SamplerConfig = SamplerConfig()) -> SampleSet:
    if model.num_vars == 0:
        return SampleSet.from_states(model, np.zeros((1, 0), dtype=np.int8))
    h, J = model.dense
    states = _kernels.anneal_reads(h, J, _beta_schedule(cfg), read_seeds(cfg.seed, cfg.num_reads))
    return SampleSet.from_states(model, states, info={"sampler": "sa"})


def tabu_search(model: QuboModel, cfg: SamplerConfig, initial) -> SampleSet:
    x0 = np.asarray(initial, dtype=np.int8).ravel()
    if x0.shape[0] != model.num_vars:
        raise DimensionError(f"initial assignment has length {x0.shape[0]}, model has {model.num_vars}")
    if model.num_vars == 0:
        return SampleSet.from_states(model, x0.reshape(1, 0))
    h, J = model.dense
    tenure = min(cfg.tabu_tenure, model.num_vars - 1)
    best_x, _, final_x = _kernels.tabu_walk(h, J, x0, tenure, cfg.tabu_max_no_improve, _tabu_iter_cap(cfg, model))
    return SampleSet.from_states(model, np.stack([best_x, final_x]), info={"sampler": "tabu"})


def _tabu_iter_cap(cfg: SamplerConfig, model: QuboModel) -> int:
    return 100 * cfg.tabu_max_no_improve + 10 * model.num_vars


class Sampler:
    """Backend contract: ``sample(model, config, initial) -> SampleSet``.

    ``max_vars`` is the largest model the backend accepts directly (None for
    no limit); hybrid solvers partition larger models.
    """

    name = "base"
    max_vars: int | None = None

    def sample(self, model: QuboModel, config: SamplerConfig | None = None, initial=None) -> SampleSet:
        raise NotImplementedError


class BruteForceSampler(Sampler):
    name = "bruteforce"

    def __init__(self, cap: int = BRUTE_FORCE_CAP, keep: int | None = None):
        self.max_vars = cap
        self.keep = keep

    def sample(self, model, config=None, initial=None):
        keep = self.keep or (config.num_reads if config else 1000)
        return brute_force(model, keep=keep, cap=self.max_vars)


class SimulatedAnnealingSampler(Sampler):
    name = "sa"

    def sample(self, model, config=None, initial=None):
        return simulated_anneal(model, config or SamplerConfig())


class TabuSampler(Sampler):
    """Tabu search from ``initial`` (or all-zeros) plus random restarts."""

    name = "tabu"

    def __init__(self, restarts: int | None = None):
        self.restarts = restarts

    def sample(self, model, config=None, initial=None):
        cfg = config or SamplerConfig()
        n = model.num_vars
        if n == 0:
            return SampleSet.from_states(model, np.zeros((1, 0), dtype=np.int8))
        reads = self.restarts if self.restarts is not None else min(cfg.num_reads, 64)
        x0 = np.zeros(n, dtype=np.int8) if initial is None else np.asarray(initial, dtype=np.int8)
        starts = np.vstack([x0[None, :], _kernels.random_starts(n, read_seeds(cfg.seed, max(reads - 1, 0)))])
        h, J = model.dense
        tenure = min(cfg.tabu_tenure, n - 1)
        states = _kernels.tabu_restarts(h, J, starts, tenure, cfg.tabu_max_no_improve, _tabu_iter_cap(cfg, model))
        return SampleSet.from_states(model, states, info={"sampler": "tabu"})


class RemoteSampler(Sampler):
    """Posts the model and config as JSON to an HTTP sampling service.

    Request body: ``{"qubo": <qubo json>, "config": <config json>}``; the
    reply must be ``{"samples": [{"bits", "energy", "multiplicity"}, ...]}``.
    Energies in the reply are ignored and recomputed locally.
    """

    name = "remote"

    def __init__(self, url: str | None = None, timeout: float = 60.0, max_vars: int | None = None):
        self.url = url or os.environ.get(REMOTE_URL_ENV)
        if not self.url:
            raise BackendError(f"no remote sampler URL given and {REMOTE_URL_ENV} is unset")
        self.timeout = timeout
        self.max_vars = max_vars

    def sample(self, model, config=None, initial=None):
        cfg = config or SamplerConfig()
        body = json.dumps({"qubo": model.to_json(), "config": asdict(cfg)}).encode()
        req = urllib.request.Request(self.url, data=body, headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                if resp.status != 200:
                    raise BackendError(f"remote sampler returned HTTP {resp.status}")
                payload = json.loads(resp.read().decode())
        except urllib.error.HTTPError as exc:
            raise BackendError(f"remote sampler returned HTTP {exc.code}") from exc
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            raise BackendError(f"remote sampler unreachable: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise BackendError("remote sampler sent invalid JSON") from exc
        try:
            rows = payload["samples"]
            states = np.array([r["bits"] for r in rows], dtype=np.int8).reshape(len(rows), model.num_vars)
            counts = np.array([int(r.get("multiplicity", 1)) for r in rows], dtype=np.int64)
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed remote reply: {exc}") from exc
        if len(rows) == 0:
            raise BackendError("remote sampler returned no samples")
        return SampleSet.from_states(model, states, counts, info={"sampler": "remote"})


BACKENDS = {
    "bruteforce": BruteForceSampler,
    "sa": SimulatedAnnealingSampler,
    "tabu": TabuSampler,
    "remote": RemoteSampler,
}


def get_backend(name: str, **kwargs) -> Sampler:
    try:
        return BACKENDS[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; choose from {sorted(BACKENDS)}") from None
