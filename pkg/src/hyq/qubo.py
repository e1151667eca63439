"""Sparse QUBO models, energy evaluation and constraint penalties.

A model is the pseudo-Boolean function

    E(x) = offset + sum_i linear[i] x_i + sum_{i<j} quadratic[i, j] x_i x_j

over bits x_i in {0, 1}.  Because x_i**2 == x_i, diagonal terms never appear
in ``quadratic``; builders fold them into ``linear``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class QuboModel:
    num_vars: int
    linear: Mapping[int, float] = field(default_factory=dict)
    quadratic: Mapping[tuple[int, int], float] = field(default_factory=dict)
    offset: float = 0.0
    labels: Mapping[int, str] | None = None

    def __post_init__(self):
        if self.num_vars < 0:
            raise ValueError("num_vars must be non-negative")
        for i, v in self.linear.items():
            if not 0 <= i < self.num_vars:
                raise IndexError(f"linear index {i} out of range")
            if not math.isfinite(v):
                raise ValueError(f"non-finite linear coefficient at {i}")
        for (i, j), v in self.quadratic.items():
            if not (0 <= i < j < self.num_vars):
                raise IndexError(f"quadratic key {(i, j)} must satisfy 0 <= i < j < n")
            if not math.isfinite(v):
                raise ValueError(f"non-finite quadratic coefficient at {(i, j)}")
        if not math.isfinite(self.offset):
            raise ValueError("non-finite offset")

    @classmethod
    def from_terms(
        cls,
        num_vars: int,
        linear: Mapping[int, float] | None = None,
        quadratic: Mapping[tuple[int, int], float] | None = None,
        offset: float = 0.0,
        labels: Mapping[int, str] | None = None,
    ) -> "QuboModel":
        """Normalize arbitrary terms: swap i>j keys, fold i==j into linear, drop zeros."""
        lin: dict[int, float] = {}
        quad: dict[tuple[int, int], float] = {}
        for i, v in (linear or {}).items():
            lin[int(i)] = lin.get(int(i), 0.0) + float(v)
        for (i, j), v in (quadratic or {}).items():
            i, j = int(i), int(j)
            if i == j:
                lin[i] = lin.get(i, 0.0) + float(v)
                continue
            key = (i, j) if i < j else (j, i)
            quad[key] = quad.get(key, 0.0) + float(v)
        lin = {i: v for i, v in sorted(lin.items()) if v != 0.0}
        quad = {k: v for k, v in sorted(quad.items()) if v != 0.0}
        return cls(num_vars, lin, quad, float(offset), dict(labels) if labels else None)

    @classmethod
    def from_dense(cls, h: np.ndarray, J: np.ndarray, offset: float = 0.0) -> "QuboModel":
        """Build from a linear vector and a matrix whose upper triangle holds the couplers."""
        n = len(h)
        lin = {i: float(h[i]) for i in range(n) if h[i] != 0.0}
        iu, ju = np.nonzero(np.triu(J, 1))
        quad = {(int(i), int(j)): float(J[i, j]) for i, j in zip(iu, ju)}
        return cls(n, lin, quad, float(offset))

    @cached_property
    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        """(h, Jsym): linear vector and symmetric coupling matrix with zero diagonal."""
        n = self.num_vars
        h = np.zeros(n)
        J = np.zeros((n, n))
        for i, v in self.linear.items():
            h[i] = v
        if self.quadratic:
            keys = np.array(list(self.quadratic.keys()), dtype=np.int64)
            vals = np.fromiter(self.quadratic.values(), dtype=float, count=len(self.quadratic))
            J[keys[:, 0], keys[:, 1]] = vals
            J[keys[:, 1], keys[:, 0]] = vals
        return h, J

    def energy(self, a) -> float:
        return energy(self, a)

    def energies(self, states: np.ndarray) -> np.ndarray:
        """Vectorized energy over the rows of a 2-D 0/1 array."""
        states = np.asarray(states, dtype=float)
        if states.ndim != 2 or states.shape[1] != self.num_vars:
            raise DimensionError(f"expected (k, {self.num_vars}) states, got {states.shape}")
        h, J = self.dense
        return self.offset + states @ h + 0.5 * np.einsum("ki,ij,kj->k", states, J, states)

    def __add__(self, other: "QuboModel") -> "QuboModel":
        if not isinstance(other, QuboModel):
            return NotImplemented
        if other.num_vars != self.num_vars:
            raise DimensionError("cannot add models of different sizes")
        lin = dict(self.linear)
        for i, v in other.linear.items():
            lin[i] = lin.get(i, 0.0) + v
        quad = dict(self.quadratic)
        for k, v in other.quadratic.items():
            quad[k] = quad.get(k, 0.0) + v
        return QuboModel.from_terms(self.num_vars, lin, quad, self.offset + other.offset, self.labels)

    def scaled(self, factor: float) -> "QuboModel":
        return QuboModel.from_terms(
            self.num_vars,
            {i: factor * v for i, v in self.linear.items()},
            {k: factor * v for k, v in self.quadratic.items()},
            factor * self.offset,
            self.labels,
        )

    def to_json(self) -> dict:
        out = {
            "num_vars": self.num_vars,
            "offset": self.offset,
            "linear": [[i, v] for i, v in sorted(self.linear.items())],
            "quadratic": [[i, j, v] for (i, j), v in sorted(self.quadratic.items())],
        }
        out["labels"] = {str(k): v for k, v in sorted(self.labels.items())} if self.labels else {}
        return out

    @classmethod
    def from_json(cls, data: dict) -> "QuboModel":
        labels = {int(k): v for k, v in (data.get("labels") or {}).items()}
        return cls.from_terms(
            int(data["num_vars"]),
            {int(i): v for i, v in data.get("linear", [])},
            {(int(i), int(j)): v for i, j, v in data.get("quadratic", [])},
            float(data.get("offset", 0.0)),
            labels or None,
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _as_bits(model: QuboModel, a) -> np.ndarray:
    x = np.asarray(a, dtype=float).ravel()
    if x.shape[0] != model.num_vars:
        raise DimensionError(f"assignment has length {x.shape[0]}, model has {model.num_vars} vars")
    if not np.all((x == 0.0) | (x == 1.0)):
        raise ValueError("assignment entries must be 0 or 1")
    return x


def energy(model: QuboModel, a: Sequence[int] | np.ndarray) -> float:
    x = _as_bits(model, a)
    h, J = model.dense
    return float(model.offset + h @ x + 0.5 * (x @ J @ x))


def _check_group(model: QuboModel, group: Iterable[int]) -> list[int]:
    g = [int(v) for v in group]
    for v in g:
        if not 0 <= v < model.num_vars:
            raise IndexError(f"group index {v} out of range")
    if len(set(g)) != len(g):
        raise ValueError("group contains duplicate indices")
    return g


def exact_one_terms(group: Sequence[int], weight: float):
    """Expansion of weight * (sum(x_g) - 1)**2 as (linear, quadratic, offset)."""
    lin = {v: -weight for v in group}
    quad = {}
    for a in range(len(group)):
        for b in range(a + 1, len(group)):
            quad[(group[a], group[b])] = 2.0 * weight
    return lin, quad, weight


def add_exact_one_penalty(model: QuboModel, group: Sequence[int], weight: float) -> QuboModel:
    if weight <= 0:
        raise ValueError("penalty weight must be positive")
    g = _check_group(model, group)
    if not g:
        raise ValueError("exact-one penalty needs a non-empty group")
    lin, quad, off = exact_one_terms(g, weight)
    return model + QuboModel.from_terms(model.num_vars, lin, quad, off)


def add_at_most_one_penalty(model: QuboModel, group: Sequence[int], weight: float) -> QuboModel:
    """Add weight * sum_{u != v} x_u x_v, stored as 2*weight on each pair u < v."""
    if weight <= 0:
        raise ValueError("penalty weight must be positive")
    g = _check_group(model, group)
    if len(g) < 2:
        return model
    quad = {}
    for a in range(len(g)):
        for b in range(a + 1, len(g)):
            quad[(g[a], g[b])] = 2.0 * weight
    return model + QuboModel.from_terms(model.num_vars, {}, quad, 0.0)


def safe_penalty_weight(model: QuboModel) -> float:
    """A weight exceeding the model's whole attainable energy range."""
    return 1.0 + sum(abs(v) for v in model.linear.values()) + sum(abs(v) for v in model.quadratic.values())


def clamp(model: QuboModel, fixed: Mapping[int, int]) -> tuple[QuboModel, list[int]]:
    """Substitute fixed bits and return the model over the remaining variables.

    The returned index map lists, for each new variable, its index in the
    original model.
    """
    for i, b in fixed.items():
        if not 0 <= i < model.num_vars:
            raise IndexError(f"fixed index {i} out of range")
        if b not in (0, 1):
            raise ValueError(f"fixed value for {i} must be 0 or 1")
    free = [i for i in range(model.num_vars) if i not in fixed]
    new_index = {old: new for new, old in enumerate(free)}
    offset = model.offset
    lin: dict[int, float] = {}
    for i, v in model.linear.items():
        if i in fixed:
            offset += v * fixed[i]
        else:
            lin[new_index[i]] = lin.get(new_index[i], 0.0) + v
    quad: dict[tuple[int, int], float] = {}
    for (i, j), v in model.quadratic.items():
        fi, fj = i in fixed, j in fixed
        if fi and fj:
            offset += v * fixed[i] * fixed[j]
        elif fi:
            if fixed[i]:
                lin[new_index[j]] = lin.get(new_index[j], 0.0) + v
        elif fj:
            if fixed[j]:
                lin[new_index[i]] = lin.get(new_index[i], 0.0) + v
        else:
            quad[(new_index[i], new_index[j])] = v
    labels = None
    if model.labels:
        labels = {new_index[i]: s for i, s in model.labels.items() if i in new_index}
    return QuboModel.from_terms(len(free), lin, quad, offset, labels), free


def merge_assignment(num_vars: int, fixed: Mapping[int, int], index_map: Sequence[int], sub) -> np.ndarray:
    """Inverse of :func:`clamp`: rebuild a full assignment from a clamped one."""
    x = np.zeros(num_vars, dtype=np.int8)
    for i, b in fixed.items():
        x[i] = b
    sub = np.asarray(sub)
    if len(sub) != len(index_map):
        raise DimensionError("sub-assignment does not match index map")
    x[list(index_map)] = sub
    return x


@dataclass(frozen=True)
class SampleSet:
    """Distinct assignments sorted by (energy, bit vector)."""

    states: np.ndarray
    energies: np.ndarray
    counts: np.ndarray
    info: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_states(cls, model: QuboModel, states, counts=None, info=None) -> "SampleSet":
        """Deduplicate, re-evaluate energies exactly and sort."""
        states = np.asarray(states, dtype=np.int8)
        states = states.reshape(len(states) if states.ndim > 1 else -1, model.num_vars)
        if counts is None:
            counts = np.ones(len(states), dtype=np.int64)
        agg: dict[bytes, list] = {}
        for row, c in zip(states, counts):
            key = row.tobytes()
            if key in agg:
                agg[key][1] += int(c)
            else:
                agg[key] = [row, int(c)]
        rows = [v[0] for v in agg.values()]
        cnts = [v[1] for v in agg.values()]
        en = model.energies(np.stack(rows)).tolist() if rows else []
        order = sorted(range(len(rows)), key=lambda k: (en[k], tuple(rows[k].tolist())))
        if rows:
            st = np.stack([rows[k] for k in order]).astype(np.int8)
        else:
            st = np.zeros((0, model.num_vars), dtype=np.int8)
        return cls(st, np.array([en[k] for k in order], dtype=float),
                   np.array([cnts[k] for k in order], dtype=np.int64), dict(info or {}))

    def __len__(self) -> int:
        return len(self.energies)

    def __iter__(self):
        for s, e, c in zip(self.states, self.energies, self.counts):
            yield s, float(e), int(c)

    @property
    def first(self) -> tuple[np.ndarray, float]:
        return self.states[0].copy(), float(self.energies[0])

    def to_json(self) -> dict:
        return {"samples": [{"bits": s.tolist(), "energy": e, "multiplicity": c} for s, e, c in self]}
