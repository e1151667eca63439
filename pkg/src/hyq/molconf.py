"""Bead-chain conformation on a cubic lattice as a quadratic assignment QUBO.

Bead ``i`` on site ``j`` is variable ``i * N + j`` (bead-major).  Pair
energies combine a Lennard-Jones term between non-consecutive beads and a
harmonic bond term between consecutive ones.  The objective is the ordered
double sum over bead/site pairs, so every unordered pair is counted twice.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources

import numpy as np

from .qubo import QuboModel, exact_one_terms, safe_penalty_weight


def lj_potential(epsilon: float, sigma: float, r):
    """4 eps ((sigma/r)^12 - (sigma/r)^6); accepts scalars or arrays."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise ValueError("Lennard-Jones potential needs r > 0")
    s6 = (sigma / r_arr) ** 6
    out = 4.0 * epsilon * (s6 * s6 - s6)
    return float(out) if out.ndim == 0 else out


def bond_potential(beta: float, r, lb: float):
    """beta (r - lb)^2."""
    if beta <= 0:
        raise ValueError("bond penalty beta must be positive")
    out = beta * (np.asarray(r, dtype=float) - lb) ** 2
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Lattice:
    side: int
    cell_length: float = 1.0

    def __post_init__(self):
        if self.side < 1:
            raise ValueError("lattice side must be >= 1")
        if self.cell_length <= 0:
            raise ValueError("cell length must be positive")

    @property
    def num_sites(self) -> int:
        return self.side ** 3

    @cached_property
    def coords(self) -> np.ndarray:
        """Site coordinates, row-major: site (a*side + b)*side + c sits at (a, b, c) * cell."""
        g = np.arange(self.side)
        a, b, c = np.meshgrid(g, g, g, indexing="ij")
        return self.cell_length * np.stack([a.ravel(), b.ravel(), c.ravel()], axis=1).astype(float)

    @cached_property
    def distances(self) -> np.ndarray:
        d = self.coords[:, None, :] - self.coords[None, :, :]
        return np.sqrt((d * d).sum(-1))


@dataclass(frozen=True)
class Molecule:
    """Bead chain; ``epsilon``/``sigma`` are scalars or B x B symmetric tables."""

    beads: int
    bonds: tuple[float, ...]
    epsilon: float | tuple = 1.0
    sigma: float | tuple = 1.0
    beta: float | None = None

    def __post_init__(self):
        if self.beads < 1:
            raise ValueError("need at least one bead")
        if len(self.bonds) != max(self.beads - 1, 0):
            raise ValueError(f"{self.beads} beads need {self.beads - 1} bond lengths, got {len(self.bonds)}")
        if any(b <= 0 for b in self.bonds):
            raise ValueError("bond lengths must be positive")
        eps, sig = self.table("epsilon"), self.table("sigma")
        if np.any(eps < 0) or not np.allclose(eps, eps.T):
            raise ValueError("epsilon must be non-negative and symmetric")
        if np.any(sig <= 0) or not np.allclose(sig, sig.T):
            raise ValueError("sigma must be positive and symmetric")
        if self.beta is not None and self.beta <= 0:
            raise ValueError("beta must be positive")

    def table(self, name: str) -> np.ndarray:
        v = getattr(self, name)
        if np.ndim(v) == 0:
            return np.full((self.beads, self.beads), float(v))
        t = np.asarray(v, dtype=float)
        if t.shape != (self.beads, self.beads):
            raise ValueError(f"{name} table must be {self.beads} x {self.beads}")
        return t


@dataclass(frozen=True)
class ConformationInstance:
    lattice: Lattice
    molecule: Molecule
    penalty_A: float | None = None
    bonded_lj: bool = False

    def __post_init__(self):
        if self.lattice.num_sites < self.molecule.beads:
            raise ValueError(f"{self.molecule.beads} beads cannot fit on {self.lattice.num_sites} sites")
        if self.penalty_A is not None and self.penalty_A <= 0:
            raise ValueError("penalty weight A must be positive")

    @property
    def num_vars(self) -> int:
        return self.molecule.beads * self.lattice.num_sites

    def var(self, bead: int, site: int) -> int:
        return bead * self.lattice.num_sites + site

    @cached_property
    def beta(self) -> float:
        """Explicit beta, else 10 x the largest |LJ| over distinct-site distances."""
        if self.molecule.beta is not None:
            return float(self.molecule.beta)
        r = np.unique(self.lattice.distances[self.lattice.distances > 0])
        if r.size == 0:
            return 1.0
        eps, sig = self.molecule.table("epsilon"), self.molecule.table("sigma")
        B = self.molecule.beads
        worst = max((np.abs(lj_potential(eps[i, k], sig[i, k], r)).max()
                     for i in range(B) for k in range(B) if i != k), default=0.0)
        return 10.0 * worst if worst > 0 else 1.0

    def to_json(self) -> dict:
        m = self.molecule
        lj = {"epsilon": _tab_out(m.epsilon), "sigma": _tab_out(m.sigma)}
        return {"lattice": {"side": self.lattice.side, "cell_length": self.lattice.cell_length},
                "beads": m.beads, "bonds": list(m.bonds), "lj": lj, "beta": m.beta,
                "penalty_A": self.penalty_A}

    @classmethod
    def from_json(cls, data: dict) -> "ConformationInstance":
        lj = data.get("lj", {})
        mol = Molecule(int(data["beads"]), tuple(float(b) for b in data.get("bonds", [])),
                       _tab_in(lj.get("epsilon", 1.0)), _tab_in(lj.get("sigma", 1.0)), data.get("beta"))
        lat = Lattice(int(data["lattice"]["side"]), float(data["lattice"].get("cell_length", 1.0)))
        return cls(lat, mol, data.get("penalty_A"))


def _tab_out(v):
    return v if np.ndim(v) == 0 else [list(r) for r in v]


def _tab_in(v):
    return float(v) if np.ndim(v) == 0 else tuple(tuple(float(x) for x in r) for r in v)


def unit_instance(beads: int, side: int) -> ConformationInstance:
    """Unit LJ parameters, unit cell and unit bonds."""
    return ConformationInstance(Lattice(side, 1.0), Molecule(beads, (1.0,) * (beads - 1)))


def butane() -> ConformationInstance:
    """Four-carbon chain on a 4x4x4 lattice (cell 1.4 A, eps 0.06, sigma 3.6, bond 1.5 A)."""
    text = resources.files("hyq.data").joinpath("butane.json").read_text()
    return ConformationInstance.from_json(json.loads(text))


def pair_energy_tensor(inst: ConformationInstance) -> np.ndarray:
    """U[i, j, k, l]: energy of bead i on site j together with bead k on site l."""
    B, N = inst.molecule.beads, inst.lattice.num_sites
    R = inst.lattice.distances
    off = ~np.eye(N, dtype=bool)
    Rsafe = np.where(off, R, 1.0)
    eps, sig = inst.molecule.table("epsilon"), inst.molecule.table("sigma")
    U = np.zeros((B, N, B, N))
    for i in range(B):
        for k in range(i + 1, B):
            if k == i + 1:
                blk = bond_potential(inst.beta, R, inst.molecule.bonds[i])
                if inst.bonded_lj:
                    blk = blk + lj_potential(eps[i, k], sig[i, k], Rsafe)
            else:
                blk = lj_potential(eps[i, k], sig[i, k], Rsafe)
            blk = np.where(off, blk, 0.0)
            U[i, :, k, :] = blk
            U[k, :, i, :] = blk.T
    return U


def objective_matrix(inst: ConformationInstance) -> np.ndarray:
    B, N = inst.molecule.beads, inst.lattice.num_sites
    return pair_energy_tensor(inst).reshape(B * N, B * N)


def objective_qubo(inst: ConformationInstance) -> QuboModel:
    M = objective_matrix(inst)
    return QuboModel.from_dense(np.zeros(len(M)), M + M.T)


def build_conformation_qubo(inst: ConformationInstance):
    """Returns (QuboModel, index) where index[i, j] is the variable of bead i on site j."""
    B, N = inst.molecule.beads, inst.lattice.num_sites
    obj = objective_qubo(inst)
    safe = safe_penalty_weight(obj)
    A = safe if inst.penalty_A is None else float(inst.penalty_A)
    if A < safe:
        raise ValueError(f"penalty weight A={A} is below the safe weight {safe}")
    h, J = obj.dense
    h = h.copy()
    J = J.copy()
    offset = 0.0
    index = np.arange(B * N).reshape(B, N)
    for i in range(B):
        lin, quad, off = exact_one_terms(list(index[i]), A)
        offset += off
        for v, c in lin.items():
            h[v] += c
        for (u, v), c in quad.items():
            J[u, v] += c
            J[v, u] += c
    for j in range(N):
        col = index[:, j]
        for a in range(B):
            for b in range(a + 1, B):
                J[col[a], col[b]] += 2.0 * A
                J[col[b], col[a]] += 2.0 * A
    return QuboModel.from_dense(h, J, offset), index


@dataclass
class ConformationReport:
    sites: list[list[int]]
    unplaced: list[int] = field(default_factory=list)
    multiply_placed: list[int] = field(default_factory=list)
    site_conflicts: list[int] = field(default_factory=list)
    bond_deviation: list[float | None] = field(default_factory=list)
    objective: float = 0.0

    @property
    def feasible(self) -> bool:
        return not (self.unplaced or self.multiply_placed or self.site_conflicts)

    def placement(self) -> list[int] | None:
        return [s[0] for s in self.sites] if self.feasible else None

    def to_json(self) -> dict:
        return {"sites": self.sites, "unplaced": self.unplaced, "multiply_placed": self.multiply_placed,
                "site_conflicts": self.site_conflicts, "bond_deviation": self.bond_deviation,
                "objective": self.objective, "feasible": self.feasible}


def decode_conformation(inst: ConformationInstance, a) -> ConformationReport:
    B, N = inst.molecule.beads, inst.lattice.num_sites
    x = np.asarray(a, dtype=np.int64).ravel()
    if x.shape[0] != B * N:
        raise ValueError(f"assignment has {x.shape[0]} bits, instance has {B * N} variables")
    grid = x.reshape(B, N)
    sites = [[int(j) for j in np.flatnonzero(grid[i])] for i in range(B)]
    occupancy = grid.sum(0)
    dev: list[float | None] = []
    for i in range(B - 1):
        if len(sites[i]) == 1 and len(sites[i + 1]) == 1:
            r = inst.lattice.distances[sites[i][0], sites[i + 1][0]]
            dev.append(float(abs(r - inst.molecule.bonds[i])))
        else:
            dev.append(None)
    M = objective_matrix(inst)
    xf = x.astype(float)
    return ConformationReport(
        sites=sites,
        unplaced=[i for i in range(B) if not sites[i]],
        multiply_placed=[i for i in range(B) if len(sites[i]) > 1],
        site_conflicts=[int(j) for j in np.flatnonzero(occupancy > 1)],
        bond_deviation=dev,
        objective=float(xf @ M @ xf),
    )


def placement_energy(U: np.ndarray, placement) -> float:
    """Ordered double-sum objective of a bead -> site placement."""
    p = list(placement)
    return float(sum(U[i, p[i], k, p[k]] for i in range(len(p)) for k in range(len(p))))


def enumerate_placements(inst: ConformationInstance, chunk: int = 200_000):
    """Exhaustive minimum over injective placements. Returns (energy, placement)."""
    B, N = inst.molecule.beads, inst.lattice.num_sites
    total = math.perm(N, B)
    if total > 50_000_000:
        raise ValueError(f"{total} placements is too many to enumerate")
    U = pair_energy_tensor(inst)
    best_e, best_p = math.inf, None
    it = itertools.permutations(range(N), B)
    while True:
        P = np.array(list(itertools.islice(it, chunk)), dtype=np.int64)
        if P.size == 0:
            break
        e = np.zeros(len(P))
        for i in range(B):
            for k in range(B):
                if i != k:
                    e += U[i, P[:, i], k, P[:, k]]
        m = int(np.argmin(e))
        if e[m] < best_e - 1e-12:
            best_e, best_p = float(e[m]), [int(v) for v in P[m]]
    return best_e, best_p


def placement_bits(inst: ConformationInstance, placement) -> np.ndarray:
    x = np.zeros(inst.num_vars, dtype=np.int8)
    for i, j in enumerate(placement):
        x[inst.var(i, j)] = 1
    return x
