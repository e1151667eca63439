"""Compiled inner loops for the samplers.

All kernels work on (h, J) with J symmetric and zero on the diagonal, so the
energy change of flipping bit i is (1 - 2 x_i) * (h_i + J[i] @ x).
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _local_fields(h, J, x):
    n = h.shape[0]
    f = h.copy()
    for i in range(n):
        if x[i]:
            for j in range(n):
                f[j] += J[j, i]
    return f


@njit(cache=True)
def _apply_flip(J, x, f, i):
    n = x.shape[0]
    if x[i]:
        x[i] = 0
        for j in range(n):
            f[j] -= J[j, i]
    else:
        x[i] = 1
        for j in range(n):
            f[j] += J[j, i]


@njit(cache=True)
def anneal_reads(h, J, betas, read_seeds):
    """Single-flip Metropolis from a random start, one row per read."""
    n = h.shape[0]
    reads = read_seeds.shape[0]
    out = np.zeros((reads, n), dtype=np.int8)
    for r in range(reads):
        np.random.seed(read_seeds[r])
        x = np.zeros(n, dtype=np.int8)
        for i in range(n):
            if np.random.random() < 0.5:
                x[i] = 1
        f = _local_fields(h, J, x)
        for s in range(betas.shape[0]):
            beta = betas[s]
            for i in range(n):
                delta = f[i] if x[i] == 0 else -f[i]
                if delta <= 0.0 or np.random.random() < np.exp(-beta * delta):
                    _apply_flip(J, x, f, i)
        out[r] = x
    return out


@njit(cache=True)
def tabu_walk(h, J, x0, tenure, max_no_improve, max_iters):
    """Best-improvement single-flip tabu search.

    A move is tabu if the variable was flipped within the last ``tenure``
    iterations, unless it produces a new global best.  Ties go to the lowest
    index.  Returns (best state, best energy delta vs x0, final state).
    """
    n = h.shape[0]
    x = x0.copy()
    f = _local_fields(h, J, x)
    last = np.full(n, -(tenure + 1), dtype=np.int64)
    cur = 0.0
    best = 0.0
    best_x = x.copy()
    no_improve = 0
    it = 0
    while no_improve < max_no_improve and it < max_iters:
        choice = -1
        choice_delta = np.inf
        for i in range(n):
            delta = f[i] if x[i] == 0 else -f[i]
            tabu = it - last[i] <= tenure
            if tabu and not (cur + delta < best - 1e-12):
                continue
            if delta < choice_delta:
                choice_delta = delta
                choice = i
        if choice < 0:
            break
        _apply_flip(J, x, f, choice)
        last[choice] = it
        cur += choice_delta
        it += 1
        if cur < best - 1e-12:
            best = cur
            best_x[:] = x
            no_improve = 0
        else:
            no_improve += 1
    return best_x, best, x


@njit(cache=True)
def tabu_restarts(h, J, starts, tenure, max_no_improve, max_iters):
    reads = starts.shape[0]
    n = h.shape[0]
    out = np.zeros((reads, n), dtype=np.int8)
    for r in range(reads):
        bx, _, _ = tabu_walk(h, J, starts[r], tenure, max_no_improve, max_iters)
        out[r] = bx
    return out


@njit(cache=True)
def random_starts(n, read_seeds):
    reads = read_seeds.shape[0]
    out = np.zeros((reads, n), dtype=np.int8)
    for r in range(reads):
        np.random.seed(read_seeds[r])
        for i in range(n):
            if np.random.random() < 0.5:
                out[r, i] = 1
    return out


@njit(cache=True)
def gray_energies(h, J, start, count):
    """Energies (relative to offset) of Gray-code states start .. start+count-1.

    State t has bits of t ^ (t >> 1); consecutive states differ in one bit.
    """
    n = h.shape[0]
    out = np.empty(count, dtype=np.float64)
    g = start ^ (start >> 1)
    x = np.zeros(n, dtype=np.int8)
    e = 0.0
    for i in range(n):
        if (g >> i) & 1:
            x[i] = 1
    f = h.copy()
    for i in range(n):
        if x[i]:
            e += h[i]
            for j in range(n):
                f[j] += J[j, i]
                if j < i and x[j]:
                    e += J[i, j]
    out[0] = e
    for k in range(1, count):
        t = start + k
        # bit flipped between t-1 and t is the lowest set bit of t
        i = 0
        while not (t >> i) & 1:
            i += 1
        delta = f[i] if x[i] == 0 else -f[i]
        e += delta
        _apply_flip(J, x, f, i)
        out[k] = e
    return out
