"""Direct-loop evaluation of the cell formation cost and exhaustive search over (x, y)."""
import itertools

import numpy as np


def cost_loops(inst, x, y):
    P, M, R = inst.num_parts, inst.num_machines, inst.cells
    total = 0.0
    for i in range(P):
        for j in range(M):
            for k in range(R):
                total += inst.c[i] * inst.v[i] * inst.o[i, j] * inst.a[i, j] * x[i][k] * (1 - y[j][k])
                total += inst.u[i, j] * inst.v[i] * (1 - inst.a[i, j]) * x[i][k] * y[j][k]
    return total


def one_hot(choice, width):
    out = np.zeros((len(choice), width))
    out[np.arange(len(choice)), list(choice)] = 1
    return out


def best_x_cost(inst, y):
    """Minimum over integral part placements; the cost is linear in x so a vertex is optimal."""
    return min(cost_loops(inst, one_hot(px, inst.cells), y)
               for px in itertools.product(range(inst.cells), repeat=inst.num_parts))


def exhaustive(inst):
    return min(best_x_cost(inst, one_hot(my, inst.cells))
               for my in itertools.product(range(inst.cells), repeat=inst.num_machines))


def random_instance(rng, parts, machines, cells):
    from hyq.cellform import CellFormationInstance

    a = (rng.random((parts, machines)) < 0.4).astype(float)
    for i in range(parts):
        if not a[i].any():
            a[i, rng.integers(machines)] = 1.0
    return CellFormationInstance(rng.integers(1, 11, parts), rng.integers(1, 11, parts),
                                 rng.integers(1, 11, (parts, machines)), rng.integers(1, 11, (parts, machines)),
                                 a, cells)
