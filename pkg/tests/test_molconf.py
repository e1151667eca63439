import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hyq.molconf import (ConformationInstance, Lattice, Molecule, bond_potential, build_conformation_qubo, butane,
                         decode_conformation, enumerate_placements, lj_potential, objective_qubo,
                         pair_energy_tensor, placement_bits, placement_energy, unit_instance)
from hyq.qubo import safe_penalty_weight
from hyq.samplers import brute_force


def test_lj_zero_crossing_and_minimum():
    assert lj_potential(1.0, 1.0, 1.0) == pytest.approx(0.0)
    assert lj_potential(2.5, 1.3, 2 ** (1 / 6) * 1.3) == pytest.approx(-2.5)
    assert lj_potential(0.06, 3.6, 3.6) == pytest.approx(0.0, abs=1e-15)


def test_lj_rejects_non_positive_distance():
    with pytest.raises(ValueError):
        lj_potential(1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        lj_potential(1.0, 1.0, np.array([1.0, -1.0]))


def test_bond_potential_values():
    assert bond_potential(3.0, 1.5, 1.5) == 0.0
    assert bond_potential(1.0, 2.0, 1.5) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        bond_potential(0.0, 1.0, 1.0)


@given(st.floats(0.1, 5), st.floats(0.5, 3), st.floats(0, 0.49))
def test_bond_potential_symmetric(beta, lb, frac):
    d = frac * lb
    assert bond_potential(beta, lb + d, lb) == pytest.approx(bond_potential(beta, lb - d, lb))


def test_lattice_geometry():
    lat = Lattice(3, 1.5)
    assert lat.num_sites == 27
    R = lat.distances
    assert np.allclose(R, R.T) and np.all(np.diag(R) == 0)
    assert R[0, 1] == pytest.approx(1.5)
    assert R.max() == pytest.approx(1.5 * 2 * np.sqrt(3))


def test_bond_only_pair_at_bond_length_is_zero():
    inst = ConformationInstance(Lattice(2, 1.0), Molecule(2, (1.0,), epsilon=0.0, beta=4.0))
    U = pair_energy_tensor(inst)
    R = inst.lattice.distances
    j, l = np.argwhere(np.isclose(R, 1.0))[0]
    assert U[0, j, 1, l] == 0.0


def test_tensor_symmetry_and_diagonal():
    U = pair_energy_tensor(unit_instance(3, 2))
    assert np.allclose(U, U.transpose(2, 3, 0, 1))
    for j in range(8):
        assert np.all(U[:, j, :, j] == 0.0)


def test_ordered_sum_is_twice_unordered():
    inst = unit_instance(3, 2)
    U = pair_energy_tensor(inst)
    p = [0, 1, 3]
    unordered = sum(U[i, p[i], k, p[k]] for i in range(3) for k in range(i + 1, 3))
    assert placement_energy(U, p) == pytest.approx(2 * unordered)
    assert objective_qubo(inst).energy(placement_bits(inst, p)) == pytest.approx(placement_energy(U, p))


def test_butane_fixture():
    inst = butane()
    assert pair_energy_tensor(inst).shape == (4, 64, 4, 64)
    assert inst.num_vars == 256
    assert inst.lattice.cell_length == 1.4 and inst.molecule.bonds == (1.5, 1.5, 1.5)


def test_variable_counts():
    assert build_conformation_qubo(unit_instance(3, 3))[0].num_vars == 81
    q, index = build_conformation_qubo(unit_instance(3, 2))
    assert q.num_vars == 24 and index.shape == (3, 8)


def test_penalty_below_safe_weight_rejected():
    inst = ConformationInstance(Lattice(2), Molecule(2, (1.0,)), penalty_A=1e-3)
    with pytest.raises(ValueError):
        build_conformation_qubo(inst)


def test_too_many_beads():
    with pytest.raises(ValueError):
        unit_instance(9, 2)


@pytest.mark.parametrize("beads", [2, 3])
def test_penalty_neutral_on_feasible_placements(beads):
    inst = unit_instance(beads, 2)
    q, _ = build_conformation_qubo(inst)
    U = pair_energy_tensor(inst)
    for p in itertools.islice(itertools.permutations(range(8), beads), 0, None, 7):
        assert q.energy(placement_bits(inst, p)) == pytest.approx(placement_energy(U, p), abs=1e-9)


def test_ground_state_is_feasible_and_matches_oracle():
    inst = unit_instance(3, 2)
    q, _ = build_conformation_qubo(inst)
    x, e = brute_force(q).first
    rep = decode_conformation(inst, x)
    assert rep.feasible
    oracle, _ = enumerate_placements(inst)
    assert e == pytest.approx(oracle) and rep.objective == pytest.approx(oracle)
    assert oracle == pytest.approx(-0.875)


def test_ground_state_bonds_at_nearest_lattice_distance():
    inst = ConformationInstance(Lattice(2, 1.0), Molecule(3, (1.2, 1.2), beta=100.0))
    q, _ = build_conformation_qubo(inst)
    rep = decode_conformation(inst, brute_force(q).first[0])
    R = inst.lattice.distances
    nearest = np.unique(R[R > 0])[np.argmin(np.abs(np.unique(R[R > 0]) - 1.2))]
    assert rep.feasible
    for i in range(2):
        assert R[rep.sites[i][0], rep.sites[i + 1][0]] == pytest.approx(nearest)


def test_decode_flags():
    inst = unit_instance(2, 2)
    ok = decode_conformation(inst, placement_bits(inst, [0, 1]))
    assert ok.feasible and ok.site_conflicts == [] and ok.placement() == [0, 1]
    bad = decode_conformation(inst, placement_bits(inst, [3, 3]))
    assert not bad.feasible and bad.site_conflicts == [3]
    empty = decode_conformation(inst, np.zeros(16))
    assert empty.unplaced == [0, 1] and empty.placement() is None
    with pytest.raises(ValueError):
        decode_conformation(inst, np.zeros(5))


def test_larger_lattice_never_worse():
    small, _ = enumerate_placements(unit_instance(3, 2))
    large, _ = enumerate_placements(unit_instance(3, 3))
    assert large <= small + 1e-12


def test_instance_json_round_trip():
    inst = butane()
    again = ConformationInstance.from_json(json.loads(json.dumps(inst.to_json())))
    assert again == inst
    table = ConformationInstance(Lattice(2), Molecule(2, (1.0,), epsilon=((0, 1.0), (1.0, 0)), sigma=1.0))
    assert ConformationInstance.from_json(json.loads(json.dumps(table.to_json()))) == table


def test_default_beta_scales_with_lj():
    inst = unit_instance(3, 2)
    r = np.unique(inst.lattice.distances[inst.lattice.distances > 0])
    assert inst.beta == pytest.approx(10 * np.abs(lj_potential(1.0, 1.0, r)).max())
    q, _ = build_conformation_qubo(inst)
    assert safe_penalty_weight(objective_qubo(inst)) > 0
