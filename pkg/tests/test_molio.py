from __future__ import annotations


from hypothesis import given, settings, strategies as st
import numpy as np
import pytest

from confkit import toy
from confkit.molio import (
    Bond,
    Conformer,
    Ensemble,
    Molecule,
    MolIOError,
    Provenance,
    SDFError,
    XYZError,
    parse_sdf,
    parse_xyz,
    perceive_rings,
    read_sdf,
    read_xyz,
    write_sdf,
    write_xyz,
)

from conftest import FIXTURES


def bridge_oracle(molecule: Molecule) -> list[bool]:
    """Ring flag per bond: endpoints stay connected after deleting the bond."""
    flags = []
    for k, bond in enumerate(molecule.bonds):
        adj = {a: set() for a in range(molecule.n_atoms)}
        for m, other in enumerate(molecule.bonds):
            if m != k:
                adj[other.i].add(other.j)
                adj[other.j].add(other.i)
        seen, stack = {bond.i}, [bond.i]
        while stack:
            for v in adj[stack.pop()]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        flags.append(bond.j in seen)
    return flags


def test_methane_single_record():
    mol, ens = read_sdf(FIXTURES / "valid" / "methane.sdf")
    assert mol.n_atoms == 5 and len(mol.bonds) == 4
    assert mol.heavy_atom_count == 1
    assert len(ens) == 1
    assert ens[0].provenance is Provenance.EXTERNAL


def test_butane_three_records():
    mol, ens = read_sdf(FIXTURES / "valid" / "butane_3.sdf")
    assert len(ens) == 3
    assert mol.heavy_atom_count == 4
    assert ens.coordinates().shape == (3, 14, 3)


def test_counts_line_overstating_atoms():
    with pytest.raises(SDFError, match="malformed counts line"):
        read_sdf(FIXTURES / "malformed" / "counts_atom_short.sdf")


@pytest.mark.parametrize(
    "name, message",
    [
        ("v3000.sdf", "V3000"),
        ("bond_out_of_range.sdf", "out of range"),
        ("inconsistent_records.sdf", "inconsistent connectivity"),
        ("bad_counts.sdf", "malformed counts line"),
        ("bad_coordinate.sdf", "malformed atom line"),
        ("unknown_element.sdf", "Xx"),
        ("empty.sdf", "no records"),
        ("truncated.sdf", "truncated"),
        ("self_bond.sdf", "itself"),
    ],
)
def test_malformed_sdf(name, message):
    with pytest.raises(SDFError, match=message):
        read_sdf(FIXTURES / "malformed" / name)


@pytest.mark.parametrize(
    "name, message",
    [
        ("xyz_count_mismatch.xyz", "atom-count mismatch"),
        ("xyz_nonnumeric.xyz", "non-numeric"),
        ("xyz_element_mismatch.xyz", "element sequence"),
        ("xyz_bad_count.xyz", "atom-count line"),
        ("xyz_missing_rows.xyz", "ends early"),
    ],
)
def test_malformed_xyz(name, message):
    with pytest.raises(XYZError, match=message):
        read_xyz(FIXTURES / "malformed" / name)


def test_errors_are_value_errors():
    assert issubclass(SDFError, MolIOError) and issubclass(XYZError, ValueError)


def test_ethane_round_trip():
    mol, ens = read_sdf(FIXTURES / "valid" / "ethane_2.sdf")
    mol2, ens2 = parse_sdf(write_sdf(mol, ens))
    assert mol2.bonds == mol.bonds
    np.testing.assert_allclose(ens2.coordinates(), ens.coordinates(), atol=1e-4)


def test_round_trip_keeps_energy_and_flags(butane):
    conf = Conformer("butane", np.zeros((14, 3)) + np.arange(14)[:, None], 1.25, "energy", ("clash",))
    _, ens = parse_sdf(write_sdf(butane, Ensemble.of(butane, [conf])))
    assert ens[0].energy == 1.25
    assert ens[0].flags == ("clash",)
    assert ens[0].provenance is Provenance.EXTERNAL


def test_write_empty_ensemble_fails(butane):
    with pytest.raises(SDFError):
        write_sdf(butane, Ensemble.of(butane))


def test_write_mismatch_fails(butane):
    ethane = toy.molecule("ethane")
    ens = Ensemble.of(ethane, [Conformer("ethane", np.zeros((8, 3)))])
    with pytest.raises(SDFError, match="mismatch"):
        write_sdf(butane, ens)


def test_coordinate_field_width():
    water = toy.molecule("water")
    xyz = np.zeros((3, 3))
    xyz[0, 0] = 12345.6789
    text = write_sdf(water, Ensemble.of(water, [Conformer("water", xyz)])).decode()
    atom_line = text.splitlines()[4]
    assert atom_line[:10] == "12345.6789"
    assert parse_sdf(text)[1][0].coords[0, 0] == 12345.6789
    xyz[0, 0] = -12345.6789
    with pytest.raises(SDFError, match="field overflow"):
        write_sdf(water, Ensemble.of(water, [Conformer("water", xyz)]))


def test_v2000_columns(butane):
    text = (FIXTURES / "valid" / "butane_3.sdf").read_text().splitlines()
    assert text[3][0:3] == " 14" and text[3][3:6] == " 13"
    assert text[3].rstrip().endswith("V2000")
    assert text[4][31:34].strip() == "C"
    assert text.count("$$$$") == 3


def test_water_xyz():
    ens = read_xyz(FIXTURES / "valid" / "water_2.xyz")
    assert len(ens) == 2 and ens.n_atoms == 3


def test_xyz_trailing_blank_lines():
    ens = read_xyz(FIXTURES / "valid" / "water_trailing_blank.xyz")
    assert len(ens) == 2


def test_xyz_round_trip():
    ens = read_xyz(FIXTURES / "valid" / "hexane_2.xyz")
    again = parse_xyz(write_xyz(ens), ens.molecule_id)
    np.testing.assert_allclose(again.coordinates(), ens.coordinates(), atol=1e-8)


def test_rings_cyclohexane_and_butane():
    assert all(
        toy.molecule("cyclohexane").is_ring_bond(i, (i + 1) % 6) for i in range(6)
    )
    assert not any(toy.molecule("butane").ring_membership)


def test_rings_methylcyclopentane_against_oracle():
    mol = toy.molecule("methylcyclopentane")
    heavy = [b for b, ring in zip(mol.bonds, mol.ring_membership) if mol.heavy_mask[b.i] and mol.heavy_mask[b.j]]
    flags = [mol.ring_membership[mol.bond_index[b.key]] for b in heavy]
    assert sum(flags) == 5 and len(flags) - sum(flags) == 1
    assert list(mol.ring_membership) == bridge_oracle(mol)


@pytest.mark.parametrize("name", sorted(toy.SKELETONS))
def test_rings_match_bridge_oracle_on_bundled(name):
    mol = toy.molecule(name)
    assert list(mol.ring_membership) == bridge_oracle(mol)


@st.composite
def random_graphs(draw):
    n = draw(st.integers(2, 12))
    edges = {(draw(st.integers(0, i - 1)), i) for i in range(1, n)}
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=6))
    edges |= {(min(a, b), max(a, b)) for a, b in extra if a != b}
    return Molecule.from_graph("g", ["C"] * n, sorted(edges))


@given(random_graphs())
@settings(max_examples=150, deadline=None)
def test_rings_property(mol):
    assert list(perceive_rings(mol).ring_membership) == bridge_oracle(mol)


@given(
    st.sampled_from(["butane", "propanol", "propylbenzene", "cyclohexane"]),
    st.integers(1, 3),
    st.integers(0, 2**32 - 1),
)
@settings(max_examples=40, deadline=None)
def test_sdf_round_trip_property(name, count, seed):
    mol = toy.molecule(name)
    rng = np.random.default_rng(seed)
    confs = [Conformer(mol.id, rng.uniform(-500, 500, (mol.n_atoms, 3))) for _ in range(count)]
    ens = Ensemble.of(mol, confs)
    mol2, ens2 = parse_sdf(write_sdf(mol, ens))
    assert mol2.bonds == mol.bonds and mol2.symbols == mol.symbols
    assert np.abs(ens2.coordinates() - ens.coordinates()).max() <= 0.5e-4 + 1e-9


def test_molecule_validation():
    with pytest.raises(MolIOError, match="duplicate"):
        Molecule.from_graph("x", ["C", "C"], [(0, 1), (1, 0)])
    with pytest.raises(MolIOError, match="out of range"):
        Molecule.from_graph("x", ["C", "C"], [(0, 2)])
    mol = Molecule.from_graph("x", ["C", "C"], [(1, 0, 2)])
    assert mol.bonds == (Bond(0, 1, 2),)


def test_conformer_validation():
    with pytest.raises(ValueError, match="finite"):
        Conformer("m", [[0.0, np.nan, 0.0]])
    conf = Conformer("m", np.zeros((2, 3)))
    with pytest.raises(ValueError):
        conf.coords[0, 0] = 1.0


def test_ensemble_rejects_foreign_conformer(butane):
    with pytest.raises(ValueError):
        Ensemble.of(butane, [Conformer("other", np.zeros((14, 3)))])
    with pytest.raises(ValueError):
        Ensemble.of(butane, [Conformer("butane", np.zeros((3, 3)))])


def test_connectivity_flag():
    two = Molecule.from_graph("frag", ["C", "C", "C"], [(0, 1)])
    assert not two.is_connected
    assert toy.molecule("butane").is_connected
