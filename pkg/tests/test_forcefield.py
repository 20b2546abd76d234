from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from confkit import toy
from confkit.forcefield import (
    BOND_K,
    EnergyError,
    build_model,
    build_template,
    evaluate,
    minimize,
    sample_energy,
    torsion_angles,
)
from confkit.geom3d import measure_dihedral
from confkit.molio import Conformer, write_sdf
from confkit.samplers import SamplerConfig, detect_rotatable_bonds

from conftest import random_rotation

TERM_GROUPS = {
    "bonds": ("bonds", "bond_r0", "bond_k", 2),
    "angles": ("angles", "angle_theta0", "angle_k", 3),
    "torsions": ("torsions", "torsion_m", "torsion_v", 4),
    "pairs": ("pairs", "pair_epsilon", "pair_sigma", 2),
}


def only(model, keep):
    """Copy of ``model`` with every term group except ``keep`` removed."""
    changes = {}
    for name, (idx, p1, p2, width) in TERM_GROUPS.items():
        if name != keep:
            changes[idx] = np.zeros((0, width), dtype=int)
            changes[p1] = np.zeros(0)
            changes[p2] = np.zeros(0)
    return replace(model, **changes)


def fd_gradient(model, x, h=1e-5):
    g = np.zeros_like(x)
    for a in range(x.shape[0]):
        for k in range(3):
            xp = x.copy()
            xm = x.copy()
            xp[a, k] += h
            xm[a, k] -= h
            g[a, k] = (evaluate(model, xp)[0] - evaluate(model, xm)[0]) / (2 * h)
    return g


def rel_error(g, ref):
    return np.abs(g - ref).max() / max(np.abs(ref).max(), 1e-8)


def paths_oracle(molecule):
    """Angle count and >=3-bond pair count by explicit path enumeration."""
    adj = molecule.neighbors
    angles = {(min(i, k), j, max(i, k)) for j in range(molecule.n_atoms) for i in adj[j] for k in adj[j] if i != k}
    close = {(min(a, b), max(a, b)) for a in range(molecule.n_atoms) for b in adj[a]}
    close |= {(min(i, k), max(i, k)) for i, _, k in angles}
    n = molecule.n_atoms
    far = [(a, b) for a in range(n) for b in range(a + 1, n) if (a, b) not in close]
    return len(angles), far


@pytest.fixture(scope="module")
def templates():
    out = {}
    for name in toy.SKELETONS:
        mol = toy.molecule(name)
        model = build_model(mol)
        out[name] = (mol, model, build_template(mol, model=model))
    return out


def test_ethane_terms():
    mol = toy.molecule("ethane")
    model = build_model(mol)
    assert len(model.bonds) == 7
    n_angles, far = paths_oracle(mol)
    assert len(model.angles) == n_angles == 12
    assert len(model.torsions) == 0
    assert len(model.pairs) == len(far) == 9
    assert all(mol.symbols[a] == mol.symbols[b] == "H" for a, b in model.pairs)


@pytest.mark.parametrize("name", sorted(toy.SKELETONS))
def test_term_lists_match_path_oracle(name):
    mol = toy.molecule(name)
    model = build_model(mol)
    n_angles, far = paths_oracle(mol)
    assert len(model.angles) == n_angles
    assert sorted(map(tuple, model.pairs.tolist())) == far
    assert np.all(model.bond_k > 0) and np.all(model.angle_k > 0) and np.all(model.pair_sigma > 0)


def test_water_and_butane_terms():
    water = build_model(toy.molecule("water"))
    assert (len(water.bonds), len(water.angles), len(water.torsions), len(water.pairs)) == (2, 1, 0, 0)
    butane = build_model(toy.molecule("butane"))
    assert butane.torsions.tolist() == [[0, 1, 2, 3]]


def water_at_minimum(model):
    r = model.bond_r0[0]
    half = model.angle_theta0[0] / 2
    return np.array([[0.0, 0, 0], [r * np.sin(half), r * np.cos(half), 0], [-r * np.sin(half), r * np.cos(half), 0]])


def test_energy_zero_at_constructed_minimum():
    model = build_model(toy.molecule("water"))
    energy, grad = evaluate(model, water_at_minimum(model))
    assert abs(energy) < 1e-20 and np.abs(grad).max() < 1e-12


def test_stretching_one_bond():
    model = build_model(toy.molecule("water"))
    x = water_at_minimum(model)
    delta = 0.037
    stretched = x.copy()
    stretched[1] *= (model.bond_r0[0] + delta) / model.bond_r0[0]
    assert evaluate(model, stretched)[0] == pytest.approx(BOND_K * delta**2, abs=1e-9)


def ideal_ethane(model):
    """Staggered ethane with every bond at r0 and every angle tetrahedral."""
    rcc, rch = model.bond_r0[0], model.bond_r0[1]
    cos_t = -1.0 / 3.0
    sin_t = np.sqrt(1 - cos_t**2)
    x = np.zeros((8, 3))
    x[1] = [0, 0, rcc]
    for k in range(3):
        phi = 2 * np.pi * k / 3
        # H on C0 points away from C1; H on C1 staggered by 60 degrees
        x[2 + k] = [rch * sin_t * np.cos(phi), rch * sin_t * np.sin(phi), rch * cos_t]
        phi2 = phi + np.pi / 3
        x[5 + k] = [rch * sin_t * np.cos(phi2), rch * sin_t * np.sin(phi2), rcc - rch * cos_t]
    return x


def test_ideal_ethane_has_only_nonbonded_energy():
    mol = toy.molecule("ethane")
    model = build_model(mol)
    assert [tuple(b) for b in model.bonds[:1]] == [(0, 1)]
    assert mol.neighbors[0] == (1, 2, 3, 4) and mol.neighbors[1] == (0, 5, 6, 7)
    x = ideal_ethane(model)
    bonded = evaluate(only(model, "bonds"), x)[0] + evaluate(only(model, "angles"), x)[0]
    assert bonded < 1e-20
    assert evaluate(model, x)[0] == pytest.approx(evaluate(only(model, "pairs"), x)[0], abs=1e-12)


@pytest.mark.parametrize("group", [None, *TERM_GROUPS])
def test_gradient_matches_finite_differences(templates, group):
    rng = np.random.default_rng(1)
    for name in ("butane", "propanol", "cyclohexane", "propylbenzene"):
        mol, model, template = templates[name]
        sub = model if group is None else only(model, group)
        for _ in range(3):
            x = template.coords + rng.normal(scale=0.15, size=template.coords.shape)
            _, g = evaluate(sub, x)
            assert rel_error(g, fd_gradient(sub, x)) < 1e-4


def test_gradient_sums_to_zero_and_rigid_invariance(templates):
    rng = np.random.default_rng(2)
    for mol, model, template in templates.values():
        x = template.coords + rng.normal(scale=0.1, size=template.coords.shape)
        e, g = evaluate(model, x)
        assert np.abs(g.sum(axis=0)).max() < 1e-9
        moved = x @ random_rotation(rng).T + rng.normal(size=3) * 3
        assert abs(evaluate(model, moved)[0] - e) < 1e-9


def test_batch_matches_single(templates):
    mol, model, template = templates["hexane"]
    rng = np.random.default_rng(3)
    xs = template.coords + rng.normal(scale=0.1, size=(4, *template.coords.shape))
    e, g = evaluate(model, xs)
    for b in range(4):
        e1, g1 = evaluate(model, xs[b])
        assert e[b] == e1 and np.array_equal(g[b], g1)


def test_coincident_atoms_raise(templates):
    mol, model, template = templates["butane"]
    x = template.coords.copy()
    a, b = model.pairs[0]
    x[b] = x[a]
    with pytest.raises(EnergyError, match="coincident"):
        evaluate(model, x)


def test_collinear_torsion_raises(templates):
    mol, model, template = templates["butane"]
    x = template.coords.copy()
    x[:4] = [[0, 0, 0], [1.5, 0, 0], [3, 0, 0], [4.5, 0, 0]]
    with pytest.raises(EnergyError, match="collinear"):
        evaluate(only(model, "torsions"), x)


def test_torsion_angles_agree_with_geometry(templates):
    mol, model, template = templates["hexane"]
    phi = np.degrees(torsion_angles(template.coords, model.torsions)[0])
    for spec, angle in zip(detect_rotatable_bonds(mol), phi):
        assert measure_dihedral(template, spec) == pytest.approx(angle if angle < 180 else -180.0, abs=1e-9)


def test_minimize_at_minimum_stays_put():
    model = build_model(toy.molecule("water"))
    start = Conformer("water", water_at_minimum(model))
    result = minimize(model, start)
    assert result.iterations <= 1 and result.converged
    assert np.abs(result.conformer.coords - start.coords).max() < 1e-6


def test_stretched_ethane_recovers_bond_length(templates):
    mol, model, template = templates["ethane"]
    x = template.coords.copy()
    axis = x[1] - x[0]
    axis /= np.linalg.norm(axis)
    r_now = np.linalg.norm(x[1] - x[0])
    shift = (model.bond_r0[0] + 0.3 - r_now) * axis
    side = [1] + [h for h in mol.neighbors[1] if h != 0]
    x[side] += shift
    result = minimize(model, Conformer("ethane", x), max_iters=5000, tol=1e-6)
    r = np.linalg.norm(result.conformer.coords[1] - result.conformer.coords[0])
    assert abs(r - model.bond_r0[0]) < 1e-3
    assert result.converged


@pytest.mark.parametrize("name", sorted(toy.SKELETONS))
def test_minimize_monotone(templates, name):
    mol, model, template = templates[name]
    rng = np.random.default_rng(4)
    start = Conformer(mol.id, template.coords + rng.normal(scale=0.2, size=template.coords.shape))
    result = minimize(model, start)
    hist = np.array(result.history)
    assert np.all(np.diff(hist) <= 0.0)
    assert result.energy <= evaluate(model, start)[0]
    assert result.energy == pytest.approx(evaluate(model, result.conformer)[0], abs=1e-10)
    if result.converged:
        assert result.max_gradient_norm < 1e-3


def test_minimize_rejects_bad_iters(templates):
    mol, model, template = templates["butane"]
    with pytest.raises(ValueError):
        minimize(model, template, max_iters=0)


def test_sample_energy_butane_minima():
    mol = toy.molecule("butane")
    model = build_model(mol)
    ens = sample_energy(mol, model, 100, SamplerConfig(seed=5))
    assert len(ens) == 100
    (spec,) = detect_rotatable_bonds(mol)
    minima = np.array([-180.0, -60.0, 60.0, 180.0])
    converged = [c for c in ens if "not_converged" not in c.flags]
    assert len(converged) >= 90
    for conf in converged:
        assert np.abs(minima - measure_dihedral(conf, spec)).min() <= 15.0
    for conf in ens:
        assert conf.provenance.value == "energy"
        assert conf.energy == pytest.approx(evaluate(model, conf)[0], abs=1e-10)


def test_sample_energy_empty_and_deterministic():
    mol = toy.molecule("propanol")
    model = build_model(mol)
    assert len(sample_energy(mol, model, 0)) == 0
    a = sample_energy(mol, model, 6, SamplerConfig(seed=1))
    b = sample_energy(mol, model, 6, SamplerConfig(seed=1))
    assert write_sdf(mol, a) == write_sdf(mol, b)
