"""Small built-in molecules and the bundled toy benchmark set."""

from __future__ import annotations

from importlib import resources

from confkit.molio import Conformer, Ensemble, Molecule, parse_sdf

_VALENCE = {"C": 4, "N": 3, "O": 2, "S": 2, "F": 1, "Cl": 1, "Br": 1}

# heavy-atom skeletons: (symbols, bonds as (i, j, order))
SKELETONS: dict[str, tuple[list[str], list[tuple[int, int, int]]]] = {
    "methane": (["C"], []),
    "water": (["O"], []),
    "ethane": (["C", "C"], [(0, 1, 1)]),
    "butane": (["C"] * 4, [(0, 1, 1), (1, 2, 1), (2, 3, 1)]),
    "pentane": (["C"] * 5, [(i, i + 1, 1) for i in range(4)]),
    "hexane": (["C"] * 6, [(i, i + 1, 1) for i in range(5)]),
    "propanol": (["C", "C", "C", "O"], [(0, 1, 1), (1, 2, 1), (2, 3, 1)]),
    "diethyl_ether": (["C", "C", "O", "C", "C"], [(i, i + 1, 1) for i in range(4)]),
    "cyclohexane": (["C"] * 6, [(i, (i + 1) % 6, 1) for i in range(6)]),
    "methylcyclopentane": (
        ["C"] * 6,
        [(0, 1, 1), (1, 2, 1), (2, 3, 1), (3, 4, 1), (4, 0, 1), (0, 5, 1)],
    ),
    "propylbenzene": (
        ["C"] * 9,
        [(i, (i + 1) % 6, 4) for i in range(6)] + [(0, 6, 1), (6, 7, 1), (7, 8, 1)],
    ),
}

TOY_SET = ("butane", "pentane", "hexane", "propanol", "diethyl_ether", "cyclohexane")


def with_hydrogens(id: str, symbols: list[str], bonds: list[tuple[int, int, int]]) -> Molecule:
    """Molecule from a heavy-atom skeleton, saturated with explicit hydrogens.

    Heavy atoms keep indices ``0..len(symbols)-1``; hydrogens follow in the
    order of the atoms they are attached to. Aromatic bonds count 1.5 toward
    valence.
    """
    used = [0.0] * len(symbols)
    for i, j, order in bonds:
        inc = 1.5 if order == 4 else order
        used[i] += inc
        used[j] += inc
    all_symbols = list(symbols)
    all_bonds = list(bonds)
    for i, s in enumerate(symbols):
        free = _VALENCE[s] - int(used[i] + 1e-9)
        for _ in range(max(free, 0)):
            all_symbols.append("H")
            all_bonds.append((i, len(all_symbols) - 1, 1))
    return Molecule.from_graph(id, all_symbols, all_bonds)


def molecule(name: str) -> Molecule:
    symbols, bonds = SKELETONS[name]
    return with_hydrogens(name, symbols, bonds)


def load_toy_references() -> list[tuple[Molecule, Ensemble]]:
    """The bundled toy benchmark: one reference ensemble per molecule."""
    root = resources.files("confkit").joinpath("data", "toy")
    out = []
    for name in TOY_SET:
        out.append(parse_sdf(root.joinpath(f"{name}.sdf").read_bytes()))
    return out


# reference conformers per toy molecule
TOY_NREF = {
    "butane": 2,
    "pentane": 3,
    "hexane": 4,
    "propanol": 3,
    "diethyl_ether": 3,
    "cyclohexane": 2,
}


def synthesize_references(
    name: str, n_ref: int, seed: int = 2024, jitter_deg: float = 8.0, noise: float = 0.03
) -> tuple[Molecule, Ensemble]:
    """Synthetic "reference" conformers for a toy molecule.

    Distinct staggered torsion combinations (60, 180, -60 degrees) are set on
    a minimized template, jittered by ``jitter_deg``, re-minimized and then
    perturbed by isotropic Gaussian noise of ``noise`` angstrom per coordinate,
    so references sit near but not on surrogate-model minima. Ring-only
    molecules use independent distance-geometry embeddings instead.
    """
    import numpy as np

    from confkit.forcefield import build_model, build_template, minimize
    from confkit.geom3d import set_dihedral
    from confkit.molio import Provenance
    from confkit.samplers import SamplerConfig, build_bounds, detect_rotatable_bonds, draw_geometric

    mol = molecule(name)
    rng = np.random.default_rng([seed, sum(map(ord, name))])
    model = build_model(mol)
    torsions = detect_rotatable_bonds(mol)
    starts = []
    if torsions:
        template = build_template(mol, SamplerConfig(seed=seed), model)
        grid = np.array(np.meshgrid(*[[180.0, 60.0, -60.0]] * len(torsions))).reshape(len(torsions), -1).T
        order = rng.permutation(len(grid))[:n_ref]
        for combo in grid[order]:
            conf = template
            for spec, angle in zip(torsions, combo):
                conf = set_dihedral(conf, spec, angle + rng.normal(0.0, jitter_deg))
            starts.append(conf)
    else:
        bounds = build_bounds(mol)
        for _ in range(n_ref):
            xyz = draw_geometric(bounds, rng, 200)
            starts.append(Conformer(mol.id, xyz))
    confs = []
    for start in starts:
        res = minimize(model, start, max_iters=5000)
        xyz = res.conformer.coords + rng.normal(0.0, noise, res.conformer.coords.shape)
        confs.append(Conformer(mol.id, xyz, provenance=Provenance.REFERENCE))
    return mol, Ensemble.of(mol, confs)
