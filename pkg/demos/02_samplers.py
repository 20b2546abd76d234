"""Draw conformers with each sampler and look at the torsions they produce.

Run: python3 demos/02_samplers.py
"""

from __future__ import annotations

import numpy as np

from confkit import toy
from confkit.forcefield import build_model, build_template, evaluate, sample_energy
from confkit.geom3d import dihedral_spec, measure_dihedral
from confkit.samplers import SamplerConfig, detect_rotatable_bonds, sample_geometric, sample_uniform

molecule = toy.molecule("butane")
config = SamplerConfig(seed=1)
model = build_model(molecule)
template = build_template(molecule, config, model)
central = dihedral_spec(molecule, 0, 1, 2, 3)
print(f"rotatable bonds: {len(detect_rotatable_bonds(molecule))}")

ensembles = {
    "uniform": sample_uniform(molecule, template, 40, config),
    "geometric": sample_geometric(molecule, 40, config),
    "energy": sample_energy(molecule, model, 40, config, template=template),
}
for name, ens in ensembles.items():
    angles = np.array([measure_dihedral(c, central) for c in ens])
    energies = np.array([evaluate(model, c)[0] for c in ens])
    anti = np.mean(np.abs(angles) > 120.0)
    print(
        f"{name:>9}: n={len(ens):3d}  C-C-C-C anti fraction {anti:.2f}  "
        f"energy median {np.median(energies):7.3f}  min {energies.min():7.3f}"
    )
