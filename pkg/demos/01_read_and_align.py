"""Read a multi-conformer SDF, superpose conformers and compare RMSDs.

Run: python3 demos/01_read_and_align.py
"""

from __future__ import annotations

import numpy as np

from confkit import toy
from confkit.geom3d import kabsch_align, rmsd, rmsd_matrix

molecule, ensemble = toy.load_toy_references()[1]  # pentane
print(f"{molecule.id}: {molecule.n_atoms} atoms, {len(molecule.bonds)} bonds, {len(ensemble)} conformers")

# heavy-atom RMSD after optimal superposition
mask = ensemble.heavy_mask
table = rmsd_matrix(ensemble.coordinates(), ensemble.coordinates(), mask)
print("pairwise heavy-atom RMSD (A):")
print(np.array2string(table, precision=3))

# a rotated, shifted copy has zero RMSD once aligned
theta = np.deg2rad(40.0)
rot = np.array([[np.cos(theta), -np.sin(theta), 0], [np.sin(theta), np.cos(theta), 0], [0, 0, 1]])
moved = ensemble[0].coords @ rot.T + np.array([3.0, -1.0, 2.0])
transform, aligned = kabsch_align(moved, ensemble[0].coords)
print(f"RMSD of a rigidly moved copy: {rmsd(moved, ensemble[0].coords):.2e} A")
print(f"max coordinate error after alignment: {np.abs(aligned - ensemble[0].coords).max():.2e} A")
