"""Regenerate the bundled toy reference SDFs.

The toy references are synthetic: staggered torsion combinations on a
minimized template, jittered, re-minimized and perturbed with small noise.
Ring molecules use distance-geometry embeddings instead.

Run: python3 demos/06_regenerate_toy_set.py [OUT_DIR]
"""

from __future__ import annotations

from pathlib import Path
import sys

from confkit import toy
from confkit.molio import write_sdf

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(toy.__file__).parent / "data" / "toy"
out.mkdir(parents=True, exist_ok=True)
for name in toy.TOY_SET:
    molecule, ensemble = toy.synthesize_references(name, toy.TOY_NREF[name])
    path = out / f"{name}.sdf"
    path.write_bytes(write_sdf(molecule, ensemble))
    print(f"wrote {len(ensemble)} conformers to {path}")
