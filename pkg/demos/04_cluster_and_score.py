"""Cluster a candidate pool down to 2x the reference size and score it.

Run: python3 demos/04_cluster_and_score.py
"""

from __future__ import annotations

from confkit import toy
from confkit.clustering import featurize, kmeans, select_representatives
from confkit.forcefield import build_model, build_template, sample_energy
from confkit.metrics import MetricsConfig, evaluate_molecule
from confkit.molio import Ensemble
from confkit.samplers import SamplerConfig, sample_geometric, sample_uniform

molecule, reference = dict((m.id, (m, e)) for m, e in toy.load_toy_references())["hexane"]
config = SamplerConfig(seed=0)
model = build_model(molecule)
template = build_template(molecule, config, model)
pool = Ensemble.of(
    molecule,
    list(sample_uniform(molecule, template, 20, config))
    + list(sample_geometric(molecule, 20, config))
    + list(sample_energy(molecule, model, 80, config, template=template)),
)
features = featurize(pool, molecule)
k = 2 * len(reference)
clusters = kmeans(features, k, seed=0)
print(f"{len(pool)} candidates -> k={k}; inertia per Lloyd step: {[round(v, 1) for v in clusters.inertia_history]}")

for mode in ("medoid", "centroid"):
    picked = select_representatives(pool, clusters, mode, features, molecule)
    m = evaluate_molecule(picked, reference, MetricsConfig(0.5))
    print(f"{mode:>8}: COV {100 * m.cov:5.1f}%  MAT {m.mat:.3f} A")
full = evaluate_molecule(pool, reference, MetricsConfig(0.5))
print(f"    pool: COV {100 * full.cov:5.1f}%  MAT {full.mat:.3f} A (best any medoid subset can reach)")
