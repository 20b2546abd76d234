"""Evaluate the surrogate energy, check the gradient and minimize.

Run: python3 demos/03_force_field.py
"""

from __future__ import annotations

import numpy as np

from confkit import toy
from confkit.forcefield import build_model, build_template, evaluate, minimize
from confkit.molio import Conformer

molecule = toy.molecule("propanol")
model = build_model(molecule)
template = build_template(molecule, model=model)
rng = np.random.default_rng(0)
x = template.coords + rng.normal(scale=0.1, size=template.coords.shape)

energy, grad = evaluate(model, x)
h = 1e-5
probe = np.zeros_like(x)
probe[2, 1] = h
fd = (evaluate(model, x + probe)[0] - evaluate(model, x - probe)[0]) / (2 * h)
print(f"energy {energy:.4f}; dE/dy of atom 2: analytic {grad[2, 1]:.6f}, finite difference {fd:.6f}")
print(f"net force (should vanish): {np.abs(grad.sum(axis=0)).max():.1e}")

result = minimize(model, Conformer(molecule.id, x), max_iters=5000)
print(
    f"minimized in {result.iterations} steps: {result.history[0]:.4f} -> {result.energy:.4f} "
    f"(converged={result.converged}, monotone={bool(np.all(np.diff(result.history) <= 0))})"
)
