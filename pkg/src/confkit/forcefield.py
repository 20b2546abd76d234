"""Surrogate molecular-mechanics model, minimizer and energy sampler.

The model is deliberately simple and is *not* MMFF94:

* bonds: ``k_b (r - r0)^2`` with ``k_b = 300`` kcal/mol/A^2
* angles: ``k_a (theta - theta0)^2`` with ``k_a = 60`` kcal/mol/rad^2
* torsions: ``V/2 (1 + cos(m phi))`` with ``m = 3``, ``V = 1`` kcal/mol, one
  per rotatable bond
* Lennard-Jones ``4 eps [(s/d)^12 - (s/d)^6]`` between atoms three or more
  bonds apart, ``s = vdW sum * 2^(-1/6)``, ``eps = 0.1`` kcal/mol
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numba
import numpy as np

from confkit.molio import Conformer, Ensemble, Molecule, Provenance
from confkit.optim import descend
from confkit.samplers import (
    SamplerConfig,
    build_bounds,
    clash_pairs,
    detect_rotatable_bonds,
    draw_geometric,
    embed_start,
    refine_embeddings,
    draw_uniform,
    sample_rng,
)
from confkit.tables import bond_length, ideal_angle, vdw_radius

__all__ = [
    "EnergyError",
    "EnergyModel",
    "MinimizeResult",
    "build_model",
    "build_template",
    "evaluate",
    "minimize",
    "sample_energy",
]

logger = logging.getLogger(__name__)

BOND_K = 300.0
ANGLE_K = 60.0
TORSION_V = 1.0
TORSION_M = 3
LJ_EPSILON = 0.1

# conformers minimized per vectorized batch
BATCH = 256
# steepest descent needs well over 500 steps to reach tol=1e-3 on soft torsions
SAMPLER_MAX_ITERS = 2000


class EnergyError(ValueError):
    """Energy is undefined for the given geometry."""


@dataclass(frozen=True, eq=False)
class EnergyModel:
    """Parameter arrays of the surrogate force field for one molecule."""

    n_atoms: int
    bonds: np.ndarray  # (nb, 2) int
    bond_r0: np.ndarray
    bond_k: np.ndarray
    angles: np.ndarray  # (na, 3) int, centre atom in the middle
    angle_theta0: np.ndarray  # radians
    angle_k: np.ndarray
    torsions: np.ndarray  # (nt, 4) int
    torsion_m: np.ndarray
    torsion_v: np.ndarray
    pairs: np.ndarray  # (np, 2) int
    pair_epsilon: np.ndarray
    pair_sigma: np.ndarray


@dataclass(frozen=True, eq=False)
class MinimizeResult:
    conformer: Conformer
    energy: float
    iterations: int
    converged: bool
    max_gradient_norm: float
    history: list[float] = field(default_factory=list)


def build_model(molecule: Molecule) -> EnergyModel:
    """Assign surrogate parameters from the bond graph and bundled tables."""
    sym = molecule.symbols
    bonds = np.array([(b.i, b.j) for b in molecule.bonds], dtype=int).reshape(-1, 2)
    r0 = np.array([bond_length(sym[b.i], sym[b.j], b.order) for b in molecule.bonds])

    angles, theta0 = [], []
    for j in range(molecule.n_atoms):
        nbrs = molecule.neighbors[j]
        theta = np.radians(ideal_angle(molecule.bond_orders_at(j)))
        for x in range(len(nbrs)):
            for y in range(x + 1, len(nbrs)):
                angles.append((nbrs[x], j, nbrs[y]))
                theta0.append(theta)

    torsions = [spec.atoms for spec in detect_rotatable_bonds(molecule)]

    topo = molecule.topological_distances
    i, j = np.triu_indices(molecule.n_atoms, k=1)
    keep = topo[i, j] >= 3
    i, j = i[keep], j[keep]
    vdw = np.array([vdw_radius(s) for s in sym])
    sigma = (vdw[i] + vdw[j]) * 2.0 ** (-1.0 / 6.0)

    return EnergyModel(
        n_atoms=molecule.n_atoms,
        bonds=bonds,
        bond_r0=r0,
        bond_k=np.full(len(bonds), BOND_K),
        angles=np.array(angles, dtype=int).reshape(-1, 3),
        angle_theta0=np.array(theta0),
        angle_k=np.full(len(angles), ANGLE_K),
        torsions=np.array(torsions, dtype=int).reshape(-1, 4),
        torsion_m=np.full(len(torsions), float(TORSION_M)),
        torsion_v=np.full(len(torsions), TORSION_V),
        pairs=np.stack([i, j], axis=1).astype(int).reshape(-1, 2),
        pair_epsilon=np.full(len(i), LJ_EPSILON),
        pair_sigma=sigma,
    )


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a * b).sum(axis=-1)


def torsion_angles(x: np.ndarray, quads: np.ndarray):
    """Signed torsions (radians) of ``quads`` in ``x`` (``(n, 3)`` or ``(B, n, 3)``)."""
    a, b, c, d = np.asarray(quads).T
    b1 = x[..., b, :] - x[..., a, :]
    b2 = x[..., c, :] - x[..., b, :]
    b3 = x[..., d, :] - x[..., c, :]
    n1 = _cross(b1, b2)
    n2 = _cross(b2, b3)
    lb2 = np.sqrt(_dot(b2, b2))
    phi = np.arctan2(lb2 * _dot(b1, n2), _dot(n1, n2))
    return phi, b1, b2, b3, n1, n2, lb2


@numba.njit(cache=True, nogil=True)
def _kernel(
    x, bonds, r0, kb, angles, theta0, ka, tors, tm, tv, pairs, sigma, eps, energy, grad
):  # pragma: no cover - compiled
    n_batch = x.shape[0]
    for s in range(n_batch):
        e = 0.0
        g = grad[s]
        g[:, :] = 0.0
        p = x[s]
        for t in range(bonds.shape[0]):
            i, j = bonds[t, 0], bonds[t, 1]
            v0 = p[j, 0] - p[i, 0]
            v1 = p[j, 1] - p[i, 1]
            v2 = p[j, 2] - p[i, 2]
            r = np.sqrt(v0 * v0 + v1 * v1 + v2 * v2)
            dr = r - r0[t]
            e += kb[t] * dr * dr
            c = 2.0 * kb[t] * dr / r
            g[j, 0] += c * v0
            g[j, 1] += c * v1
            g[j, 2] += c * v2
            g[i, 0] -= c * v0
            g[i, 1] -= c * v1
            g[i, 2] -= c * v2
        for t in range(angles.shape[0]):
            i, j, k = angles[t, 0], angles[t, 1], angles[t, 2]
            u = p[i] - p[j]
            w = p[k] - p[j]
            lu = np.sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2])
            lw = np.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
            cos = (u[0] * w[0] + u[1] * w[1] + u[2] * w[2]) / (lu * lw)
            cos = min(1.0, max(-1.0, cos))
            d = np.arccos(cos) - theta0[t]
            e += ka[t] * d * d
            # the 1/sin singularity at linear centres is clamped
            sin = max(np.sqrt(1.0 - cos * cos), 1e-8)
            c = -2.0 * ka[t] * d / sin
            for q in range(3):
                gi = c * (w[q] / (lu * lw) - cos * u[q] / (lu * lu))
                gk = c * (u[q] / (lu * lw) - cos * w[q] / (lw * lw))
                g[i, q] += gi
                g[k, q] += gk
                g[j, q] -= gi + gk
        for t in range(tors.shape[0]):
            a, b, c_, d_ = tors[t, 0], tors[t, 1], tors[t, 2], tors[t, 3]
            b1 = p[b] - p[a]
            b2 = p[c_] - p[b]
            b3 = p[d_] - p[c_]
            n1 = np.cross(b1, b2)
            n2 = np.cross(b2, b3)
            lb2 = np.sqrt(b2 @ b2)
            nn1 = n1 @ n1
            nn2 = n2 @ n2
            if nn1 < 1e-20 or nn2 < 1e-20:
                energy[s] = np.nan
                break
            phi = np.arctan2(lb2 * (b1 @ n2), n1 @ n2)
            e += 0.5 * tv[t] * (1.0 + np.cos(tm[t] * phi))
            dphi = -0.5 * tv[t] * tm[t] * np.sin(tm[t] * phi)
            f0 = -(lb2 / nn1) * n1
            f3 = (lb2 / nn2) * n2
            pp = (b1 @ b2) / (lb2 * lb2)
            qq = (b3 @ b2) / (lb2 * lb2)
            for q in range(3):
                g[a, q] += dphi * f0[q]
                g[b, q] += dphi * (-f0[q] - pp * f0[q] + qq * f3[q])
                g[c_, q] += dphi * (-f3[q] + pp * f0[q] - qq * f3[q])
                g[d_, q] += dphi * f3[q]
        else:
            for t in range(pairs.shape[0]):
                i, j = pairs[t, 0], pairs[t, 1]
                v0 = p[j, 0] - p[i, 0]
                v1 = p[j, 1] - p[i, 1]
                v2 = p[j, 2] - p[i, 2]
                r2 = v0 * v0 + v1 * v1 + v2 * v2
                if r2 == 0.0:
                    e = np.inf
                    break
                s6 = (sigma[t] * sigma[t] / r2) ** 3
                e += 4.0 * eps[t] * (s6 * s6 - s6)
                c = 4.0 * eps[t] * (-12.0 * s6 * s6 + 6.0 * s6) / r2
                g[j, 0] += c * v0
                g[j, 1] += c * v1
                g[j, 2] += c * v2
                g[i, 0] -= c * v0
                g[i, 1] -= c * v1
                g[i, 2] -= c * v2
            energy[s] = e


def _terms(model: EnergyModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.ascontiguousarray(x, dtype=np.float64)
    energy = np.empty(len(x))
    grad = np.empty_like(x)
    _kernel(
        x,
        model.bonds, model.bond_r0, model.bond_k,
        model.angles, model.angle_theta0, model.angle_k,
        model.torsions, model.torsion_m, model.torsion_v,
        model.pairs, model.pair_sigma, model.pair_epsilon,
        energy, grad,
    )
    if np.isnan(energy).any():
        raise EnergyError("collinear atoms in a torsion term")
    if np.isinf(energy).any():
        raise EnergyError("coincident atoms in a nonbonded pair")
    return energy, grad


def evaluate(model: EnergyModel, conformer: Conformer | np.ndarray):
    """Total energy (kcal/mol) and its analytic gradient (kcal/mol/A).

    Accepts a conformer, an ``(n, 3)`` array (returns ``(float, (n, 3))``) or
    a batch ``(B, n, 3)`` (returns ``((B,), (B, n, 3))``).

    Raises:
        EnergyError: coincident nonbonded atoms or a collinear torsion.
    """
    x = conformer.coords if isinstance(conformer, Conformer) else np.asarray(conformer, float)
    single = x.ndim == 2
    xb = x[None] if single else x
    if xb.shape[1:] != (model.n_atoms, 3):
        raise EnergyError(f"expected {model.n_atoms} atoms, got shape {x.shape}")
    if not np.isfinite(xb).all():
        raise EnergyError("non-finite coordinates")
    energy, grad = _terms(model, xb)
    if single:
        return float(energy[0]), grad[0]
    return energy, grad


def minimize_batch(
    model: EnergyModel, starts: np.ndarray, max_iters: int = 500, tol: float = 1e-3
):
    """Minimize a ``(B, n, 3)`` stack; see :func:`confkit.optim.descend`."""
    return descend(lambda x: _checked(model, x), starts, max_iters=max_iters, tol=tol)


def _checked(model, x):
    if not np.isfinite(x).all():
        raise EnergyError("non-finite coordinates")
    return _terms(model, x)


def minimize(
    model: EnergyModel, start: Conformer, max_iters: int = 500, tol: float = 1e-3
) -> MinimizeResult:
    """Steepest descent with Armijo backtracking (initial trial step 0.1 A).

    Stops once the largest per-atom gradient norm is below ``tol``. When the
    line search fails the best point so far is returned with
    ``converged=False``.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    res = minimize_batch(model, start.coords[None], max_iters=max_iters, tol=tol)
    return _unpack(start, res, 0)


def _unpack(start: Conformer, res, b: int) -> MinimizeResult:
    flags = tuple(f for f in start.flags if f != "not_converged")
    if not res.converged[b]:
        flags += ("not_converged",)
    energy = float(res.value[b])
    conf = start.with_coords(res.x[b], energy=energy, flags=flags)
    return MinimizeResult(
        conf,
        energy,
        int(res.iterations[b]),
        bool(res.converged[b]),
        float(res.max_gradient_norm[b]),
        res.history[b],
    )


def build_template(
    molecule: Molecule, config: SamplerConfig = SamplerConfig(), model: EnergyModel | None = None
) -> Conformer:
    """A starting 3D structure made from scratch: one embedding, minimized."""
    if model is None:
        model = build_model(molecule)
    bounds = build_bounds(molecule, config.clash_factor)
    rng = sample_rng(config.seed, molecule.id, "template", 0)
    coords = draw_geometric(bounds, rng, config.dg_refine_iters)
    start = Conformer(molecule.id, coords, provenance=Provenance.GEOMETRIC)
    return minimize(model, start).conformer


def sample_energy(
    molecule: Molecule,
    model: EnergyModel,
    count: int,
    config: SamplerConfig = SamplerConfig(),
    template: Conformer | None = None,
    max_iters: int = SAMPLER_MAX_ITERS,
    tol: float = 1e-3,
) -> Ensemble:
    """Minimized conformers from alternating uniform-torsion and embedding starts.

    Even indices start from a uniform torsion draw on ``template`` (built with
    :func:`build_template` when omitted), odd indices from a fresh
    distance-geometry embedding. Every output carries its final energy.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        return Ensemble.of(molecule, ())
    if template is None:
        template = build_template(molecule, config, model)
    torsions = detect_rotatable_bonds(molecule)
    pairs = clash_pairs(molecule, config.clash_factor)
    bounds = build_bounds(molecule, config.clash_factor)
    starts = []
    for index in range(count):
        rng = sample_rng(config.seed, molecule.id, "energy", index)
        if index % 2 == 0 and torsions:
            coords, _ = draw_uniform(
                molecule, template, rng, torsions, pairs, config.clash_factor > 0
            )
        else:
            coords = embed_start(bounds, rng)
        starts.append(coords)
    starts = np.array(starts).reshape(count, -1, 3)
    geometric = np.array([not (k % 2 == 0 and torsions) for k in range(count)])
    if geometric.any():
        starts[geometric] = refine_embeddings(bounds, starts[geometric], config.dg_refine_iters)
    out = []
    for lo in range(0, count, BATCH):
        res = minimize_batch(model, starts[lo : lo + BATCH], max_iters=max_iters, tol=tol)
        for b in range(len(res.x)):
            start = Conformer(molecule.id, starts[lo + b], provenance=Provenance.ENERGY)
            out.append(_unpack(start, res, b).conformer)
    return Ensemble.of(molecule, out)
