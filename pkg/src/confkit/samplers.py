"""Uniform-torsion and distance-geometry conformer samplers."""

from __future__ import annotations

from dataclasses import dataclass
import logging
import zlib

import numpy as np

from confkit.geom3d import DihedralSpec, dihedral_spec, set_dihedral
from confkit.molio import Conformer, Ensemble, Molecule, Provenance
from confkit.optim import descend
from confkit.tables import bond_length, ideal_angle, vdw_radius

__all__ = [
    "BoundsMatrix",
    "EmbeddingError",
    "SamplerConfig",
    "SamplingError",
    "bounds_penalty",
    "build_bounds",
    "clash_pairs",
    "detect_rotatable_bonds",
    "draw_geometric",
    "draw_uniform",
    "embed_start",
    "refine_embeddings",
    "sample_geometric",
    "sample_rng",
    "sample_uniform",
]

logger = logging.getLogger(__name__)

MAX_CLASH_ATTEMPTS = 50
MAX_EMBED_ATTEMPTS = 10

_STREAMS = {"uniform": 1, "geometric": 2, "energy": 3, "template": 4, "kmeans": 5}


class SamplingError(ValueError):
    """The molecule or template cannot be sampled."""


class EmbeddingError(SamplingError):
    """Distance-geometry embedding failed repeatedly."""


@dataclass(frozen=True)
class SamplerConfig:
    seed: int = 0
    clash_factor: float = 0.7
    dg_refine_iters: int = 200


def sample_rng(seed: int, molecule_id: str, stream: str, index: int) -> np.random.Generator:
    """Independent generator for one sample, keyed by (seed, molecule, stream, index).

    Each sample gets its own stream, so results do not depend on the order
    samples are drawn in.
    """
    key = (zlib.crc32(molecule_id.encode()), _STREAMS[stream], int(index))
    return np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=key))


def _require_sampleable(molecule: Molecule) -> None:
    if not molecule.ring_membership and molecule.bonds:
        raise SamplingError("rings not perceived")
    if not molecule.is_connected:
        raise SamplingError(f"molecule {molecule.id!r} has several fragments; cannot sample")


def detect_rotatable_bonds(molecule: Molecule) -> list[DihedralSpec]:
    """Torsions of single, acyclic bonds with a heavy neighbour on both ends.

    Output is ordered by ``(b, c)`` with ``b < c``; the reference atoms ``a``
    and ``d`` are the lowest-index heavy neighbours of ``b`` and ``c``.
    """
    specs = []
    heavy = molecule.heavy_mask
    for bond, in_ring in zip(molecule.bonds, molecule.ring_membership):
        if bond.order != 1 or in_ring:
            continue
        b, c = bond.i, bond.j
        a_opts = [x for x in molecule.neighbors[b] if x != c and heavy[x]]
        d_opts = [x for x in molecule.neighbors[c] if x != b and heavy[x]]
        if not a_opts or not d_opts:
            continue
        specs.append(dihedral_spec(molecule, min(a_opts), b, c, min(d_opts)))
    return specs


def clash_pairs(molecule: Molecule, clash_factor: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Heavy-atom pairs at least three bonds apart, with their clash distances."""
    topo = molecule.topological_distances
    heavy = np.flatnonzero(molecule.heavy_mask)
    ii, jj = np.triu_indices(len(heavy), k=1)
    i, j = heavy[ii], heavy[jj]
    keep = topo[i, j] >= 3
    i, j = i[keep], j[keep]
    symbols = molecule.symbols
    limit = np.array([vdw_radius(symbols[p]) + vdw_radius(symbols[q]) for p, q in zip(i, j)])
    return i, j, clash_factor * limit.reshape(-1)


def _has_clash(coords: np.ndarray, pairs) -> bool:
    i, j, limit = pairs
    if len(i) == 0:
        return False
    d = np.linalg.norm(coords[i] - coords[j], axis=1)
    return bool((d < limit).any())


def draw_uniform(
    molecule: Molecule,
    template: Conformer,
    rng: np.random.Generator,
    torsions: list[DihedralSpec],
    pairs,
    check_clash: bool = True,
) -> tuple[np.ndarray, bool]:
    """One uniform-torsion draw. Returns ``(coords, clashed)``."""
    coords = template.coords
    for _ in range(MAX_CLASH_ATTEMPTS):
        angles = rng.uniform(-180.0, 180.0, size=len(torsions))
        coords = template.coords
        for spec, angle in zip(torsions, angles):
            coords = set_dihedral(coords, spec, angle)
        if not check_clash or not _has_clash(coords, pairs):
            return coords, False
    return coords, True


def sample_uniform(
    molecule: Molecule, template: Conformer, count: int, config: SamplerConfig = SamplerConfig()
) -> Ensemble:
    """Assign every rotatable torsion of ``template`` an independent uniform angle.

    Draws with a heavy-atom clash (closer than ``clash_factor`` times the vdW
    sum) are redrawn up to 50 times, then kept with a ``"clash"`` flag so the
    output size is always ``count``. A ``clash_factor`` of 0 disables the filter.
    """
    _require_sampleable(molecule)
    if count < 0:
        raise SamplingError("count must be non-negative")
    if template.n_atoms != molecule.n_atoms:
        raise SamplingError("template does not match molecule")
    torsions = detect_rotatable_bonds(molecule)
    if not torsions:
        flags = ("no_rotatable_bonds",) if count > 1 else ()
        if count > 1:
            logger.info("%s has no rotatable bonds; returning template copies", molecule.id)
        copies = [
            Conformer(molecule.id, template.coords, None, Provenance.UNIFORM, flags)
            for _ in range(count)
        ]
        return Ensemble.of(molecule, copies)
    pairs = clash_pairs(molecule, config.clash_factor)
    check = config.clash_factor > 0
    out = []
    for index in range(count):
        rng = sample_rng(config.seed, molecule.id, "uniform", index)
        coords, clashed = draw_uniform(molecule, template, rng, torsions, pairs, check)
        flags = ("clash",) if clashed else ()
        out.append(Conformer(molecule.id, coords, None, Provenance.UNIFORM, flags))
    return Ensemble.of(molecule, out)


@dataclass(frozen=True, eq=False)
class BoundsMatrix:
    """Lower / upper interatomic distance bounds (angstrom).

    ``inconsistent`` counts pairs whose smoothed lower bound exceeded the upper
    bound and had to be clamped.
    """

    lower: np.ndarray
    upper: np.ndarray
    inconsistent: int = 0


def _smooth(lower: np.ndarray, upper: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lower = lower.copy()
    upper = upper.copy()
    for k in range(len(upper)):
        upper = np.minimum(upper, upper[:, k, None] + upper[None, k, :])
        lower = np.maximum(lower, lower[:, k, None] - upper[None, k, :])
        lower = np.maximum(lower, lower[None, k, :] - upper[:, k, None])
    return lower, upper


def build_bounds(molecule: Molecule, clash_factor: float = 0.7) -> BoundsMatrix:
    """Distance bounds from the bond graph, then triangle smoothing.

    1-2 pairs get the tabulated bond length +-0.01 A, 1-3 pairs the law of
    cosines at the ideal angle of the centre atom +-5%, and the rest a vdW
    lower bound and a path-length upper bound.
    """
    if not molecule.is_connected:
        raise SamplingError(f"molecule {molecule.id!r} has several fragments; cannot sample")
    n = molecule.n_atoms
    sym = molecule.symbols
    vdw = np.array([vdw_radius(s) for s in sym])
    bonded = np.zeros((n, n), dtype=bool)
    lengths = np.zeros((n, n))
    lower = clash_factor * (vdw[:, None] + vdw[None, :])
    upper = np.full((n, n), np.inf)
    for bond in molecule.bonds:
        r = bond_length(sym[bond.i], sym[bond.j], bond.order)
        lengths[bond.i, bond.j] = lengths[bond.j, bond.i] = r
        bonded[bond.i, bond.j] = bonded[bond.j, bond.i] = True
        lower[bond.i, bond.j] = lower[bond.j, bond.i] = r - 0.01
        upper[bond.i, bond.j] = upper[bond.j, bond.i] = r + 0.01

    # path upper bounds over 1-2 uppers only
    path = np.where(bonded, upper, np.inf)
    np.fill_diagonal(path, 0.0)
    for k in range(n):
        path = np.minimum(path, path[:, k, None] + path[None, k, :])

    seen13 = np.zeros((n, n), dtype=bool)
    lo13 = np.zeros((n, n))
    hi13 = np.zeros((n, n))
    for j in range(n):
        nbrs = molecule.neighbors[j]
        theta = np.radians(ideal_angle(molecule.bond_orders_at(j)))
        for x in range(len(nbrs)):
            for y in range(x + 1, len(nbrs)):
                i, k = nbrs[x], nbrs[y]
                if bonded[i, k]:
                    continue
                r1, r2 = lengths[i, j], lengths[j, k]
                d = np.sqrt(r1 * r1 + r2 * r2 - 2.0 * r1 * r2 * np.cos(theta))
                lo, hi = 0.95 * d, 1.05 * d
                if seen13[i, k]:
                    lo, hi = min(lo, lo13[i, k]), max(hi, hi13[i, k])
                seen13[i, k] = seen13[k, i] = True
                lo13[i, k] = lo13[k, i] = lo
                hi13[i, k] = hi13[k, i] = hi
    lower = np.where(seen13, lo13, lower)
    upper = np.where(seen13, hi13, upper)
    far = ~bonded & ~seen13
    upper = np.where(far, path, upper)
    np.fill_diagonal(lower, 0.0)
    np.fill_diagonal(upper, 0.0)

    lower, upper = _smooth(lower, upper)
    bad = lower > upper
    inconsistent = int(np.triu(bad, 1).sum())
    if inconsistent:
        logger.warning("%s: %d inconsistent distance bounds clamped", molecule.id, inconsistent)
        lower = np.where(bad, upper, lower)
    return BoundsMatrix(lower, upper, inconsistent)


def _metric_embed(dist: np.ndarray) -> np.ndarray:
    """Coordinates from a distance matrix via the centroid Gram matrix."""
    n = len(dist)
    d2 = dist * dist
    d0 = d2.mean(axis=1) - d2.sum() / (2.0 * n * n)
    gram = 0.5 * (d0[:, None] + d0[None, :] - d2)
    evals, evecs = np.linalg.eigh(gram)
    top = np.argsort(evals)[::-1][:3]
    lam = np.clip(evals[top], 0.0, None)
    if not np.isfinite(lam).all() or lam.max() <= 0.0:
        raise np.linalg.LinAlgError("no positive eigenvalues")
    coords = evecs[:, top] * np.sqrt(lam)
    if coords.shape[1] < 3:
        coords = np.hstack([coords, np.zeros((n, 3 - coords.shape[1]))])
    return coords


def bounds_penalty(bounds: BoundsMatrix):
    """Batched objective ``sum max(0, d - u)^2 + max(0, l - d)^2`` over pairs.

    The returned function maps ``(B, n, 3)`` coordinates to ``(values, gradients)``.
    """
    n = len(bounds.lower)
    i, j = np.triu_indices(n, k=1)
    lo = bounds.lower[i, j]
    hi = bounds.upper[i, j]
    flat = np.concatenate([j, i, np.arange(n)])
    order = np.argsort(flat, kind="stable")
    starts = np.searchsorted(flat[order], np.arange(n))

    def fun(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        v = x[:, j] - x[:, i]
        d = np.sqrt((v * v).sum(axis=-1))
        over = np.maximum(0.0, d - hi)
        under = np.maximum(0.0, lo - d)
        value = (over * over + under * under).sum(axis=1)
        dd = 2.0 * over - 2.0 * under
        safe = np.where(d > 0, d, 1.0)
        f = np.where(d > 0, dd / safe, 0.0)[..., None] * v
        parts = np.concatenate([f, -f, np.zeros_like(x)], axis=1)
        return value, np.add.reduceat(parts[:, order], starts, axis=1)

    return fun


def embed_start(bounds: BoundsMatrix, rng: np.random.Generator) -> np.ndarray:
    """Unrefined metric-matrix embedding from one random distance draw.

    Raises:
        EmbeddingError: no usable eigenvalues after 10 fresh draws.
    """
    n = len(bounds.lower)
    if n == 1:
        return np.zeros((1, 3))
    i, j = np.triu_indices(n, k=1)
    for _ in range(MAX_EMBED_ATTEMPTS):
        dist = np.zeros((n, n))
        dist[i, j] = rng.uniform(bounds.lower[i, j], bounds.upper[i, j])
        dist += dist.T
        try:
            return _metric_embed(dist)
        except np.linalg.LinAlgError:
            continue
    raise EmbeddingError(f"embedding failed after {MAX_EMBED_ATTEMPTS} attempts")


def refine_embeddings(bounds: BoundsMatrix, starts: np.ndarray, iters: int) -> np.ndarray:
    """Descend the bounds-violation penalty for ``iters`` steps (batched)."""
    starts = np.asarray(starts, dtype=float)
    if iters <= 0 or len(starts) == 0 or starts.shape[1] < 2:
        return starts
    return descend(bounds_penalty(bounds), starts, max_iters=iters, tol=1e-6).x


def draw_geometric(bounds: BoundsMatrix, rng: np.random.Generator, refine_iters: int) -> np.ndarray:
    """One refined distance-geometry embedding."""
    return refine_embeddings(bounds, embed_start(bounds, rng)[None], refine_iters)[0]


def sample_geometric(
    molecule: Molecule,
    count: int,
    config: SamplerConfig = SamplerConfig(),
    bounds: BoundsMatrix | None = None,
) -> Ensemble:
    """Classical distance-geometry embedding.

    Each sample draws every pair distance uniformly inside its smoothed
    bounds, embeds the metric matrix in 3D and refines the coordinates against
    the bounds. Samples keeping a heavy-atom clash carry a ``"clash"`` flag.
    """
    _require_sampleable(molecule)
    if count < 0:
        raise SamplingError("count must be non-negative")
    if bounds is None:
        bounds = build_bounds(molecule, config.clash_factor)
    pairs = clash_pairs(molecule, config.clash_factor)
    starts = [
        embed_start(bounds, sample_rng(config.seed, molecule.id, "geometric", index))
        for index in range(count)
    ]
    starts = np.array(starts).reshape(count, molecule.n_atoms, 3)
    refined = refine_embeddings(bounds, starts, config.dg_refine_iters)
    out = []
    for coords in refined:
        flags = ("clash",) if _has_clash(coords, pairs) else ()
        out.append(Conformer(molecule.id, coords, None, Provenance.GEOMETRIC, flags))
    return Ensemble.of(molecule, out)
