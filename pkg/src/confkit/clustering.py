"""K-means over aligned conformer coordinates and representative selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from confkit.geom3d import AlignmentTransform, centroid_center, kabsch_align
from confkit.molio import Conformer, Ensemble, Molecule

__all__ = [
    "ClusterModel",
    "ClusteringError",
    "FeatureMatrix",
    "featurize",
    "kmeans",
    "select_representatives",
]

MAX_LLOYD_ITERS = 300


class ClusteringError(ValueError):
    """Invalid cluster count or mismatched inputs."""


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Flattened aligned coordinates, one row per conformer.

    ``transforms[r]`` maps conformer ``r``'s original coordinates into the
    common frame; ``mask`` marks the atoms that make up a row.
    """

    rows: np.ndarray
    reference_index: int
    mask: np.ndarray
    transforms: tuple[AlignmentTransform, ...] = ()

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True, eq=False)
class ClusterModel:
    k: int
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    medoid_indices: np.ndarray
    inertia_history: list[float] = field(default_factory=list)
    n_iter: int = 0


def _alignment_reference(ensemble: Ensemble) -> int:
    energies = [(c.energy, i) for i, c in enumerate(ensemble) if c.energy is not None]
    return min(energies)[1] if energies else 0


def featurize(
    ensemble: Ensemble, molecule: Molecule | None = None, heavy_only: bool = True
) -> FeatureMatrix:
    """Center every conformer and Kabsch-align it onto one reference conformer.

    The reference is the lowest-energy conformer when any energies are
    present, otherwise the first. Rows hold ``x1, y1, z1, x2, ...`` of the
    masked atoms in atom-index order.
    """
    if len(ensemble) == 0:
        raise ClusteringError("cannot featurize an empty ensemble")
    if molecule is not None and molecule.symbols != ensemble.symbols:
        raise ClusteringError("ensemble does not match molecule")
    mask = ensemble.heavy_mask if heavy_only else np.ones(ensemble.n_atoms, dtype=bool)
    ref = _alignment_reference(ensemble)
    ref_xyz = centroid_center(ensemble[ref].coords, mask)
    rows = np.empty((len(ensemble), 3 * int(mask.sum())))
    transforms = []
    for r, conf in enumerate(ensemble):
        transform, aligned = kabsch_align(conf.coords, ref_xyz, mask)
        rows[r] = aligned[mask].ravel()
        transforms.append(transform)
    return FeatureMatrix(rows, ref, mask, tuple(transforms))


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = (x * x).sum(axis=1)[:, None] - 2.0 * x @ centers.T + (centers * centers).sum(axis=1)[None]
    return np.maximum(d2, 0.0)


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    m = len(x)
    chosen = [int(rng.integers(m))]
    closest = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(m, p=closest / total))
        else:
            # all remaining points coincide with a centre
            idx = int(rng.integers(m))
        chosen.append(idx)
        closest = np.minimum(closest, ((x - x[idx]) ** 2).sum(axis=1))
    return x[chosen].copy()


def _repair_empty(x, labels, centers, k):
    """Re-seed each empty cluster with the point farthest from its own centroid."""
    counts = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(counts == 0):
        own = ((x - centers[labels]) ** 2).sum(axis=1)
        movable = counts[labels] > 1
        own = np.where(movable, own, -1.0)
        p = int(np.argmax(own))
        counts[labels[p]] -= 1
        labels[p] = c
        counts[c] = 1
        centers[c] = x[p]
    return labels


def _means(x, labels, k):
    centers = np.zeros((k, x.shape[1]))
    np.add.at(centers, labels, x)
    return centers / np.bincount(labels, minlength=k)[:, None]


def _inertia(x, labels, centers) -> float:
    diff = x - centers[labels]
    return float((diff * diff).sum())


def kmeans(features: FeatureMatrix | np.ndarray, k: int, seed: int = 0) -> ClusterModel:
    """Lloyd's algorithm with seeded k-means++ initialization.

    Iterates until the assignments stop changing or 300 iterations. Ties in
    assignment go to the lower cluster index and empty clusters are re-seeded,
    so every cluster ends non-empty.

    Raises:
        ClusteringError: if ``k`` is not in ``1..n_rows``.
    """
    x = np.asarray(features.rows if isinstance(features, FeatureMatrix) else features, float)
    m = len(x)
    if k <= 0 or k > m:
        raise ClusteringError(f"k must be in 1..{m}, got {k}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(x, k, rng)
    labels = None
    history = []
    n_iter = 0
    for n_iter in range(1, MAX_LLOYD_ITERS + 1):
        new = np.argmin(_sq_dists(x, centers), axis=1)
        new = _repair_empty(x, new, centers, k)
        changed = labels is None or not np.array_equal(new, labels)
        labels = new
        centers = _means(x, labels, k)
        history.append(_inertia(x, labels, centers))
        if not changed:
            break
    d2 = ((x - centers[labels]) ** 2).sum(axis=1)
    medoids = np.empty(k, dtype=int)
    for c in range(k):
        members = np.flatnonzero(labels == c)
        medoids[c] = members[np.argmin(d2[members])]
    return ClusterModel(k, labels, centers, float(d2.sum()), medoids, history, n_iter)


def _centroid_conformer(
    ensemble: Ensemble,
    features: FeatureMatrix,
    model: ClusterModel,
    cluster: int,
    molecule: Molecule | None,
) -> Conformer:
    medoid = int(model.medoid_indices[cluster])
    conf = ensemble[medoid]
    aligned = features.transforms[medoid].apply(conf.coords)
    target = model.centroids[cluster].reshape(-1, 3)
    out = aligned.copy()
    idx = np.flatnonzero(features.mask)
    shift = np.zeros_like(out)
    shift[idx] = target - aligned[idx]
    out[idx] = target
    if not features.mask.all():
        if molecule is None:
            raise ClusteringError("centroid mode with a heavy-atom mask needs the molecule")
        # unmasked atoms ride along with the first masked neighbour
        for a in np.flatnonzero(~features.mask):
            anchors = [b for b in molecule.neighbors[a] if features.mask[b]]
            if anchors:
                out[a] = aligned[a] + shift[anchors[0]]
    return conf.with_coords(out, energy=None, flags=conf.flags + ("centroid",))


def select_representatives(
    ensemble: Ensemble,
    model: ClusterModel,
    mode: str = "medoid",
    features: FeatureMatrix | None = None,
    molecule: Molecule | None = None,
) -> Ensemble:
    """One conformer per cluster, ordered by cluster index.

    ``mode="medoid"`` returns the untouched input conformer nearest each
    centroid. ``mode="centroid"`` instead builds a conformer whose masked
    atoms sit at the centroid (needs ``features``, and ``molecule`` when
    hydrogens were left out of the features).
    """
    if len(model.assignments) != len(ensemble):
        raise ClusteringError(
            f"model covers {len(model.assignments)} rows, ensemble has {len(ensemble)}"
        )
    if mode == "medoid":
        picked = [ensemble[int(i)] for i in model.medoid_indices]
    elif mode == "centroid":
        if features is None:
            raise ClusteringError("centroid mode needs the feature matrix")
        picked = [
            _centroid_conformer(ensemble, features, model, c, molecule) for c in range(model.k)
        ]
    else:
        raise ClusteringError(f"unknown selection mode {mode!r}")
    return Ensemble(ensemble.molecule_id, ensemble.symbols, tuple(picked))
