"""Rigid-body geometry: centering, Kabsch superposition, RMSD and torsions.

Functions accept either a :class:`~confkit.molio.Conformer` or a plain
``(n, 3)`` array and return the same kind they were given.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TypeVar

import numpy as np

from confkit.molio import Conformer, Molecule

__all__ = [
    "AlignmentTransform",
    "DihedralSpec",
    "GeometryError",
    "centroid_center",
    "dihedral_spec",
    "kabsch_align",
    "measure_dihedral",
    "rmsd",
    "set_dihedral",
]

C = TypeVar("C", Conformer, np.ndarray)


class GeometryError(ValueError):
    """Degenerate or inconsistent geometric input."""


@dataclass(frozen=True, eq=False)
class AlignmentTransform:
    """Proper rigid motion ``x -> x @ rotation.T + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, coords: np.ndarray) -> np.ndarray:
        return np.asarray(coords) @ self.rotation.T + self.translation


@dataclass(frozen=True)
class DihedralSpec:
    """Torsion a-b-c-d; ``rotating_side`` moves when the b-c torsion changes."""

    a: int
    b: int
    c: int
    d: int
    rotating_side: frozenset[int]

    @property
    def atoms(self) -> tuple[int, int, int, int]:
        return (self.a, self.b, self.c, self.d)


def _coords(x: Conformer | np.ndarray) -> np.ndarray:
    if isinstance(x, Conformer):
        return x.coords
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise GeometryError(f"expected (n, 3) coordinates, got shape {arr.shape}")
    return arr


def _wrap(template: C, coords: np.ndarray) -> C:
    if isinstance(template, Conformer):
        return template.with_coords(coords)
    return coords


def _mask(mask: np.ndarray | None, n: int) -> np.ndarray:
    if mask is None:
        return np.ones(n, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n,):
        raise GeometryError(f"mask has shape {mask.shape}, expected ({n},)")
    if not mask.any():
        raise GeometryError("mask selects zero atoms")
    return mask


def centroid_center(conformer: C, mask: np.ndarray | None = None) -> C:
    """Translate all atoms so the centroid of the masked atoms is the origin."""
    xyz = _coords(conformer)
    m = _mask(mask, len(xyz))
    return _wrap(conformer, xyz - xyz[m].mean(axis=0))


def kabsch_rotation(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Proper rotation ``R`` minimising ``|p @ R.T - q|`` for centred ``p``, ``q``.

    Rank-deficient inputs (fewer than three points, collinear sets) still get
    an optimal rotation; it is just not unique.
    """
    h = p.T @ q
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0:
        d = 1.0
    # flip the singular vector of the smallest singular value to exclude reflections
    return vt.T @ np.diag([1.0, 1.0, d]) @ u.T


def kabsch_align(
    mobile: C, reference: Conformer | np.ndarray, mask: np.ndarray | None = None
) -> tuple[AlignmentTransform, C]:
    """Superimpose ``mobile`` onto ``reference`` using the masked atoms.

    Returns:
        transform: Rigid motion taking mobile coordinates into the reference frame.
        aligned: All atoms of ``mobile`` after applying ``transform``.

    Raises:
        GeometryError: Atom-count mismatch or an empty mask.
    """
    x = _coords(mobile)
    y = _coords(reference)
    if x.shape != y.shape:
        raise GeometryError(f"atom-count mismatch: {len(x)} vs {len(y)}")
    m = _mask(mask, len(x))
    cx = x[m].mean(axis=0)
    cy = y[m].mean(axis=0)
    rot = kabsch_rotation(x[m] - cx, y[m] - cy)
    transform = AlignmentTransform(rot, cy - rot @ cx)
    return transform, _wrap(mobile, transform.apply(x))


def rmsd(
    generated: Conformer | np.ndarray,
    reference: Conformer | np.ndarray,
    mask: np.ndarray | None = None,
) -> float:
    """Minimum root-mean-square deviation over proper rigid motions.

    ``mask`` selects the atoms that count; pass ``molecule.heavy_mask`` (or
    ``ensemble.heavy_mask``) for the heavy-atom RMSD used by the benchmark.
    """
    x = _coords(generated)
    y = _coords(reference)
    if x.shape != y.shape:
        raise GeometryError(f"atom-count mismatch: {len(x)} vs {len(y)}")
    m = _mask(mask, len(x))
    p = x[m] - x[m].mean(axis=0)
    q = y[m] - y[m].mean(axis=0)
    rot = kabsch_rotation(p, q)
    diff = p @ rot.T - q
    return float(np.sqrt((diff * diff).sum() / len(p)))


def rmsd_matrix(
    generated: np.ndarray, reference: np.ndarray, mask: np.ndarray | None = None
) -> np.ndarray:
    """Pairwise RMSD, ``out[i, j] = rmsd(generated[i], reference[j])``.

    Both inputs are stacks of shape ``(m, n, 3)``.
    """
    generated = np.asarray(generated, dtype=float)
    reference = np.asarray(reference, dtype=float)
    m = _mask(mask, generated.shape[1])
    p = generated[:, m]
    q = reference[:, m]
    p = p - p.mean(axis=1, keepdims=True)
    q = q - q.mean(axis=1, keepdims=True)
    # batched Kabsch over all (i, j) pairs
    h = np.einsum("ian,jam->ijnm", p, q)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(np.swapaxes(vt, -1, -2) @ np.swapaxes(u, -1, -2)))
    d[d == 0] = 1.0
    u = u.copy()
    u[..., :, 2] *= d[..., None]
    rot = np.swapaxes(vt, -1, -2) @ np.swapaxes(u, -1, -2)
    rotated = np.einsum("ijnm,iam->ijan", rot, p)
    diff = rotated - q[None, :, :, :]
    return np.sqrt((diff**2).sum(axis=(2, 3)) / p.shape[1])


def _torsion(p0, p1, p2, p3) -> float:
    b1 = p1 - p0
    b2 = p2 - p1
    b3 = p3 - p2
    n1 = np.cross(b1, b2)
    n2 = np.cross(b2, b3)
    nb2 = np.linalg.norm(b2)
    if np.linalg.norm(n1) < 1e-10 * max(1.0, nb2) or np.linalg.norm(n2) < 1e-10 * max(1.0, nb2):
        raise GeometryError("collinear atoms: torsion undefined")
    y = nb2 * np.dot(b1, n2)
    x = np.dot(n1, n2)
    return float(np.degrees(np.arctan2(y, x)))


def _wrap_angle(angle: float) -> float:
    """Map degrees into [-180, 180)."""
    wrapped = (angle + 180.0) % 360.0 - 180.0
    return -180.0 if wrapped >= 180.0 else wrapped


def measure_dihedral(conformer: Conformer | np.ndarray, spec: DihedralSpec) -> float:
    """Signed a-b-c-d torsion in degrees, range [-180, 180)."""
    xyz = _coords(conformer)
    return _wrap_angle(_torsion(*(xyz[i] for i in spec.atoms)))


def _rotate_about_axis(points, origin, axis, angle_rad):
    k = axis / np.linalg.norm(axis)
    v = points - origin
    cos, sin = np.cos(angle_rad), np.sin(angle_rad)
    rotated = v * cos + np.cross(k, v) * sin + np.outer(v @ k, k) * (1.0 - cos)
    return rotated + origin


def set_dihedral(conformer: C, spec: DihedralSpec, angle: float) -> C:
    """Rotate ``spec.rotating_side`` about the b-c axis so the torsion equals ``angle``."""
    if not np.isfinite(angle):
        raise GeometryError("dihedral angle must be finite")
    xyz = _coords(conformer)
    current = _torsion(*(xyz[i] for i in spec.atoms))
    delta = np.radians(angle - current)
    if delta == 0.0:
        return _wrap(conformer, xyz.copy())
    out = xyz.copy()
    side = np.fromiter(sorted(spec.rotating_side), dtype=int)
    axis = xyz[spec.c] - xyz[spec.b]
    if np.linalg.norm(axis) < 1e-10:
        raise GeometryError("degenerate rotation axis")
    out[side] = _rotate_about_axis(xyz[side], xyz[spec.c], axis, delta)
    return _wrap(conformer, out)


def dihedral_spec(molecule: Molecule, a: int, b: int, c: int, d: int) -> DihedralSpec:
    """Build a validated :class:`DihedralSpec` for the a-b-c-d path of ``molecule``.

    The rotating side is the component holding ``c`` and ``d`` once the b-c
    bond is cut.

    Raises:
        GeometryError: the path is not bonded, atoms repeat, or b-c is in a ring.
    """
    if len({a, b, c, d}) != 4:
        raise GeometryError("dihedral atoms must be distinct")
    nbrs = molecule.neighbors
    if b not in nbrs[a] or c not in nbrs[b] or d not in nbrs[c]:
        raise GeometryError(f"{a}-{b}-{c}-{d} is not a bonded path")
    seen = {c}
    stack = [c]
    while stack:
        u = stack.pop()
        for v in nbrs[u]:
            if u == c and v == b:
                continue
            if v not in seen:
                seen.add(v)
                stack.append(v)
    if b in seen:
        raise GeometryError(f"bond {b}-{c} lies in a ring; torsion cannot be set rigidly")
    return DihedralSpec(a, b, c, d, frozenset(seen))
