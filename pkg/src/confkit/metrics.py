"""Coverage (COV) and matching (MAT) of a generated ensemble against references."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from confkit.geom3d import rmsd_matrix
from confkit.molio import Ensemble

__all__ = [
    "DRUGS_THRESHOLD",
    "MetricsConfig",
    "MetricsError",
    "MetricsReport",
    "MoleculeMetrics",
    "QM9_THRESHOLD",
    "coverage",
    "evaluate_molecule",
    "matching",
    "pairwise_rmsd",
    "summarize",
]

QM9_THRESHOLD = 0.5
DRUGS_THRESHOLD = 1.25


class MetricsError(ValueError):
    """Empty or mismatched ensembles."""


@dataclass(frozen=True)
class MetricsConfig:
    threshold: float = QM9_THRESHOLD
    heavy_only: bool = True

    def __post_init__(self) -> None:
        if not self.threshold > 0:
            raise MetricsError(f"threshold must be positive, got {self.threshold}")


@dataclass(frozen=True)
class MoleculeMetrics:
    molecule_id: str
    cov: float
    mat: float
    n_ref: int
    n_gen: int
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class MetricsReport:
    """Per-molecule metrics plus mean / median summaries (COV as a fraction)."""

    molecules: tuple[MoleculeMetrics, ...]
    cov_mean: float
    cov_median: float
    mat_mean: float
    mat_median: float
    config: MetricsConfig = field(default_factory=MetricsConfig)


def _check(generated: Ensemble, reference: Ensemble) -> None:
    if len(reference) == 0:
        raise MetricsError("reference ensemble is empty")
    if len(generated) == 0:
        raise MetricsError("generated ensemble is empty")
    if generated.molecule_id != reference.molecule_id or generated.symbols != reference.symbols:
        raise MetricsError(
            f"molecule mismatch: {generated.molecule_id!r} vs {reference.molecule_id!r}"
        )


def pairwise_rmsd(generated: Ensemble, reference: Ensemble, heavy_only: bool = True) -> np.ndarray:
    """Heavy-atom RMSD matrix of shape ``(len(generated), len(reference))``."""
    _check(generated, reference)
    mask = reference.heavy_mask if heavy_only else None
    return rmsd_matrix(generated.coordinates(), reference.coordinates(), mask)


def coverage(
    generated: Ensemble,
    reference: Ensemble,
    config: MetricsConfig = MetricsConfig(),
    rmsds: np.ndarray | None = None,
) -> float:
    """Fraction of references with some generated conformer strictly within the threshold."""
    if rmsds is None:
        rmsds = pairwise_rmsd(generated, reference, config.heavy_only)
    return float((rmsds.min(axis=0) < config.threshold).mean())


def matching(
    generated: Ensemble,
    reference: Ensemble,
    config: MetricsConfig = MetricsConfig(),
    rmsds: np.ndarray | None = None,
) -> float:
    """Mean over references of the smallest RMSD to any generated conformer."""
    if rmsds is None:
        rmsds = pairwise_rmsd(generated, reference, config.heavy_only)
    return float(rmsds.min(axis=0).mean())


def evaluate_molecule(
    generated: Ensemble,
    reference: Ensemble,
    config: MetricsConfig = MetricsConfig(),
    warnings: Sequence[str] = (),
) -> MoleculeMetrics:
    rmsds = pairwise_rmsd(generated, reference, config.heavy_only)
    return MoleculeMetrics(
        reference.molecule_id,
        coverage(generated, reference, config, rmsds),
        matching(generated, reference, config, rmsds),
        len(reference),
        len(generated),
        tuple(warnings),
    )


def _median(values: list[float]) -> float:
    ordered = sorted(values)
    mid = len(ordered) // 2
    if len(ordered) % 2:
        return ordered[mid]
    return (ordered[mid - 1] + ordered[mid]) / 2.0


def summarize(
    per_molecule: Sequence[MoleculeMetrics], config: MetricsConfig = MetricsConfig()
) -> MetricsReport:
    """Mean and median of COV and MAT, molecules sorted by id."""
    if not per_molecule:
        raise MetricsError("nothing to summarize")
    rows = tuple(sorted(per_molecule, key=lambda m: m.molecule_id))
    cov = [m.cov for m in rows]
    mat = [m.mat for m in rows]
    return MetricsReport(
        rows,
        sum(cov) / len(cov),
        _median(cov),
        sum(mat) / len(mat),
        _median(mat),
        config,
    )
