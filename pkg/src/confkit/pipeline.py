"""End-to-end sampling, clustering and evaluation over a set of molecules.

Per molecule with ``n_ref`` reference conformers the default budget is
``n_e = min(20 n_ref, 2000)`` energy-sampler conformers plus ``ceil(n_e / 4)``
each from the uniform and geometric samplers. The pooled candidates are
clustered into ``k = 2 n_ref`` groups and one representative per group is
scored against the references with COV / MAT.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
import csv
from dataclasses import asdict, dataclass, field, replace
import io
import json
import logging
import math
import time

from confkit import __version__
from confkit.clustering import featurize, kmeans, select_representatives
from confkit.forcefield import build_model, build_template, sample_energy
from confkit.metrics import MetricsConfig, MetricsReport, MoleculeMetrics, evaluate_molecule, summarize
from confkit.molio import Conformer, Ensemble, Molecule, Provenance
from confkit.samplers import SamplerConfig, sample_geometric, sample_uniform

__all__ = [
    "ALLOWED_MULTIPLIERS",
    "SAMPLERS",
    "BenchmarkResult",
    "MoleculeRun",
    "PipelineConfig",
    "PipelineError",
    "SamplingBudget",
    "compute_budget",
    "report_csv",
    "report_json",
    "run_benchmark",
    "run_molecule",
]

logger = logging.getLogger(__name__)

SAMPLERS = ("uniform", "geometric", "energy")
ALLOWED_MULTIPLIERS = frozenset({2, 4, 5, 10, 20})
REPORT_VERSION = 1
# sampler weights in the 1:1:4 mix
_WEIGHTS = {"uniform": 1, "geometric": 1, "energy": 4}
_MAX_DEFAULT_NREF = 1500


class PipelineError(ValueError):
    """Invalid pipeline configuration or input."""


@dataclass(frozen=True)
class SamplingBudget:
    n_ref: int
    n_e: int
    n_u: int
    n_g: int
    multiplier: int = 20
    cap: int = 2000

    @property
    def total(self) -> int:
        return self.n_e + self.n_u + self.n_g


def compute_budget(n_ref: int, multiplier: int = 20, cap: int = 2000) -> SamplingBudget:
    """``n_e = min(multiplier * n_ref, cap)``, ``n_u = n_g = ceil(n_e / 4)``."""
    if n_ref < 1:
        raise PipelineError(f"n_ref must be >= 1, got {n_ref}")
    if multiplier < 1 or cap < 1:
        raise PipelineError("multiplier and cap must be positive")
    n_e = min(multiplier * n_ref, cap)
    quarter = math.ceil(n_e / 4)
    return SamplingBudget(n_ref, n_e, quarter, quarter, multiplier, cap)


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs of one benchmark run.

    ``samplers`` lists the enabled samplers. With ``redistribute`` the total
    candidate count is kept when a sampler is disabled; otherwise the
    remaining samplers keep their own budgets. ``ingest`` maps a sampler role
    to externally generated ensembles (by molecule id) used instead of
    sampling; ``strict_ingest`` demands they match the budget exactly.
    ``fixed_count`` replaces the reference-derived ``n_ref`` for budgeting and
    cluster count.
    """

    seed: int = 0
    multiplier: int = 20
    cap: int = 2000
    samplers: tuple[str, ...] = SAMPLERS
    threshold: float = 0.5
    redistribute: bool = False
    selection: str = "medoid"
    heavy_only_features: bool = True
    allow_any_multiplier: bool = False
    echo_reference: bool = False
    strict_ingest: bool = False
    fixed_count: int | None = None
    ref_count_range: tuple[int, int] | None = None
    clash_factor: float = 0.7
    dg_refine_iters: int = 200
    ingest: Mapping[str, Mapping[str, Ensemble]] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        samplers = tuple(s for s in SAMPLERS if s in set(self.samplers))
        unknown = set(self.samplers) - set(SAMPLERS)
        if unknown:
            raise PipelineError(f"unknown sampler(s): {sorted(unknown)}")
        if not samplers:
            raise PipelineError("at least one sampler must be enabled")
        object.__setattr__(self, "samplers", samplers)
        if not self.allow_any_multiplier and self.multiplier not in ALLOWED_MULTIPLIERS:
            raise PipelineError(
                f"multiplier {self.multiplier} not in {sorted(ALLOWED_MULTIPLIERS)}; "
                "set allow_any_multiplier to override"
            )
        if self.multiplier < 1:
            raise PipelineError("multiplier must be positive")
        if self.selection not in ("medoid", "centroid"):
            raise PipelineError(f"unknown selection mode {self.selection!r}")
        if not self.threshold > 0:
            raise PipelineError("threshold must be positive")
        if self.fixed_count is not None and self.fixed_count < 1:
            raise PipelineError("fixed_count must be >= 1")
        for role in self.ingest:
            if role not in SAMPLERS:
                raise PipelineError(f"unknown ingest role {role!r}")

    @property
    def label(self) -> str:
        parts = [f"{self.multiplier}N_ref"]
        for s in SAMPLERS:
            if s not in self.samplers:
                parts.append(f"w/o {s.capitalize()} sampler")
        if self.echo_reference:
            parts.append("generated = reference")
        return ", ".join(parts)

    def echo(self) -> dict:
        """Configuration as stored in reports (ingested data is summarized)."""
        out = {
            "seed": self.seed,
            "multiplier": self.multiplier,
            "cap": self.cap,
            "delta": self.threshold,
            "samplers": list(self.samplers),
            "redistribute": self.redistribute,
            "selection": self.selection,
            "heavy_only_features": self.heavy_only_features,
            "echo_reference": self.echo_reference,
            "fixed_count": self.fixed_count,
            "ref_count_range": list(self.ref_count_range) if self.ref_count_range else None,
            "clash_factor": self.clash_factor,
            "dg_refine_iters": self.dg_refine_iters,
            "ingest_roles": sorted(self.ingest),
            "strict_ingest": self.strict_ingest,
        }
        return out


@dataclass
class MoleculeRun:
    """Bookkeeping for one molecule: counts, cluster count, timings, warnings."""

    molecule_id: str
    n_ref: int
    budget: SamplingBudget
    sampler_counts: dict[str, int]
    k: int
    n_selected: int
    warnings: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)


def _sampler_counts(budget: SamplingBudget, config: PipelineConfig) -> dict[str, int]:
    base = {"uniform": budget.n_u, "geometric": budget.n_g, "energy": budget.n_e}
    if not config.redistribute:
        return {s: (base[s] if s in config.samplers else 0) for s in SAMPLERS}
    total = budget.total
    weight = sum(_WEIGHTS[s] for s in config.samplers)
    counts = {s: 0 for s in SAMPLERS}
    for s in config.samplers:
        counts[s] = math.ceil(total * _WEIGHTS[s] / weight)
    return counts


def _ingested(
    role: str, ensemble: Ensemble, count: int, config: PipelineConfig, warnings: list[str]
) -> list[Conformer]:
    if len(ensemble) != count:
        if config.strict_ingest:
            raise PipelineError(
                f"{ensemble.molecule_id}: ingested {role} ensemble has {len(ensemble)} "
                f"conformers, budget is {count}"
            )
        if len(ensemble) < count:
            warnings.append(f"ingested {role} ensemble smaller than budget ({len(ensemble)} < {count})")
    provenance = Provenance(role)
    return [
        c.with_coords(c.coords, provenance=provenance, flags=c.flags + ("external",))
        for c in list(ensemble)[:count]
    ]


def generate_candidates(
    molecule: Molecule, counts: Mapping[str, int], config: PipelineConfig, warnings: list[str]
) -> Ensemble:
    """Pool the enabled samplers' output (ingested ensembles take precedence)."""
    sconf = SamplerConfig(config.seed, config.clash_factor, config.dg_refine_iters)
    pool: list[Conformer] = []
    need_sampling = [s for s in SAMPLERS if counts[s] > 0 and molecule.id not in config.ingest.get(s, {})]
    template = None
    model = None
    if need_sampling:
        if not molecule.is_connected:
            raise PipelineError(f"{molecule.id}: several fragments; provide ingested ensembles")
        if {"uniform", "energy"} & set(need_sampling):
            model = build_model(molecule)
            template = build_template(molecule, sconf, model)
    for role in SAMPLERS:
        count = counts[role]
        if count == 0:
            continue
        external = config.ingest.get(role, {}).get(molecule.id)
        if external is not None:
            if external.symbols != molecule.symbols:
                raise PipelineError(f"{molecule.id}: ingested {role} ensemble has other atoms")
            pool += _ingested(role, external, count, config, warnings)
        elif role == "uniform":
            ens = sample_uniform(molecule, template, count, sconf)
            if any("no_rotatable_bonds" in c.flags for c in ens):
                warnings.append("no rotatable bonds: uniform sampler returned template copies")
            pool += list(ens)
        elif role == "geometric":
            pool += list(sample_geometric(molecule, count, sconf))
        else:
            ens = sample_energy(molecule, model, count, sconf, template=template)
            unconverged = sum("not_converged" in c.flags for c in ens)
            if unconverged:
                warnings.append(f"{unconverged} energy-sampler minimizations did not converge")
            pool += list(ens)
    return Ensemble.of(molecule, pool)


def run_molecule(
    molecule: Molecule, reference: Ensemble, config: PipelineConfig = PipelineConfig()
) -> tuple[Ensemble, MoleculeMetrics, MoleculeRun]:
    """Sample, cluster into ``2 n_ref`` groups, pick representatives and score them.

    Raises:
        PipelineError: empty reference, no candidates, or bad ingested data.
    """
    if len(reference) == 0:
        raise PipelineError(f"{molecule.id}: empty reference ensemble")
    if reference.symbols != molecule.symbols:
        raise PipelineError(f"{molecule.id}: reference atoms do not match molecule")
    n_ref = config.fixed_count or len(reference)
    warnings: list[str] = []
    timings: dict[str, float] = {}
    budget = compute_budget(n_ref, config.multiplier, config.cap)
    if n_ref > _MAX_DEFAULT_NREF:
        warnings.append(f"n_ref={n_ref} > {_MAX_DEFAULT_NREF}: capped budget may undershoot 2*n_ref")
    counts = _sampler_counts(budget, config)
    k = 2 * n_ref

    if config.echo_reference:
        selected = Ensemble(
            molecule.id,
            molecule.symbols,
            tuple(c.with_coords(c.coords, provenance=Provenance.REFERENCE) for c in reference),
        )
        counts = {s: 0 for s in SAMPLERS}
        k = len(reference)
    else:
        t0 = time.perf_counter()
        candidates = generate_candidates(molecule, counts, config, warnings)
        timings["sampling"] = time.perf_counter() - t0
        if len(candidates) == 0:
            raise PipelineError(f"{molecule.id}: no candidates generated")
        t0 = time.perf_counter()
        if len(candidates) <= k:
            if len(candidates) < k:
                warnings.append(f"only {len(candidates)} candidates for k={k}; returning all")
            selected = candidates
        else:
            features = featurize(candidates, molecule, config.heavy_only_features)
            model = kmeans(features, k, config.seed)
            selected = select_representatives(
                candidates, model, config.selection, features, molecule
            )
        timings["clustering"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    metrics = evaluate_molecule(selected, reference, MetricsConfig(config.threshold), warnings)
    timings["metrics"] = time.perf_counter() - t0
    run = MoleculeRun(molecule.id, len(reference), budget, counts, k, len(selected), warnings, timings)
    return selected, metrics, run


@dataclass
class BenchmarkResult:
    report: MetricsReport
    config: PipelineConfig
    runs: list[MoleculeRun]
    selected: dict[str, Ensemble]
    failures: dict[str, str]
    skipped: dict[str, str]

    def manifest(self) -> dict:
        """Everything needed to re-run: config, per-molecule counts, timings."""
        return {
            "version": REPORT_VERSION,
            "tool_version": __version__,
            "label": self.config.label,
            "config": self.config.echo(),
            "molecules": [
                {
                    "id": r.molecule_id,
                    "n_ref": r.n_ref,
                    "budget": asdict(r.budget),
                    "sampler_counts": r.sampler_counts,
                    "k": r.k,
                    "n_selected": r.n_selected,
                    "warnings": r.warnings,
                    "timings": r.timings,
                }
                for r in self.runs
            ],
            "failures": self.failures,
            "skipped": self.skipped,
        }


def run_benchmark(
    items: Iterable[tuple[Molecule, Ensemble]], config: PipelineConfig = PipelineConfig()
) -> BenchmarkResult:
    """:func:`run_molecule` for every molecule (in id order), then summarize.

    Per-molecule errors are recorded in ``failures`` and the molecule skipped.
    Molecules outside ``config.ref_count_range`` are skipped.

    Raises:
        PipelineError: no molecules, or every molecule failed or was filtered.
    """
    items = sorted(items, key=lambda pair: pair[0].id)
    if not items:
        raise PipelineError("no molecules to run")
    metrics: list[MoleculeMetrics] = []
    runs: list[MoleculeRun] = []
    selected: dict[str, Ensemble] = {}
    failures: dict[str, str] = {}
    skipped: dict[str, str] = {}
    for molecule, reference in items:
        if config.ref_count_range is not None:
            lo, hi = config.ref_count_range
            if not lo <= len(reference) <= hi:
                skipped[molecule.id] = f"{len(reference)} references outside [{lo}, {hi}]"
                continue
        try:
            sel, met, run = run_molecule(molecule, reference, config)
        except ValueError as exc:
            logger.error("%s failed: %s", molecule.id, exc)
            failures[molecule.id] = str(exc)
            continue
        metrics.append(met)
        runs.append(run)
        selected[molecule.id] = sel
    if not metrics:
        raise PipelineError("no molecule produced metrics: " + json.dumps(failures or skipped))
    report = summarize(metrics, MetricsConfig(config.threshold))
    return BenchmarkResult(report, config, runs, selected, failures, skipped)


def report_dict(result: BenchmarkResult) -> dict:
    """JSON-ready report; COV is expressed in percent."""
    rep = result.report
    return {
        "version": REPORT_VERSION,
        "tool_version": __version__,
        "label": result.config.label,
        "config": {
            "seed": result.config.seed,
            "multiplier": result.config.multiplier,
            "delta": result.config.threshold,
            "samplers": list(result.config.samplers),
        },
        "molecules": [
            {
                "id": m.molecule_id,
                "n_ref": m.n_ref,
                "n_gen": m.n_gen,
                "cov": 100.0 * m.cov,
                "mat": m.mat,
                "warnings": list(m.warnings),
            }
            for m in rep.molecules
        ],
        "summary": {
            "cov_mean": 100.0 * rep.cov_mean,
            "cov_median": 100.0 * rep.cov_median,
            "mat_mean": rep.mat_mean,
            "mat_median": rep.mat_median,
        },
        "failures": dict(sorted(result.failures.items())),
    }


def report_json(result: BenchmarkResult) -> str:
    return json.dumps(report_dict(result), indent=2, sort_keys=False) + "\n"


def report_csv(result: BenchmarkResult) -> str:
    """Flat CSV: one row per molecule, then ``mean`` and ``median`` rows."""
    data = report_dict(result)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["# confkit", data["tool_version"], data["label"], json.dumps(data["config"])])
    writer.writerow(["id", "n_ref", "n_gen", "cov_percent", "mat_angstrom", "warnings"])
    for m in data["molecules"]:
        writer.writerow(
            [m["id"], m["n_ref"], m["n_gen"], repr(m["cov"]), repr(m["mat"]), "; ".join(m["warnings"])]
        )
    s = data["summary"]
    writer.writerow(["mean", "", "", repr(s["cov_mean"]), repr(s["mat_mean"]), ""])
    writer.writerow(["median", "", "", repr(s["cov_median"]), repr(s["mat_median"]), ""])
    return buf.getvalue()


def with_samplers(config: PipelineConfig, disabled: Sequence[str]) -> PipelineConfig:
    """Copy of ``config`` with the named samplers switched off."""
    return replace(config, samplers=tuple(s for s in config.samplers if s not in set(disabled)))
