"""``confkit`` command line: sample, cluster, eval and pipeline subcommands.

Exit codes: 0 success, 1 partial failure (some molecules failed), 2 invalid
configuration or input.
"""

from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path
import sys

import numpy as np

from confkit import __version__
from confkit.clustering import featurize, kmeans, select_representatives
from confkit.forcefield import build_model, build_template, sample_energy
from confkit.metrics import MetricsConfig, evaluate_molecule
from confkit.molio import Ensemble, Molecule, MolIOError, read_sdf, read_xyz, write_sdf, write_xyz
from confkit.pipeline import (
    SAMPLERS,
    PipelineConfig,
    report_csv,
    report_json,
    run_benchmark,
)
from confkit.samplers import SamplerConfig, sample_geometric, sample_uniform

logger = logging.getLogger("confkit")

EXIT_OK, EXIT_PARTIAL, EXIT_INVALID = 0, 1, 2


class InputError(Exception):
    """Bad user input; maps to exit code 2."""


def _read(path: Path) -> tuple[Molecule | None, Ensemble]:
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    if path.suffix.lower() == ".xyz":
        return None, read_xyz(path)
    return read_sdf(path)


def _write(path: Path, molecule: Molecule | None, ensemble: Ensemble) -> None:
    if path.suffix.lower() == ".xyz" or molecule is None:
        path.write_bytes(write_xyz(ensemble))
    else:
        path.write_bytes(write_sdf(molecule, ensemble))


def _has_3d(ensemble: Ensemble) -> bool:
    return len(ensemble) > 0 and bool(np.ptp(ensemble[0].coords[:, 2]) > 1e-6)


def cmd_sample(args) -> int:
    molecule, inp = _read(Path(args.input))
    if molecule is None:
        raise InputError("sampling needs connectivity: give an SDF file")
    config = SamplerConfig(seed=args.seed, clash_factor=args.clash_factor)
    count = args.count
    if count < 0:
        raise InputError("--count must be non-negative")
    counts = {args.sampler: count}
    if args.sampler == "all":
        # count is the energy-sampler share of the 1:1:4 mix
        quarter = -(-count // 4)
        counts = {"uniform": quarter, "geometric": quarter, "energy": count}
    model = build_model(molecule)
    template = None
    if counts.keys() & {"uniform", "energy"}:
        template = inp[0] if _has_3d(inp) else build_template(molecule, config, model)
    parts = []
    for name in SAMPLERS:
        n = counts.get(name, 0)
        if not n:
            continue
        if name == "uniform":
            parts += list(sample_uniform(molecule, template, n, config))
        elif name == "geometric":
            parts += list(sample_geometric(molecule, n, config))
        else:
            parts += list(sample_energy(molecule, model, n, config, template=template))
    out = Ensemble.of(molecule, parts)
    if len(out) == 0:
        raise InputError("nothing to write: count is 0")
    _write(Path(args.out), molecule, out)
    print(f"wrote {len(out)} conformers to {args.out}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    molecule, ens = _read(Path(args.input))
    if not 1 <= args.k <= len(ens):
        raise InputError(f"--k must be in 1..{len(ens)}")
    features = featurize(ens, molecule, heavy_only=not args.all_atoms)
    model = kmeans(features, args.k, args.seed)
    reps = select_representatives(ens, model, args.mode, features, molecule)
    _write(Path(args.out), molecule, reps)
    print(f"wrote {len(reps)} representatives to {args.out} (inertia {model.inertia:.6g})")
    return EXIT_OK


def cmd_eval(args) -> int:
    _, gen = _read(Path(args.gen))
    _, ref = _read(Path(args.ref))
    if gen.symbols != ref.symbols:
        raise InputError("generated and reference files describe different atoms")
    gen = Ensemble(ref.molecule_id, gen.symbols, gen.conformers)
    m = evaluate_molecule(gen, ref, MetricsConfig(args.delta, heavy_only=not args.all_atoms))
    result = {"id": m.molecule_id, "n_ref": m.n_ref, "n_gen": m.n_gen, "cov": 100.0 * m.cov, "mat": m.mat}
    if args.json:
        print(json.dumps(result))
    else:
        print(f"{m.molecule_id}: COV {100 * m.cov:.2f}%  MAT {m.mat:.4f} A  (n_ref={m.n_ref}, n_gen={m.n_gen})")
    return EXIT_OK


def _load_dir(directory: Path) -> list[tuple[Molecule, Ensemble]]:
    if not directory.is_dir():
        raise InputError(f"not a directory: {directory}")
    files = sorted(directory.glob("*.sdf"))
    if not files:
        raise InputError(f"no .sdf files in {directory}")
    items = [read_sdf(f) for f in files]
    ids = [m.id for m, _ in items]
    if len(set(ids)) != len(ids):
        raise InputError("duplicate molecule ids in reference directory")
    return items


def _load_ingest(specs: list[str]) -> dict[str, dict[str, Ensemble]]:
    ingest: dict[str, dict[str, Ensemble]] = {}
    for spec in specs:
        role, sep, directory = spec.partition("=")
        if not sep or role not in SAMPLERS:
            raise InputError(f"--ingest expects ROLE=DIR with ROLE in {SAMPLERS}, got {spec!r}")
        found: dict[str, Ensemble] = {}
        for f in sorted(Path(directory).glob("*")):
            if f.suffix.lower() == ".sdf":
                found[f.stem] = read_sdf(f)[1]
            elif f.suffix.lower() == ".xyz":
                found[f.stem] = read_xyz(f)
        for mol_id, ens in found.items():
            found[mol_id] = Ensemble(mol_id, ens.symbols, ens.conformers)
        ingest[role] = found
    return ingest


def cmd_pipeline(args) -> int:
    items = _load_dir(Path(args.ref))
    disabled = set(args.disable_sampler or ())
    config = PipelineConfig(
        seed=args.seed,
        multiplier=args.multiplier,
        cap=args.cap,
        samplers=tuple(s for s in SAMPLERS if s not in disabled),
        threshold=args.delta,
        redistribute=args.redistribute,
        selection=args.selection,
        allow_any_multiplier=args.allow_any_multiplier,
        echo_reference=args.echo_reference,
        strict_ingest=args.strict_ingest,
        fixed_count=args.fixed_count,
        ref_count_range=tuple(args.ref_count_range) if args.ref_count_range else None,
        ingest=_load_ingest(args.ingest or []),
    )
    result = run_benchmark(items, config)
    report = Path(args.report)
    report.write_text(report_json(result))
    manifest = Path(args.manifest) if args.manifest else report.with_suffix(".manifest.json")
    manifest.write_text(json.dumps(result.manifest(), indent=2) + "\n")
    if args.csv:
        Path(args.csv).write_text(report_csv(result))
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        molecules = {m.id: m for m, _ in items}
        for mol_id, ens in result.selected.items():
            (out / f"{mol_id}.sdf").write_bytes(write_sdf(molecules[mol_id], ens))
    rep = result.report
    print(
        f"{config.label}: {len(rep.molecules)} molecules, "
        f"COV mean {100 * rep.cov_mean:.2f}% median {100 * rep.cov_median:.2f}%, "
        f"MAT mean {rep.mat_mean:.4f} median {rep.mat_median:.4f}"
    )
    for mol_id, err in sorted(result.failures.items()):
        print(f"failed: {mol_id}: {err}", file=sys.stderr)
    if result.failures and not args.keep_going:
        return EXIT_PARTIAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="confkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"confkit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="generate conformers for one molecule")
    p.add_argument("--in", dest="input", required=True, help="SDF with the molecule (3D coordinates optional)")
    p.add_argument("--sampler", choices=(*SAMPLERS, "all"), default="all")
    p.add_argument("--count", type=int, required=True, help="conformers to draw (energy share for 'all')")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clash-factor", type=float, default=0.7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("cluster", help="K-means representatives of an ensemble")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("medoid", "centroid"), default="medoid")
    p.add_argument("--all-atoms", action="store_true", help="align and cluster on all atoms")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("eval", help="COV / MAT of generated vs reference conformers")
    p.add_argument("--gen", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--delta", type=float, default=0.5, help="RMSD threshold in angstrom")
    p.add_argument("--all-atoms", action="store_true", help="RMSD over all atoms")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="sample, cluster and evaluate a directory of references")
    p.add_argument("--ref", required=True, help="directory of <id>.sdf reference ensembles")
    p.add_argument("--multiplier", type=int, default=20)
    p.add_argument("--allow-any-multiplier", action="store_true")
    p.add_argument("--cap", type=int, default=2000)
    p.add_argument("--disable-sampler", action="append", choices=SAMPLERS)
    p.add_argument("--redistribute", action="store_true", help="keep the total budget when disabling")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--selection", choices=("medoid", "centroid"), default="medoid")
    p.add_argument("--fixed-count", type=int, help="budget from this count instead of the reference size")
    p.add_argument("--ref-count-range", type=int, nargs=2, metavar=("MIN", "MAX"))
    p.add_argument("--ingest", action="append", metavar="ROLE=DIR", help="external ensembles for a sampler role")
    p.add_argument("--strict-ingest", action="store_true")
    p.add_argument("--echo-reference", action="store_true", help="sanity mode: generated = reference")
    p.add_argument("--report", required=True, help="JSON report path")
    p.add_argument("--manifest", help="run manifest path (default: <report>.manifest.json)")
    p.add_argument("--csv", help="also write a CSV report")
    p.add_argument("--out-dir", help="write selected conformers as <id>.sdf")
    p.add_argument("--keep-going", action="store_true", help="exit 0 even if some molecules failed")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, MolIOError, ValueError, OSError) as exc:
        print(f"confkit: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
