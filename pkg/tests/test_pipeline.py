from __future__ import annotations

import csv
import io
import json

import pytest

from confkit import toy
from confkit.molio import Ensemble, Provenance
from confkit.pipeline import (
    PipelineConfig,
    PipelineError,
    compute_budget,
    report_csv,
    report_dict,
    report_json,
    run_benchmark,
    run_molecule,
    with_samplers,
)


@pytest.fixture(scope="module")
def butane_refs(toy_references):
    return next(pair for pair in toy_references if pair[0].id == "butane")


@pytest.fixture(scope="module")
def propanol_refs(toy_references):
    return next(pair for pair in toy_references if pair[0].id == "propanol")


@pytest.mark.parametrize(
    "n_ref, n_e, quarter",
    [(1, 20, 5), (50, 1000, 250), (100, 2000, 500), (150, 2000, 500), (500, 2000, 500), (3, 60, 15), (7, 140, 35)],
)
def test_budget(n_ref, n_e, quarter):
    b = compute_budget(n_ref)
    assert (b.n_e, b.n_u, b.n_g) == (n_e, quarter, quarter)


def test_budget_rounds_up():
    b = compute_budget(1, multiplier=2)
    assert (b.n_e, b.n_u, b.n_g) == (2, 1, 1)
    with pytest.raises(PipelineError):
        compute_budget(0)


def test_config_validation():
    with pytest.raises(PipelineError, match="multiplier"):
        PipelineConfig(multiplier=3)
    assert PipelineConfig(multiplier=3, allow_any_multiplier=True).multiplier == 3
    with pytest.raises(PipelineError, match="at least one"):
        PipelineConfig(samplers=())
    with pytest.raises(PipelineError, match="unknown sampler"):
        PipelineConfig(samplers=("uniform", "md"))
    with pytest.raises(PipelineError):
        PipelineConfig(selection="mean")
    assert PipelineConfig(samplers=("energy", "uniform")).samplers == ("uniform", "energy")


def test_labels():
    assert PipelineConfig().label == "20N_ref"
    assert with_samplers(PipelineConfig(multiplier=2), ["energy"]).label == "2N_ref, w/o Energy sampler"


def test_single_reference_gives_two_outputs(butane_refs):
    mol, refs = butane_refs
    one = Ensemble.of(mol, [refs[0]])
    selected, metrics, run = run_molecule(mol, one, PipelineConfig(seed=1))
    assert run.sampler_counts == {"uniform": 5, "geometric": 5, "energy": 20}
    assert len(selected) == 2 and run.k == 2
    assert metrics.n_gen == 2 and metrics.n_ref == 1


def test_echo_reference(butane_refs):
    mol, refs = butane_refs
    selected, metrics, _ = run_molecule(mol, refs, PipelineConfig(echo_reference=True))
    assert metrics.cov == 1.0 and metrics.mat < 1e-9
    assert all(c.provenance is Provenance.REFERENCE for c in selected)


def test_disabled_sampler_removes_provenance(butane_refs):
    mol, refs = butane_refs
    selected, _, run = run_molecule(mol, refs, PipelineConfig(samplers=("uniform", "geometric")))
    assert run.sampler_counts == {"uniform": 10, "geometric": 10, "energy": 0}
    assert all(c.provenance is not Provenance.ENERGY for c in selected)
    _, _, run = run_molecule(mol, refs, PipelineConfig(samplers=("uniform", "geometric"), redistribute=True))
    assert run.sampler_counts["uniform"] + run.sampler_counts["geometric"] >= 60


def test_ingested_role(butane_refs):
    mol, refs = butane_refs
    external = Ensemble.of(mol, list(refs) * 30)
    config = PipelineConfig(samplers=("energy",), ingest={"energy": {"butane": external}})
    selected, metrics, run = run_molecule(mol, refs, config)
    assert len(selected) == 4 and metrics.mat < 1e-9
    assert all("external" in c.flags and c.provenance is Provenance.ENERGY for c in selected)
    strict = PipelineConfig(samplers=("energy",), strict_ingest=True, ingest={"energy": {"butane": external}})
    with pytest.raises(PipelineError, match="budget"):
        run_molecule(mol, refs, strict)
    small = PipelineConfig(samplers=("energy",), ingest={"energy": {"butane": Ensemble.of(mol, list(refs))}})
    selected, _, run = run_molecule(mol, refs, small)
    assert len(selected) == 2
    assert any("smaller than budget" in w for w in run.warnings)
    assert any("returning all" in w for w in run.warnings)


def test_fixed_count(butane_refs):
    mol, refs = butane_refs
    selected, _, run = run_molecule(mol, refs, PipelineConfig(fixed_count=1, multiplier=2))
    assert run.budget.n_e == 2 and len(selected) == 2


def test_reference_mismatch(butane_refs, propanol_refs):
    with pytest.raises(PipelineError):
        run_molecule(butane_refs[0], propanol_refs[1])
    with pytest.raises(PipelineError):
        run_molecule(butane_refs[0], Ensemble.of(butane_refs[0]))


def test_benchmark_single_molecule_and_report(butane_refs):
    result = run_benchmark([butane_refs], PipelineConfig(seed=2))
    rep = result.report
    assert rep.cov_mean == rep.cov_median and rep.mat_mean == rep.mat_median
    doc = json.loads(report_json(result))
    assert set(doc) >= {"version", "config", "molecules", "summary"}
    assert set(doc["config"]) == {"seed", "multiplier", "delta", "samplers"}
    assert set(doc["molecules"][0]) == {"id", "n_ref", "n_gen", "cov", "mat", "warnings"}
    assert set(doc["summary"]) == {"cov_mean", "cov_median", "mat_mean", "mat_median"}
    assert doc["molecules"][0]["cov"] == 100.0 * rep.molecules[0].cov
    rows = list(csv.reader(io.StringIO(report_csv(result))))
    assert rows[1][:5] == ["id", "n_ref", "n_gen", "cov_percent", "mat_angstrom"]
    assert rows[2][0] == "butane" and rows[-1][0] == "median"
    manifest = result.manifest()
    assert manifest["molecules"][0]["k"] == 4 and "timings" in manifest["molecules"][0]


def test_ablation_label_keeps_schema(butane_refs):
    full = report_dict(run_benchmark([butane_refs], PipelineConfig(seed=0)))
    ablated = report_dict(run_benchmark([butane_refs], PipelineConfig(seed=0, samplers=("uniform", "geometric"))))
    assert ablated["label"] == "20N_ref, w/o Energy sampler"

    def schema(doc):
        return {k: sorted(v) if isinstance(v, dict) else type(v).__name__ for k, v in doc.items()}

    assert schema(full) == schema(ablated)


def test_failures_and_filters(butane_refs, propanol_refs):
    broken = (butane_refs[0], Ensemble("butane", propanol_refs[1].symbols, ()))
    result = run_benchmark([broken, propanol_refs], PipelineConfig(echo_reference=True))
    assert list(result.failures) == ["butane"]
    assert [m.molecule_id for m in result.report.molecules] == ["propanol"]
    result = run_benchmark([butane_refs, propanol_refs], PipelineConfig(echo_reference=True, ref_count_range=(3, 500)))
    assert list(result.skipped) == ["butane"]
    with pytest.raises(PipelineError):
        run_benchmark([], PipelineConfig())
    with pytest.raises(PipelineError):
        run_benchmark([broken], PipelineConfig())


def test_report_is_byte_identical(butane_refs, propanol_refs):
    config = PipelineConfig(seed=4, multiplier=5)
    a = report_json(run_benchmark([propanol_refs, butane_refs], config))
    b = report_json(run_benchmark([butane_refs, propanol_refs], config))
    assert a == b
