"""Run the full benchmark on the bundled toy set and a small ablation.

Run: python3 demos/05_benchmark.py   (about a minute)
"""

from __future__ import annotations

from confkit import toy
from confkit.pipeline import PipelineConfig, report_csv, run_benchmark, with_samplers

items = toy.load_toy_references()
base = PipelineConfig(seed=0)
result = run_benchmark(items, base)
print(report_csv(result))

sanity = run_benchmark(items, PipelineConfig(echo_reference=True)).report
print(f"echo-reference sanity: COV {100 * sanity.cov_mean:.1f}%  MAT {sanity.mat_mean:.1e}")

for config in (PipelineConfig(seed=0, multiplier=2), with_samplers(base, ["energy"])):
    rep = run_benchmark(items, config).report
    print(f"{config.label:>28}: COV mean {100 * rep.cov_mean:5.1f}%  MAT mean {rep.mat_mean:.4f}")
