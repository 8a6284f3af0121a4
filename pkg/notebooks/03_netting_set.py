# %% [markdown]
# # A ten-option netting set
#
# No closed form once the positive part acts on the sum of positions, so a
# long Sobol run is the benchmark. Set BENCH_POINTS = 10**6 for the full
# oracle (about 3 s per case).

# %%
import numpy as np

from vqexposure.exposure import (
    ExposureTask, ee_mc, ee_quantized_djs, ee_quantized_tree, ee_sobol, error_metrics,
)
from vqexposure.market import MarketParams, netting10, standard_buckets
from vqexposure.quantizer import build_grid

BENCH_POINTS = 2**17
buckets = standard_buckets()
portfolio = tuple(netting10())
grid = build_grid(1000)

# %%
for spot in (90.0, 100.0, 110.0):
    for vol in (0.15, 0.25, 0.30):
        task = ExposureTask(portfolio, MarketParams(spot, 0.03, vol), buckets)
        bench = ee_sobol(task, BENCH_POINTS)
        q = ee_quantized_djs(task, grid)
        mc = ee_mc(task, 1000)
        print(f"S0={spot:g} vol={vol:.0%}  EPE bench {bench.epe:.4f}  quant {q.epe:.4f} "
              f"({error_metrics(q, bench).epe_eps:+.4f}%)  MC {mc.epe:.4f} (RSD {error_metrics(mc, bench).epe_rsd:.2f}%)")

# %% [markdown]
# The quantization tree carries cell weights from bucket to bucket through
# transition matrices. Unpruned it reproduces the direct marginals; pruning
# long jumps narrows the propagated law and biases the EPE down.

# %%
task = ExposureTask(portfolio, MarketParams(100.0, 0.03, 0.25), buckets)
g100 = build_grid(100)
djs = ee_quantized_djs(task, g100)
for prune in (None, 5.0, 4.0, 3.0):
    tree = ee_quantized_tree(task, g100, prune_z=prune)
    print(f"prune_z={prune}: EPE {tree.epe:.5f}  vs direct {djs.epe:.5f}  ({100 * (tree.epe / djs.epe - 1):+.4f}%)")

# %% [markdown]
# 95% and 99% potential future exposure from the same grid.

# %%
prof = ee_quantized_djs(task, grid, pfe_alphas=(0.95, 0.99))
for label, ee, p95, p99 in zip(buckets.labels, prof.ee, prof.pfe[0.95], prof.pfe[0.99]):
    print(f"{label:3}  EE {ee:7.4f}  PFE95 {p95:7.4f}  PFE99 {p99:7.4f}")
print("EEPE", prof.eepe, "EPE", prof.epe)
