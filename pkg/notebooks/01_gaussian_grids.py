# %% [markdown]
# # Optimal grids for the standard normal
#
# Build stationary quadratic quantizers of N(0, 1), look at their cells and
# check the N^-2 decay of the distortion.

# %%
import math

import numpy as np
from scipy import integrate

from vqexposure.quantizer import build_grid, stationarity_residual

# %% [markdown]
# A ten-point grid: points, cell weights and how far each point sits from the
# mean of its own cell.

# %%
g = build_grid(10)
for x, p in zip(g.points, g.probs):
    print(f"{x:+.6f}  {p:.6f}")
print("distortion", g.distortion, "residual", stationarity_residual(g.points))

# %% [markdown]
# Distortion against N. The scaled value N^2 D_N should settle near
# (1/12) (integral of phi^(1/3))^3.

# %%
sizes = np.array([10, 25, 50, 100, 200, 400, 1000])
dist = np.array([build_grid(int(n)).distortion for n in sizes])
phi_third = integrate.quad(lambda x: (math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)) ** (1 / 3), -np.inf, np.inf)[0]
limit = phi_third**3 / 12
for n, d in zip(sizes, dist):
    print(f"N={n:5d}  D={d:.3e}  N^2 D={n * n * d:.5f}")
print("limit", limit)
print("log-log slope", np.polyfit(np.log(sizes), np.log(dist), 1)[0])
