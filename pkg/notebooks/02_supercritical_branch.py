# %% [markdown]
# # The magnetic branch above threshold
#
# Minimise from a small push along the unstable direction and follow the
# energy split as g grows.

# %%
import numpy as np

from su2statics import GridSpec, build_grid
from su2statics.minimizer import ball_energy_floor, continuation_sweep, coulomb_energy
from su2statics.stability import shell_concentration

grid = build_grid(GridSpec())
couplings = [3.0, 5.0, 6.0, 10.0, 20.0, 40.0]
sweep = continuation_sweep(couplings, grid)

# %%
print(" g     E_total     Coulomb    magnetic   interaction  (E-g^2/40pi)/g  iters")
for g, sol in zip(sweep.g_values, sweep.solutions):
    e = sol.energy
    print(
        f"{g:4.0f} {e.total:11.5f} {coulomb_energy(g):11.5f} {e.magnetic:10.5f} {e.interaction:12.5f}"
        f" {(e.total - ball_energy_floor(g)) / g:14.4f} {sol.report.iterations:6d}"
    )

# %% [markdown]
# At a critical point the magnetic energy equals the |a|^2 psi^2 term.
# Most of that energy sits in a thin layer of width about 5/g outside the
# charge.

# %%
for g, sol in zip(sweep.g_values, sweep.solutions):
    if sol.is_coulomb:
        continue
    s = shell_concentration(sol)
    print(f"g={g:g}  shell fraction {s.fraction:.3f}  best outer shell {s.max_outer_fraction:.4f}")

# %%
sol = sweep.solutions[-1]
j = grid.n_theta // 2
for r0 in (1.05, 1.2, 2.0, 8.0, 32.0):
    i = grid.nearest_row(r0)
    print(f"r={grid.r_nodes[i]:7.3f}  alpha(equator)={sol.alpha[i, j]:.5f}")
