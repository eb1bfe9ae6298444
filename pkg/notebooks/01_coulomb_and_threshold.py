# %% [markdown]
# # The Coulomb solution and where it stops being a minimum
#
# With alpha = 0 the potential is that of a uniformly charged unit ball.
# We check the solver against the closed form, then watch the smallest
# Hessian eigenvalue change sign as the coupling grows.

# %%
import numpy as np

from su2statics import GridSpec, build_grid
from su2statics.electrostatics import coulomb_psi_values, solve_psi
from su2statics.minimizer import coulomb_energy, reduced_energy
from su2statics.stability import SQRT_6PI, min_eigenvalue, threshold_scan, truncation_threshold

grid = build_grid(GridSpec())
print(grid.spec, grid.shape)

# %%
pot = solve_psi(grid.zeros(), grid)
print("max |psi - closed form| =", np.max(np.abs(pot.psi - coulomb_psi_values(grid.r))))
for g in (1.0, 2.0, 4.0):
    e = reduced_energy(grid.zeros(), g, grid).total
    print(f"g={g:g}  E={e:.8f}  3g^2/(20 pi)={coulomb_energy(g):.8f}")

# %% [markdown]
# The Hessian at alpha = 0 is g^-2 K - g^2 diag(psi^2 / r^2).  Its
# smallest eigenvalue, normalised by int r^-4 beta^2, is positive for small g.

# %%
for g in np.linspace(3.5, 5.5, 5):
    print(f"g={g:.2f}  lambda_min={min_eigenvalue(g, grid).value:+.5f}")

# %%
rep = threshold_scan(3.5, 5.5, grid=grid)
print(rep.message, rep.g0_estimate)
print("finite-domain prediction", truncation_threshold(grid.r_max))
print("infinite-domain value   ", SQRT_6PI)

# %% [markdown]
# The threshold mode is scale invariant in r, so the gap to sqrt(6 pi) is
# set by log(r_max), not by the mesh width.  Squaring r_max closes most of it.

# %%
big = build_grid(GridSpec(r_max=128.0**2, n_r_out=512))
print(threshold_scan(4.0, 5.0, steps=5, grid=big).g0_estimate, truncation_threshold(big.r_max))
