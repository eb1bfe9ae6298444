"""Minimiser of the reduced SU(2) electro/magneto-static energy and its diagnostics."""

from .grid import Grid, GridSpec, build_grid
from .electrostatics import SolverError, coulomb_psi, solve_psi, solve_screening
from .minimizer import Solution, continuation_sweep, coulomb_energy, minimize, reduced_energy, reduced_gradient
from .stability import min_eigenvalue, threshold_scan
from .asymptotics import analyze, fit_decay_exponent, fit_e0

__version__ = "0.1.0"
