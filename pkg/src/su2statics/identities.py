"""Integral identities and pointwise bounds that any (alpha, psi) pair must satisfy.

Each check returns an :class:`IdentityCheck`; :func:`identity_suite` runs all
of them, e.g. on a stored solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .electrostatics import UNIFORM, ChargeModel, coulomb_psi, dirichlet_ball_psi, electric_energy_split, screening_potential
from .grid import Grid, magnetic_form


@dataclass
class IdentityCheck:
    name: str
    passed: bool
    residual: float
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<22s} residual={self.residual:.3e}  {self.detail}"


def _rel(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0.0 else abs(a - b) / scale


def check_energy_identity(alpha, psi, grid: Grid, charge: ChargeModel = UNIFORM, tol: float = 1e-6) -> IdentityCheck:
    """int (|grad psi|^2 + |a|^2 psi^2) = int psi rho."""
    inside, outside, inter = electric_energy_split(psi, alpha, grid)
    lhs = inside + outside + inter
    rhs = grid.integrate(charge.density(grid) * psi)
    res = _rel(lhs, rhs)
    return IdentityCheck("energy", res <= tol, res, f"lhs={lhs:.12g} rhs={rhs:.12g}")


def check_virial(alpha, psi, g: float, grid: Grid, tol: float = 1e-3) -> IdentityCheck:
    """g^-2 int |grad a|^2 = g^2 int |a|^2 psi^2 at a critical point."""
    mag = magnetic_form(alpha, grid) / g**2
    inter = g**2 * float(np.sum(grid.w_vol * screening_potential(alpha, grid) * psi**2))
    res = _rel(mag, inter)
    return IdentityCheck("magnetic=interaction", res <= tol, res, f"{mag:.10g} vs {inter:.10g}")


def check_sandwich(psi, grid: Grid, slack: float = 1e-10) -> IdentityCheck:
    """Dirichlet-ball potential < psi <= Coulomb potential, nodewise."""
    upper = coulomb_psi(grid).psi
    lower = dirichlet_ball_psi(grid)
    scale = float(np.max(np.abs(upper)))
    over = float(np.max(psi - upper))
    under = float(np.max(lower - psi))
    res = max(over, under, 0.0) / scale
    ok = over <= slack * scale and under < slack * scale and bool(np.all(psi[grid.r_nodes >= 1.0] > 0))
    return IdentityCheck("sandwich", ok, res, f"max above upper={over:.2e}, max below lower={under:.2e}")


def check_energy_bracket(alpha, psi, grid: Grid) -> IdentityCheck:
    """(40 pi)^-1 < 1/2 int (|grad psi|^2 + |a|^2 psi^2) <= 3 (20 pi)^-1."""
    e = 0.5 * sum(electric_energy_split(psi, alpha, grid))
    lo, hi = 1.0 / (40.0 * np.pi), 3.0 / (20.0 * np.pi)
    ok = lo < e <= hi * (1.0 + 1e-9)
    res = max(lo - e, e - hi, 0.0)
    return IdentityCheck("electric bracket", ok, res, f"{lo:.6g} < {e:.10g} <= {hi:.6g}")


def check_monotone_average(psi, grid: Grid) -> IdentityCheck:
    """Sphere-averaged psi strictly decreasing on r >= 1."""
    avg = grid.sphere_integral(psi)[grid.r_nodes >= 1.0]
    steps = np.diff(avg)
    worst = float(steps.max()) if steps.size else -1.0
    return IdentityCheck("monotone average", worst < 0, max(worst, 0.0), f"largest step {worst:.3e}")


def check_screened_charge(alpha, psi, grid: Grid) -> IdentityCheck:
    """0 <= int |a|^2 psi <= 1."""
    q = float(np.sum(grid.w_vol * screening_potential(alpha, grid) * psi))
    ok = -1e-14 <= q <= 1.0 + 1e-12
    return IdentityCheck("screened charge", ok, max(q - 1.0, -q, 0.0), f"int |a|^2 psi = {q:.10g}")


def identity_suite(alpha, psi, g: float, grid: Grid, charge: ChargeModel = UNIFORM) -> list[IdentityCheck]:
    alpha = np.asarray(alpha, dtype=float)
    psi = np.asarray(psi, dtype=float)
    return [
        check_energy_identity(alpha, psi, grid, charge),
        check_virial(alpha, psi, g, grid),
        check_sandwich(psi, grid),
        check_energy_bracket(alpha, psi, grid),
        check_monotone_average(psi, grid),
        check_screened_charge(alpha, psi, grid),
    ]
