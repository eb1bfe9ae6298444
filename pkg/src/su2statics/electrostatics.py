"""Electric potential, screening function and charge/moment diagnostics.

The potential solves the screened Poisson problem

    -Lap psi + r^-2 alpha^2 psi = rho,     d_r(r psi) = 0 at r_max,

on the finite-volume grid.  The discrete system is symmetric positive
definite, so a sparse direct factorisation or Jacobi-preconditioned CG both
apply; the factorisation is kept on the result for reuse in linearised
solves.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid, origin_collapse, scalar_stiffness

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * np.pi


class SolverError(RuntimeError):
    """A linear or nonlinear solve failed; ``residual`` holds the last residual."""

    def __init__(self, message: str, residual: float = np.nan, payload=None):
        super().__init__(message)
        self.residual = residual
        self.payload = payload


@dataclass(frozen=True)
class ChargeModel:
    """Charge density, unit total charge, supported in the closed unit ball.

    ``profile`` is an optional radial density rho0(r) >= 0 on [0, 1]; it is
    renormalised to unit charge on the grid.  ``None`` means the uniform
    density 3/(4 pi).
    """

    profile: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def density(self, grid: Grid) -> np.ndarray:
        """Cell-averaged density on the grid nodes."""
        key = ("density", self.profile)
        if key in grid._cache:
            return grid._cache[key]
        if self.profile is None:
            rho = (3.0 / FOUR_PI) * grid.w_inside / grid.w_vol
        else:
            x, wq = np.polynomial.legendre.leggauss(12)
            lo = grid.r_faces[:-1]
            hi = np.minimum(grid.r_faces[1:], 1.0)
            charge = np.zeros(grid.n_r)
            for i in np.nonzero(hi > lo)[0]:
                rq = 0.5 * (hi[i] - lo[i]) * (x + 1.0) + lo[i]
                vals = np.asarray(self.profile(rq), dtype=float)
                if np.any(vals < 0):
                    raise ValueError("charge profile must be non-negative")
                charge[i] = 0.5 * (hi[i] - lo[i]) * np.sum(wq * vals * rq**2)
            total = FOUR_PI * charge.sum()
            if total <= 0:
                raise ValueError("charge profile has zero integral")
            rad_vol = grid.w_vol[:, 0] / grid.w_sphere[0]
            rho = np.outer(2.0 * np.pi * charge / total / rad_vol, np.ones(grid.n_theta))
        rho.setflags(write=False)
        grid._cache[key] = rho
        return rho


UNIFORM = ChargeModel()


@dataclass(eq=False)
class ElectricPotential:
    psi: np.ndarray
    residual_norm: float
    alpha: np.ndarray = field(repr=False)
    charge: ChargeModel = field(default=UNIFORM, repr=False)
    _lu: object = field(default=None, repr=False)
    _matrix: object = field(default=None, repr=False)

    def solve_linear(self, rhs_full: np.ndarray, grid: Grid) -> np.ndarray:
        """Solve the same screened operator with another right-hand side.

        ``rhs_full`` is an integrated (weight-multiplied) load on the full grid.
        """
        P = origin_collapse(grid)
        b = P.T @ rhs_full.ravel()
        if self._lu is not None:
            x = self._lu.solve(b)
        else:
            x = spla.spsolve(self._matrix.tocsc(), b)
        return (P @ x).reshape(grid.shape)


def _potential_matrix(grid: Grid, V: np.ndarray) -> sp.csr_matrix:
    P = origin_collapse(grid)
    S = scalar_stiffness(grid, robin=True)
    A = S + sp.diags((grid.w_vol * V).ravel())
    return (P.T @ A @ P).tocsr()


def screening_potential(alpha: np.ndarray, grid: Grid) -> np.ndarray:
    """r^-2 alpha^2, i.e. |a|^2 for a = alpha sin(theta) dphi."""
    V = np.zeros(grid.shape)
    out = grid.r_nodes > 0
    V[out] = alpha[out] ** 2 / grid.r_nodes[out, None] ** 2
    return V


def _check_outside_only(alpha: np.ndarray, grid: Grid) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != grid.shape:
        raise ValueError(f"alpha has shape {alpha.shape}, grid is {grid.shape}")
    if not grid.is_outside_only(alpha):
        raise ValueError("alpha must vanish on the closed unit ball")
    return alpha


def _solve_spd(A: sp.csr_matrix, b: np.ndarray, tol: float, method: str, maxiter: int):
    nb = np.linalg.norm(b)
    if method == "direct":
        lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A")
        x = lu.solve(b)
        res = np.linalg.norm(A @ x - b) / nb
        for _ in range(3):
            if res <= tol:
                break
            x = x + lu.solve(b - A @ x)
            res = np.linalg.norm(A @ x - b) / nb
        if not res <= tol:
            raise SolverError(f"direct solve residual {res:.3e} above tol {tol:.1e}", res)
        return x, res, lu
    if method == "cg":
        d = A.diagonal()
        M = sp.diags(1.0 / d)
        x, info = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=maxiter, M=M)
        res = np.linalg.norm(A @ x - b) / nb
        if info != 0 or not res <= 1.01 * tol:
            raise SolverError(f"CG did not converge (info={info}, residual {res:.3e})", res)
        return x, res, None
    raise ValueError(f"unknown linear solver {method!r}")


def solve_psi(
    alpha: np.ndarray,
    grid: Grid,
    charge: ChargeModel = UNIFORM,
    tol: float = 1e-10,
    method: str = "direct",
    maxiter: int = 20000,
) -> ElectricPotential:
    """Electric potential for the gauge amplitude ``alpha``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    alpha = _check_outside_only(alpha, grid)
    V = screening_potential(alpha, grid)
    A = _potential_matrix(grid, V)
    P = origin_collapse(grid)
    b = P.T @ (grid.w_vol * charge.density(grid)).ravel()
    x, res, lu = _solve_spd(A, b, tol, method, maxiter)
    psi = (P @ x).reshape(grid.shape)
    return ElectricPotential(psi=psi, residual_norm=float(res), alpha=alpha, charge=charge, _lu=lu, _matrix=A)


def coulomb_psi_values(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    rs = np.where(r > 0, r, 1.0)
    return np.where(r <= 1.0, (3.0 - r**2) / (8.0 * np.pi), 1.0 / (FOUR_PI * rs))


def coulomb_psi(grid: Grid) -> ElectricPotential:
    """Closed-form potential of the uniformly charged unit ball."""
    psi = np.broadcast_to(coulomb_psi_values(grid.r_nodes)[:, None], grid.shape).copy()
    return ElectricPotential(psi=psi, residual_norm=0.0, alpha=grid.zeros())


def dirichlet_ball_psi(grid: Grid) -> np.ndarray:
    """Ball potential vanishing on r = 1, extended by zero outside."""
    r = grid.r
    return np.where(r <= 1.0, (1.0 - r**2) / (8.0 * np.pi), 0.0)


# ---------------------------------------------------------------------------
# Screening function


def smooth_cutoff(t: np.ndarray) -> np.ndarray:
    """C-infinity profile: 1 on [0, 1], monotone, 0 on [2, inf)."""
    t = np.asarray(t, dtype=float)

    def h(x):
        return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)

    a, b = h(2.0 - t), h(t - 1.0)
    return a / (a + b)


@dataclass(eq=False)
class ScreeningFunction:
    sigma: np.ndarray
    sigma_origin: float
    cutoff_radius: float
    cutoffs: tuple
    origin_by_cutoff: tuple
    monotone: bool
    max_violation: float


def solve_screening(
    alpha: np.ndarray,
    grid: Grid,
    cutoffs: Optional[Sequence[float]] = None,
    tol: float = 1e-10,
) -> ScreeningFunction:
    """Truncated screening problems -Lap s + beta_R |a|^2 s = 0, s -> 1.

    Writing s = 1 - t, the deficit t decays like 1/r beyond the cutoff, so it
    takes the same Robin condition as the potential.  Solutions for
    increasing R must decrease pointwise; the largest-R one is returned.
    """
    alpha = _check_outside_only(alpha, grid)
    if cutoffs is None:
        cutoffs = (grid.r_max / 8, grid.r_max / 4, grid.r_max / 2)
    cutoffs = tuple(sorted(float(R) for R in cutoffs))
    V = screening_potential(alpha, grid)
    P = origin_collapse(grid)
    sigmas = []
    for R in cutoffs:
        Vb = V * smooth_cutoff(grid.r / R)
        A = _potential_matrix(grid, Vb)
        b = P.T @ (grid.w_vol * Vb).ravel()
        if not np.any(b):
            sigmas.append(np.ones(grid.shape))
            continue
        x, _, _ = _solve_spd(A, b, tol, "direct", 0)
        sigmas.append(1.0 - (P @ x).reshape(grid.shape))
    violation = 0.0
    for lo, hi in zip(sigmas[:-1], sigmas[1:]):
        violation = max(violation, float(np.max(hi - lo)))
    monotone = violation <= 1e-12
    if not monotone:
        logger.warning("screening sequence not monotone in R (max increase %.3e)", violation)
    sigma = sigmas[-1]
    return ScreeningFunction(
        sigma=sigma,
        sigma_origin=float(sigma[0, 0]),
        cutoff_radius=cutoffs[-1],
        cutoffs=cutoffs,
        origin_by_cutoff=tuple(float(s[0, 0]) for s in sigmas),
        monotone=monotone,
        max_violation=violation,
    )


# ---------------------------------------------------------------------------
# Moments and charge bookkeeping


@dataclass(eq=False)
class MomentProfile:
    r: np.ndarray
    f_of_r: np.ndarray
    q_of_r: np.ndarray
    sphere_avg_psi: np.ndarray
    r_flux: np.ndarray
    flux: np.ndarray
    screened_within: np.ndarray
    total_screened_charge: float
    gauss_defect: float


def alpha_moment(alpha: np.ndarray, grid: Grid) -> np.ndarray:
    """f(r) = int alpha sin^2(theta) dtheta at every radial node."""
    return alpha @ (np.sin(grid.theta_nodes) * grid.w_sphere)


def charge_diagnostics(alpha: np.ndarray, psi: ElectricPotential, grid: Grid) -> MomentProfile:
    """Angular moments and the flux/screening budget of the potential.

    ``flux`` is -r^2 d_r int psi dOmega at the radial faces; beyond r = 1 it
    plus the screened charge inside the face must equal the unit charge.
    """
    alpha = _check_outside_only(alpha, grid)
    p = psi.psi
    V = screening_potential(alpha, grid)
    w_s = grid.w_sphere
    f = alpha_moment(alpha, grid)
    q = (p**2) @ w_s
    avg = grid.sphere_integral(p)
    r = grid.r_nodes
    rf = grid.r_faces[1:-1]
    flux = -rf**2 * np.diff(avg) / np.diff(r)
    screened_cells = np.sum(grid.w_vol * V * p, axis=1)
    screened_within = np.cumsum(screened_cells)[:-1]
    charge = np.cumsum(np.sum(grid.w_vol * psi.charge.density(grid), axis=1))[:-1]
    outside = rf > 1.0
    defect = np.abs(flux + screened_within - charge)[outside]
    return MomentProfile(
        r=r,
        f_of_r=f,
        q_of_r=q,
        sphere_avg_psi=avg,
        r_flux=rf,
        flux=flux,
        screened_within=screened_within,
        total_screened_charge=float(screened_cells.sum()),
        gauss_defect=float(defect.max()) if defect.size else 0.0,
    )


def electric_energy_split(psi: np.ndarray, alpha: np.ndarray, grid: Grid) -> tuple[float, float, float]:
    """Return (int_{r<=1} |grad psi|^2, int_{r>=1} |grad psi|^2, int |a|^2 psi^2).

    The gradient quadrature is the one defining the discrete operator, so the
    three parts sum to psi^T A psi exactly.  The exterior 1/r continuation
    beyond r_max counts as outside.
    """
    psi = np.asarray(psi, dtype=float)
    n_t = grid.n_theta
    r, rf = grid.r_nodes, grid.r_faces
    dth = np.pi / n_t
    radial = 2.0 * np.pi * rf[1:-1] ** 2 / np.diff(r) * (np.diff(psi, axis=0) ** 2 @ grid.w_sphere)
    length = np.diff(rf)
    polar_rows = 2.0 * np.pi * length * (np.diff(psi, axis=1) ** 2 @ np.sin(grid.theta_faces[1:-1])) / dth
    polar_rows[0] = 0.0
    frac_in = np.clip((np.minimum(rf[1:], 1.0) - rf[:-1]) / length, 0.0, 1.0)
    inside = radial[rf[1:-1] < 1.0].sum() + np.sum(polar_rows * frac_in)
    outside = radial[rf[1:-1] >= 1.0].sum() + np.sum(polar_rows * (1.0 - frac_in))
    outside += 2.0 * np.pi * r[-1] * float(psi[-1] ** 2 @ grid.w_sphere)
    interaction = float(np.sum(grid.w_vol * screening_potential(alpha, grid) * psi**2))
    return float(inside), float(outside), interaction
