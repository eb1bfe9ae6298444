"""Minimisation of the reduced energy over the gauge amplitude alpha.

The electric potential is eliminated exactly: every energy evaluation solves
the screened Poisson problem for the current alpha, so the energy is a
function of alpha alone and its gradient needs no adjoint (the potential is
stationary for the electric part).

Descent runs in the metric of the magnetic operator itself, i.e. the search
direction is -(g^-2 K)^-1 dE with K the gauge stiffness, combined with a
Barzilai-Borwein step and Armijo backtracking.  After every accepted step
alpha is replaced by |alpha|, which leaves the energy unchanged.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .electrostatics import (
    UNIFORM,
    ChargeModel,
    ElectricPotential,
    SolverError,
    electric_energy_split,
    smooth_cutoff,
    solve_psi,
)
from .grid import Grid, gauge_stiffness

logger = logging.getLogger(__name__)


def coulomb_energy(g: float) -> float:
    """Energy of the Coulomb critical point, 1/2 g^2 int rho psi_Coul = 3 g^2 / (20 pi)."""
    return 3.0 * g**2 / (20.0 * np.pi)


def ball_energy_floor(g: float) -> float:
    """g^2 / (40 pi): the electric energy inside the ball can never drop below it."""
    return g**2 / (40.0 * np.pi)


@dataclass(frozen=True)
class EnergyBreakdown:
    magnetic: float
    electric_inside: float
    electric_outside: float
    interaction: float
    electric_from_charge: float = np.nan

    @property
    def total(self) -> float:
        return self.magnetic + self.electric_inside + self.electric_outside + self.interaction

    @property
    def electric(self) -> float:
        return self.electric_inside + self.electric_outside + self.interaction

    def as_dict(self) -> dict:
        return {
            "magnetic": self.magnetic,
            "electric_inside": self.electric_inside,
            "electric_outside": self.electric_outside,
            "interaction": self.interaction,
            "electric_from_charge": self.electric_from_charge,
            "total": self.total,
        }


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    energy_history: tuple
    final_gradient_norm: float
    wall_time: float
    converged: bool = True
    message: str = ""
    final_step_norm: float = np.nan


@dataclass(frozen=True, eq=False)
class Solution:
    alpha: np.ndarray
    psi: ElectricPotential
    energy: EnergyBreakdown
    g: float
    report: SolveReport
    grid: Grid = field(repr=False, default=None)

    @property
    def is_coulomb(self) -> bool:
        return float(np.max(np.abs(self.alpha))) < 1e-6


@dataclass(frozen=True)
class MinimizeOptions:
    max_iter: int = 50_000
    energy_rtol: float = 1e-10
    gtol: float = 1e-8
    xtol: float = 1e-8
    armijo: float = 1e-4
    backtrack: float = 0.5
    step_min: float = 1e-6
    step_max: float = 1e2
    max_backtracks: int = 60
    stall_window: int = 5
    preconditioner: str = "operator"
    psi_tol: float = 1e-10
    psi_method: str = "direct"


# ---------------------------------------------------------------------------


def _check_g(g: float) -> float:
    g = float(g)
    if not g > 0:
        raise ValueError(f"coupling g must be positive, got {g}")
    return g


def energy_breakdown(alpha: np.ndarray, psi: ElectricPotential, g: float, grid: Grid) -> EnergyBreakdown:
    """Energy parts for a potential already solved for ``alpha``."""
    K = gauge_stiffness(grid)
    a = np.asarray(alpha, dtype=float)[grid.alpha_rows].ravel()
    magnetic = 0.5 / g**2 * float(a @ (K @ a))
    inside, outside, interaction = electric_energy_split(psi.psi, alpha, grid)
    rho = psi.charge.density(grid)
    half_g2 = 0.5 * g**2
    return EnergyBreakdown(
        magnetic=magnetic,
        electric_inside=half_g2 * inside,
        electric_outside=half_g2 * outside,
        interaction=half_g2 * interaction,
        electric_from_charge=half_g2 * grid.integrate(rho * psi.psi),
    )


def reduced_energy(
    alpha: np.ndarray,
    g: float,
    grid: Grid,
    charge: ChargeModel = UNIFORM,
    tol: float = 1e-10,
) -> EnergyBreakdown:
    """Reduced energy with the potential eliminated by an exact inner solve."""
    g = _check_g(g)
    psi = solve_psi(alpha, grid, charge=charge, tol=tol)
    return energy_breakdown(alpha, psi, g, grid)


def reduced_gradient(alpha: np.ndarray, psi: ElectricPotential, g: float, grid: Grid) -> np.ndarray:
    """w_vol-Riesz representative of dE/dalpha on the full grid.

    Equals g^-2 r^-2 (L alpha - g^4 psi^2 alpha) on the free rows, where L is
    :func:`grid.gauge_operator`; zero on the ball and on the outer boundary row.
    """
    g = _check_g(g)
    sl = grid.alpha_rows
    out = grid.zeros()
    out[sl] = (_partial_derivative(np.asarray(alpha)[sl].ravel(), psi.psi, g, grid) / grid.w_vol[sl].ravel()).reshape(
        -1, grid.n_theta
    )
    return out


def _partial_derivative(x: np.ndarray, psi: np.ndarray, g: float, grid: Grid) -> np.ndarray:
    sl = grid.alpha_rows
    K = gauge_stiffness(grid)
    w = grid.w_vol[sl].ravel()
    r2 = np.repeat(grid.r_nodes[sl] ** 2, grid.n_theta)
    return (K @ x) / g**2 - g**2 * w * psi[sl].ravel() ** 2 * x / r2


def gradient_norm(alpha: np.ndarray, psi: ElectricPotential, g: float, grid: Grid) -> float:
    G = reduced_gradient(alpha, psi, g, grid)
    return float(np.sqrt(np.sum(grid.w_vol * G**2)))


# ---------------------------------------------------------------------------
# Seeds


def hessian_direction(grid: Grid, eps: float = 0.05) -> np.ndarray:
    """(r^{(1-eps)/2} - 1) sin(theta), cut off smoothly between r_max/4 and r_max/2."""
    r, th = grid.r, grid.theta
    beta = (np.maximum(r, 1.0) ** (0.5 * (1.0 - eps)) - 1.0) * np.sin(th)
    beta = beta * smooth_cutoff(r / (grid.r_max / 4))
    return grid.restrict_outside(beta)


def hessian_seed(grid: Grid, amplitude: float = 1e-2, eps: float = 0.05) -> np.ndarray:
    beta = hessian_direction(grid, eps)
    return amplitude * beta / np.max(np.abs(beta))


def random_seed(grid: Grid, rng: np.random.Generator, amplitude: float = 1.0) -> np.ndarray:
    """Smooth random non-negative amplitude: a few sin(k theta) r-bumps."""
    r, th = grid.r, grid.theta
    s = np.log(np.maximum(r, 1.0))
    out = np.zeros(grid.shape)
    for _ in range(rng.integers(2, 6)):
        k = rng.integers(1, 4)
        centre = rng.uniform(0.0, 2.5)
        width = rng.uniform(0.2, 1.5)
        out += rng.uniform(0.2, 1.0) * np.exp(-0.5 * ((s - centre) / width) ** 2) * np.abs(np.sin(k * th))
    out *= 1.0 - np.exp(-(np.maximum(r, 1.0) - 1.0) * rng.uniform(2.0, 20.0))
    out *= smooth_cutoff(r / (grid.r_max / 4))
    out = grid.restrict_outside(out)
    return amplitude * out / np.max(out)


def _polar_plateau(theta: np.ndarray, lam: float) -> np.ndarray:
    """chi: linear lam*theta near the axis, 1 on [1/lam, pi/2], symmetric about pi/2."""
    t = np.minimum(theta, np.pi - theta)
    L = 0.5 / lam
    u = np.clip((t - L) / L, 0.0, 1.0)
    blend = -0.5 * u**3 + 0.5 * u**2 + 0.5 * u + 0.5
    return np.where(t <= L, lam * t, np.where(t >= 2 * L, 1.0, blend))


def trial_alpha(g: float, grid: Grid, lam: Optional[float] = None, eps: Optional[float] = None, scale: float = 1.0) -> np.ndarray:
    """Upper-bound trial amplitude lam * ramp(r) * chi(theta).

    ramp rises linearly from 0 at r = 1 to 1 at r = 1 + eps.  Defaults are
    lam = g and eps = scale * lam / g^2 (capped below 1/2).
    """
    g = _check_g(g)
    lam = g if lam is None else float(lam)
    if lam == 0.0:
        return grid.zeros()
    if lam < 1.0:
        raise ValueError("lambda must be >= 1 (or exactly 0)")
    if eps is None:
        eps = min(scale * lam / g**2, 0.49)
    if not 0.0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    ramp = np.clip((grid.r - 1.0) / eps, 0.0, 1.0)
    alpha = lam * ramp * _polar_plateau(grid.theta, lam)
    return grid.restrict_outside(alpha)


# ---------------------------------------------------------------------------
# Descent


class _Problem:
    def __init__(self, g: float, grid: Grid, charge: ChargeModel, opts: MinimizeOptions):
        self.g, self.grid, self.charge, self.opts = g, grid, charge, opts
        self.sl = grid.alpha_rows
        self.K = gauge_stiffness(grid)
        self.w = grid.w_vol[self.sl].ravel()
        self.r2 = np.repeat(grid.r_nodes[self.sl] ** 2, grid.n_theta)
        self.evaluations = 0
        if opts.preconditioner == "operator":
            lu = spla.splu((self.K / g**2).tocsc())
            self.precondition = lu.solve
        elif opts.preconditioner == "jacobi":
            d = self.K.diagonal() / g**2
            self.precondition = lambda v: v / d
        else:
            raise ValueError(f"unknown preconditioner {opts.preconditioner!r}")

    def full(self, x: np.ndarray) -> np.ndarray:
        a = self.grid.zeros()
        a[self.sl] = x.reshape(-1, self.grid.n_theta)
        return a

    def evaluate(self, x: np.ndarray):
        self.evaluations += 1
        alpha = self.full(x)
        psi = solve_psi(alpha, self.grid, charge=self.charge, tol=self.opts.psi_tol, method=self.opts.psi_method)
        g = self.g
        E = 0.5 / g**2 * float(x @ (self.K @ x)) + 0.5 * g**2 * self.grid.integrate(
            self.charge.density(self.grid) * psi.psi
        )
        dE = _partial_derivative(x, psi.psi, g, self.grid)
        return E, dE, psi

    def energy_change(self, x, x_new, psi, psi_new) -> float:
        """E(x_new) - E(x) without cancellation.

        The electric part uses b.T (A_new^-1 - A^-1) b = -psi_new.T (A_new - A) psi.
        """
        g, sl = self.g, self.sl
        s, t = x_new - x, x_new + x
        magnetic = 0.5 / g**2 * float(s @ (self.K @ t))
        electric = -0.5 * g**2 * float(np.sum(self.w * s * t / self.r2 * psi_new.psi[sl].ravel() * psi.psi[sl].ravel()))
        return magnetic + electric

    def gnorm(self, dE: np.ndarray) -> float:
        return float(np.sqrt(np.sum(dE**2 / self.w)))


def minimize(
    g: float,
    grid: Grid,
    init: Union[None, str, np.ndarray] = "hessian",
    opts: Optional[MinimizeOptions] = None,
    charge: ChargeModel = UNIFORM,
    rng_seed: int = 0,
) -> Solution:
    """Minimise the reduced energy at coupling ``g``.

    ``init`` is an outside-only array or one of ``"hessian"`` (small unstable
    Coulomb direction), ``"zero"``, ``"trial"`` or ``"random"``.  Raises
    :class:`SolverError` carrying the best iterate as ``payload`` when the
    iteration cap is hit or the line search stalls before convergence.
    """
    g = _check_g(g)
    opts = opts or MinimizeOptions()
    t0 = time.perf_counter()
    alpha0 = _initial_alpha(init, g, grid, rng_seed)
    prob = _Problem(g, grid, charge, opts)
    x = np.abs(alpha0[prob.sl].ravel())
    E, dE, psi = prob.evaluate(x)
    history = [E]
    stalled = 0
    x_prev = dE_prev = None
    tau = 1.0
    converged = False
    message = ""
    gn = prob.gnorm(dE)
    step_norm = np.inf

    it = 0
    while it < opts.max_iter:
        d = -prob.precondition(dE)
        step_norm = float(np.max(np.abs(d))) if d.size else 0.0
        if gn < opts.gtol and step_norm < opts.xtol:
            converged, message = True, "gradient and step below tolerance"
            break
        if x_prev is not None:
            s, y = x - x_prev, dE - dE_prev
            sy = float(s @ y)
            if sy > 0:
                tau = float(np.clip(float(s @ (prob.K @ s)) / g**2 / sy, opts.step_min, opts.step_max))
            else:
                tau = 1.0
        slope = float(dE @ d)
        if slope >= 0:
            d, slope = -dE / prob.w, -float(dE @ (dE / prob.w))
        accepted = False
        for n_bt in range(opts.max_backtracks):
            x_new = np.abs(x + tau * d)
            _, dE_new, psi_new = prob.evaluate(x_new)
            delta = prob.energy_change(x, x_new, psi, psi_new)
            if delta <= opts.armijo * tau * slope:
                accepted = True
                break
            tau *= opts.backtrack
        if not accepted:
            message = "line search stalled"
            break
        it += 1
        x_prev, dE_prev = x, dE
        x, dE, psi = x_new, dE_new, psi_new
        E = E + delta
        history.append(E)
        gn = prob.gnorm(dE)
        rel = abs(delta) / max(abs(E), 1e-300)
        logger.debug("iter %d  E=%.15g  |G|=%.3e  tau=%.3e  |d|=%.2e  bt=%d", it, E, gn, tau, step_norm, n_bt)
        if rel < opts.energy_rtol and gn < opts.gtol and step_norm < opts.xtol:
            converged, message = True, "energy, gradient and step below tolerance"
            break
        # the preconditioned step has a round-off floor that scales with |alpha|
        if rel < opts.energy_rtol and gn < opts.gtol and step_norm < 10 * opts.xtol * max(1.0, float(np.abs(x).max())):
            stalled += 1
            if stalled >= opts.stall_window:
                converged, message = True, "energy and gradient below tolerance; step at round-off floor"
                break
        else:
            stalled = 0
    else:
        message = f"iteration cap {opts.max_iter} reached"

    if not converged and message == "line search stalled" and gn < opts.gtol:
        converged = True
        message = "gradient below tolerance; energy at round-off floor"

    alpha = prob.full(x)
    report = SolveReport(
        iterations=it,
        energy_history=tuple(history),
        final_gradient_norm=gn,
        wall_time=time.perf_counter() - t0,
        converged=converged,
        message=message,
        final_step_norm=step_norm,
    )
    sol = Solution(alpha=alpha, psi=psi, energy=energy_breakdown(alpha, psi, g, grid), g=g, report=report, grid=grid)
    logger.info("g=%g: %s after %d iterations, E=%.12g", g, message, it, sol.energy.total)
    if not converged:
        raise SolverError(f"minimize(g={g}) failed: {message}", gn, payload=sol)
    return sol


def _initial_alpha(init, g: float, grid: Grid, rng_seed: int) -> np.ndarray:
    if init is None or (isinstance(init, str) and init == "hessian"):
        return hessian_seed(grid)
    if isinstance(init, str):
        if init == "zero":
            return grid.zeros()
        if init == "trial":
            return trial_alpha(g, grid)
        if init == "random":
            return random_seed(grid, np.random.default_rng(rng_seed), amplitude=np.sqrt(g))
        raise ValueError(f"unknown seed policy {init!r}")
    alpha = np.asarray(init, dtype=float)
    if alpha.shape != grid.shape:
        raise ValueError("initial alpha has the wrong shape")
    if not grid.is_outside_only(alpha):
        raise ValueError("initial alpha must vanish on the closed unit ball")
    return grid.restrict_outside(alpha)


# ---------------------------------------------------------------------------


@dataclass
class SweepResult:
    g_values: list
    solutions: list
    failures: dict = field(default_factory=dict)


def continuation_sweep(
    g_list: Sequence[float],
    grid: Grid,
    opts: Optional[MinimizeOptions] = None,
    charge: ChargeModel = UNIFORM,
) -> SweepResult:
    """Solve along ascending couplings, warm-starting from the previous minimiser.

    While the previous solution is Coulomb (alpha = 0) the next solve starts
    from the small unstable Hessian direction instead.  Failures are recorded
    and the sweep continues.
    """
    g_list = [float(g) for g in g_list]
    if not g_list:
        raise ValueError("empty coupling list")
    if any(b <= a for a, b in zip(g_list[:-1], g_list[1:])):
        raise ValueError("couplings must be strictly ascending")
    result = SweepResult(g_values=g_list, solutions=[])
    previous = None
    for g in g_list:
        init = previous.alpha if previous is not None and not previous.is_coulomb else "hessian"
        try:
            sol = minimize(g, grid, init=init, opts=opts, charge=charge)
        except SolverError as exc:
            result.failures[g] = str(exc)
            result.solutions.append(exc.payload)
            logger.warning("sweep point g=%g failed: %s", g, exc)
            continue
        result.solutions.append(sol)
        previous = sol
    return result
