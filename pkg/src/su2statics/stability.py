"""Stability of the Coulomb solution and the shell diagnostics.

The second variation of the reduced energy at alpha = 0 is

    H(beta) = g^-2 beta.K beta - g^2 int r^-2 beta^2 psi_C^2 dV,

with K the gauge stiffness and psi_C the Coulomb potential.  Its sign is
measured by the smallest eigenvalue of the pencil (H, M) with M the
r^-4 weighted mass, so the threshold coupling is a clean zero crossing.

The second half of the module holds the matching-parameter diagnostic for the
magnetic shell: a radial variational problem with a closed-form maximiser
u_kappa and value f(kappa), plus an independent quadrature oracle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import integrate, optimize

from .electrostatics import SolverError, coulomb_psi
from .grid import Grid, GridSpec, build_grid, gauge_stiffness, magnetic_density_rows

logger = logging.getLogger(__name__)

SQRT_6PI = float(np.sqrt(6.0 * np.pi))


# ---------------------------------------------------------------------------
# Hessian at the Coulomb solution


def _coulomb_weight(grid: Grid) -> np.ndarray:
    if "coulomb_weight" not in grid._cache:
        sl = grid.alpha_rows
        psi = coulomb_psi(grid).psi[sl]
        r2 = grid.r_nodes[sl, None] ** 2
        grid._cache["coulomb_weight"] = (grid.w_vol[sl] * psi**2 / r2).ravel()
    return grid._cache["coulomb_weight"]


def rayleigh_weight(grid: Grid) -> np.ndarray:
    """Diagonal of the normalising mass: int r^-4 beta^2 dV on the free rows."""
    sl = grid.alpha_rows
    return (grid.w_vol[sl] / grid.r_nodes[sl, None] ** 4).ravel()


def hessian_matrix(g: float, grid: Grid) -> sp.csr_matrix:
    """Sparse Hessian of the reduced energy at alpha = 0 on the free rows."""
    g = float(g)
    if not g > 0:
        raise ValueError("g must be positive")
    K = gauge_stiffness(grid)
    return (K / g**2 - sp.diags(g**2 * _coulomb_weight(grid))).tocsr()


def hessian_form(beta: np.ndarray, g: float, grid: Grid) -> float:
    """Second variation of the reduced energy at the Coulomb solution along beta."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != grid.shape:
        raise ValueError("beta has the wrong shape")
    if not grid.is_outside_only(beta):
        raise ValueError("beta must vanish on the closed unit ball")
    b = beta[grid.alpha_rows].ravel()
    return float(b @ (hessian_matrix(g, grid) @ b))


def radial_hessian_form(f, df, g: float, r_hi: float = np.inf) -> float:
    """Hessian along beta = f(r) sin(theta) by 1D adaptive quadrature.

    After the angular integrals the form reads
    (8 pi / 3) [g^-2 int (f'^2 + 2 f^2 / r^2) dr - g^2 (4 pi)^-2 int f^2 / r^2 dr].
    """
    opts = dict(limit=400, epsabs=0.0, epsrel=1e-11)
    kinetic = integrate.quad(lambda r: df(r) ** 2, 1.0, r_hi, **opts)[0]
    hardy = integrate.quad(lambda r: f(r) ** 2 / r**2, 1.0, r_hi, **opts)[0]
    return 8.0 * np.pi / 3.0 * (kinetic / g**2 + (2.0 / g**2 - g**2 / (16.0 * np.pi**2)) * hardy)


def sin_theta_mismatch(field_: np.ndarray, grid: Grid, rows: Optional[slice] = None) -> float:
    """Relative weighted L2 distance of ``field_`` from its best f(r) sin(theta) fit."""
    rows = grid.alpha_rows if rows is None else rows
    a = np.asarray(field_, dtype=float)[rows]
    w = grid.w_vol[rows]
    s = np.sin(grid.theta_nodes)[None, :]
    coef = np.sum(w * a * s, axis=1) / np.sum(w * s * s, axis=1)
    resid = a - coef[:, None] * s
    norm = np.sqrt(np.sum(w * a * a))
    if norm == 0.0:
        return 0.0
    return float(np.sqrt(np.sum(w * resid * resid)) / norm)


@dataclass
class EigenResult:
    g: float
    value: float
    witness: np.ndarray = field(repr=False)
    method: str = "shift-invert"


def _lower_bound(g: float) -> float:
    # K >= 0 and r^2 psi_C^2 <= (4 pi)^-2, so the pencil is bounded below by this
    return -(g**2) / (16.0 * np.pi**2)


def min_eigenvalue(g: float, grid: Grid, method: str = "shift-invert", tol: float = 1e-10) -> EigenResult:
    """Smallest eigenvalue of H beta = lambda M beta and its eigenvector.

    ``shift-invert`` runs Lanczos on (H - sigma M)^-1 with sigma strictly
    below the spectrum, so the target is the dominant mode; ``dense`` is a
    brute-force generalized eigensolve meant for coarse grids.
    """
    g = float(g)
    if not g > 0:
        raise ValueError("g must be positive")
    H = hessian_matrix(g, grid)
    m = rayleigh_weight(grid)
    if method == "dense":
        vals, vecs = sla.eigh(H.toarray(), np.diag(m), subset_by_index=[0, 0])
        lam, v = float(vals[0]), vecs[:, 0]
    elif method == "shift-invert":
        sigma = _lower_bound(g) - 1.0
        M = sp.diags(m).tocsc()
        lu = spla.splu((H - sigma * M).tocsc())
        op = spla.LinearOperator(H.shape, matvec=lu.solve, dtype=float)
        v0 = np.ones(H.shape[0])
        try:
            vals, vecs = spla.eigsh(H, k=1, M=M, sigma=sigma, which="LM", OPinv=op, tol=tol, v0=v0, maxiter=5000)
        except spla.ArpackNoConvergence as exc:
            raise SolverError(f"eigensolver stagnated at g={g}", payload=exc) from exc
        lam, v = float(vals[0]), vecs[:, 0]
        res = np.linalg.norm(H @ v - lam * (m * v)) / (np.linalg.norm(H @ v) + abs(sigma) * np.linalg.norm(m * v))
        if not res < 1e-6:
            raise SolverError(f"eigenpair residual {res:.2e} at g={g}", res, payload=(lam, v))
    else:
        raise ValueError(f"unknown eigen method {method!r}")
    witness = grid.zeros()
    witness[grid.alpha_rows] = v.reshape(-1, grid.n_theta)
    if witness[grid.alpha_rows].sum() < 0:
        witness = -witness
    witness /= np.max(np.abs(witness))
    return EigenResult(g=g, value=lam, witness=witness, method=method)


# ---------------------------------------------------------------------------
# Threshold scan


@dataclass
class StabilityReport:
    g_values: np.ndarray
    lambda_min: np.ndarray
    g0_estimate: Optional[float]
    hessian_witness: Optional[np.ndarray] = field(default=None, repr=False)
    message: str = ""
    monotone: bool = True

    @property
    def crossing(self) -> bool:
        return self.g0_estimate is not None

    def rows(self) -> list:
        return [(float(g), float(v)) for g, v in zip(self.g_values, self.lambda_min)]


def threshold_scan(
    g_lo: float,
    g_hi: float,
    steps: int = 9,
    grid: Optional[Grid] = None,
    xtol: float = 1e-7,
) -> StabilityReport:
    """Sample the smallest Hessian eigenvalue on [g_lo, g_hi] and locate its zero.

    The first sign change is refined by Brent's method.  No crossing in range
    is reported in ``message``, not raised.
    """
    g_lo, g_hi = float(g_lo), float(g_hi)
    if not 0 < g_lo < g_hi:
        raise ValueError(f"need 0 < g_lo < g_hi, got [{g_lo}, {g_hi}]")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    grid = grid or build_grid(GridSpec())
    gs = np.linspace(g_lo, g_hi, steps)
    lam = np.array([min_eigenvalue(g, grid).value for g in gs])
    monotone = bool(np.all(np.diff(lam) < 0))
    if not monotone:
        logger.warning("smallest eigenvalue not strictly decreasing on the samples")
    sign = np.sign(lam)
    idx = np.nonzero((sign[:-1] > 0) & (sign[1:] <= 0))[0]
    if idx.size == 0:
        where = "positive" if np.all(lam > 0) else "negative" if np.all(lam < 0) else "mixed"
        return StabilityReport(gs, lam, None, None, f"no crossing: eigenvalue {where} on range", monotone)
    i = int(idx[0])
    if lam[i + 1] == 0.0:
        g0 = float(gs[i + 1])
    else:
        g0 = optimize.brentq(lambda g: min_eigenvalue(g, grid).value, gs[i], gs[i + 1], xtol=xtol)
    witness = min_eigenvalue(g0 + 1e-3 * (g_hi - g_lo), grid).witness
    return StabilityReport(gs, lam, float(g0), witness, "crossing located", monotone)


def threshold_grid_sequence(spec: GridSpec, levels: int) -> list[GridSpec]:
    """Grids for a threshold convergence study.

    The eigenfunction at threshold is scale invariant in r, so the leading
    error comes from the finite log-extent of the domain, not the mesh width
    (see :func:`truncation_threshold`).  Each level squares r_max and doubles
    the outer cell count, keeping the log spacing fixed.
    """
    out = [spec]
    for _ in range(levels):
        s = out[-1]
        out.append(GridSpec(s.r_max**2, s.n_r_in, 2 * s.n_r_out, s.n_theta))
    return out


def truncation_threshold(r_max: float) -> float:
    """Threshold of the continuous problem posed on 1 <= r <= r_max with Dirichlet ends."""
    mu2 = (np.pi / np.log(r_max)) ** 2
    return float((16.0 * np.pi**2 * (2.25 + mu2)) ** 0.25)


# ---------------------------------------------------------------------------
# Matching-parameter diagnostic


def kappa_constants(kappa: float, g: float, c1: float) -> tuple[float, float, float]:
    """(d, p, p') for the radial profile; p p' = kappa^2 g^2 and p - p' = 1."""
    if kappa < 0 or g <= 0 or c1 <= 0:
        raise ValueError("need kappa >= 0, g > 0, c1 > 0")
    d = 64.0 * np.pi * c1 / g
    root = np.sqrt(1.0 + 4.0 * kappa**2 * g**2)
    return d, 0.5 * (root + 1.0), 0.5 * (root - 1.0)


def _edge_ratio(p: float, q: float, d: float) -> float:
    """[(1+d)^(p+q) - 1] / [p (1+d)^(p+q) + q], overflow free."""
    t = np.exp(-(p + q) * np.log1p(d))
    return float((1.0 - t) / (p + q * t))


def f_kappa(kappa, g: float, c1: float):
    """Supremum of the matching objective; decreases from f(0) to (40 pi)^-1."""
    kap = np.asarray(kappa, dtype=float)
    out = np.empty(kap.shape)
    for idx, k in np.ndenumerate(kap):
        d, p, q = kappa_constants(float(k), g, c1)
        out[idx] = 1.0 / (40.0 * np.pi) + _edge_ratio(p, q, d) / (8.0 * np.pi)
    return out if out.ndim else float(out)


def u_kappa_profile(r, kappa: float, g: float, c1: float) -> np.ndarray:
    """Closed-form maximiser of the matching objective as a function of r.

    Inside the unit ball (8 pi)^-1 (1 - r^2 + 2X); on 1 <= r <= 1 + d the
    combination of r^-p and r^p' vanishing at r = 1 + d; zero beyond.
    Continuous with continuous flux at r = 1.
    """
    d, p, q = kappa_constants(kappa, g, c1)
    X = _edge_ratio(p, q, d)
    r = np.asarray(r, dtype=float)
    den = p + q * np.exp(-(p + q) * np.log1p(d))
    # (1+d)^(p+p') r^-p - r^p' rescaled by (1+d)^-(p+p'), in logs to avoid overflow
    lr = np.log(np.maximum(r, 1.0))
    outer = (np.exp(-p * lr) - np.exp(q * lr - (p + q) * np.log1p(d))) / den / (4.0 * np.pi)
    inner = (1.0 - r**2 + 2.0 * X) / (8.0 * np.pi)
    return np.where(r <= 1.0, inner, np.where(r <= 1.0 + d, outer, 0.0))


def u_kappa_derivative(r, kappa: float, g: float, c1: float) -> np.ndarray:
    d, p, q = kappa_constants(kappa, g, c1)
    r = np.asarray(r, dtype=float)
    den = p + q * np.exp(-(p + q) * np.log1p(d))
    lr = np.log(np.maximum(r, 1.0))
    outer = (-p * np.exp(-(p + 1.0) * lr) - q * np.exp((q - 1.0) * lr - (p + q) * np.log1p(d))) / den / (4.0 * np.pi)
    inner = -r / (4.0 * np.pi)
    return np.where(r <= 1.0, inner, np.where(r <= 1.0 + d, outer, 0.0))


def u_kappa_closed_form(kappa: float, g: float, c1: float, grid: Optional[Grid] = None):
    """(u_kappa on the grid or None, f(kappa))."""
    u = None
    if grid is not None:
        u = np.broadcast_to(u_kappa_profile(grid.r_nodes, kappa, g, c1)[:, None], grid.shape).copy()
    return u, f_kappa(kappa, g, c1)


def kappa_objective(u, du, kappa: float, g: float, c1: float) -> float:
    """Matching objective for a radial profile u (callable) by adaptive quadrature.

    3 (4 pi)^-1 int_{r<=1} u - 1/2 (int |grad u|^2 + kappa^2 g^2 int_{r>=1} r^-2 u^2),
    integrals over R^3, u supported in r <= 1 + d.
    """
    d, p, _ = kappa_constants(kappa, g, c1)
    opts = dict(limit=400, epsabs=1e-20, epsrel=1e-10)
    four_pi = 4.0 * np.pi
    # u decays like r^-p off the unit sphere: split at multiples of the layer width 1/p
    cuts = [1.0] + [1.0 + k / p for k in (1.0, 4.0, 16.0, 64.0) if k / p < d] + [1.0 + d]

    def outer(fun):
        return sum(integrate.quad(fun, a, b, **opts)[0] for a, b in zip(cuts[:-1], cuts[1:]))

    load = integrate.quad(lambda r: r * r * u(r), 0.0, 1.0, **opts)[0]
    grad = integrate.quad(lambda r: r * r * du(r) ** 2, 0.0, 1.0, **opts)[0]
    grad += outer(lambda r: r * r * du(r) ** 2)
    pot = outer(lambda r: u(r) ** 2)
    return float(3.0 / four_pi * four_pi * load - 0.5 * four_pi * (grad + kappa**2 * g**2 * pot))


def kappa_quadrature(kappa: float, g: float, c1: float) -> float:
    """Objective at the closed-form maximiser, evaluated by quadrature."""
    return kappa_objective(
        lambda r: float(u_kappa_profile(r, kappa, g, c1)),
        lambda r: float(u_kappa_derivative(r, kappa, g, c1)),
        kappa,
        g,
        c1,
    )


@dataclass
class KappaDiagnostic:
    c1: float
    g: float
    target: float
    kappa: Optional[float]
    d: float
    p: Optional[float]
    p_prime: Optional[float]
    kappa_grid: np.ndarray = field(repr=False)
    f_of_kappa: np.ndarray = field(repr=False)
    shell_energy: float = 0.0
    message: str = ""


def kappa_diagnostic(solution, c1: float, c_shell: float = 5.0, kappa_max: float = 1e3) -> KappaDiagnostic:
    """Find kappa with f(kappa) = 3 (8 pi)^-1 int_{r<=1} psi for a solution."""
    grid, g = solution.grid, solution.g
    target = 3.0 / (8.0 * np.pi) * grid.integrate_inside(solution.psi.psi)
    kap_grid = np.concatenate([[0.0], np.geomspace(1e-3, kappa_max, 60)])
    fk = f_kappa(kap_grid, g, c1)
    d, _, _ = kappa_constants(0.0, g, c1)
    shell = shell_concentration(solution, c_shell).shell_energy
    f0, f_inf = fk[0], 1.0 / (40.0 * np.pi)
    if not f_inf < target <= f0:
        msg = f"target {target:.6g} outside range ({f_inf:.6g}, {f0:.6g}]"
        return KappaDiagnostic(c1, g, target, None, d, None, None, kap_grid, fk, shell, msg)
    if target == f0:
        kap = 0.0
    else:
        hi = 1.0
        while f_kappa(hi, g, c1) > target:
            hi *= 4.0
        kap = optimize.brentq(lambda k: f_kappa(k, g, c1) - target, 0.0, hi, xtol=1e-14, rtol=1e-13)
    _, p, q = kappa_constants(kap, g, c1)
    return KappaDiagnostic(c1, g, target, float(kap), d, p, q, kap_grid, fk, shell, "matched")


# ---------------------------------------------------------------------------
# Shell concentration


@dataclass
class ShellReport:
    c_shell: float
    shell_energy: float
    ratio_to_g: float
    fraction: float
    max_outer_fraction: float
    outer_argmax: float


def _cumulative_magnetic(alpha: np.ndarray, grid: Grid):
    rows = magnetic_density_rows(alpha, grid)
    return grid.r_nodes, np.concatenate([[0.0], np.cumsum(rows)])


def shell_concentration(solution, c_shell: float = 5.0, outer_from: float = 2.0) -> ShellReport:
    """Magnetic energy in 1 <= r <= 1 + c/g compared with equal log-width shells beyond ``outer_from``.

    ``shell_energy`` is g^-2 int_U |grad a|^2; ``fraction`` its share of the
    total magnetic energy.  Energy in partial intervals is interpolated
    linearly in the cumulative sum.
    """
    if c_shell <= 0:
        raise ValueError("c_shell must be positive")
    grid, g = solution.grid, solution.g
    r, cum = _cumulative_magnetic(solution.alpha, grid)
    total = cum[-1]
    q = 1.0 + c_shell / g

    def between(a, b):
        return np.interp(b, r, cum) - np.interp(a, r, cum)

    inner = float(between(1.0, q))
    starts = r[(r >= outer_from) & (r * q <= grid.r_max)]
    if starts.size:
        outer = between(starts, starts * q)
        k = int(np.argmax(outer))
        max_outer, arg = float(outer[k]), float(starts[k])
    else:
        max_outer, arg = 0.0, float("nan")
    if total <= 0:
        return ShellReport(c_shell, 0.0, 0.0, 0.0, 0.0, arg)
    shell_energy = inner / g**2
    return ShellReport(c_shell, shell_energy, shell_energy / g, inner / total, max_outer / total, arg)
