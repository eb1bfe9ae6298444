"""Large-r structure of converged solutions.

Two independent tail fits:

* the potential, r * <psi> = A + B / r, whose constant gives the effective
  charge e0 = A g^2 / sqrt(2);
* the sin^2 moment of the gauge amplitude, f(r) ~ r^-p0, fitted in log-log
  form after dividing out the Dirichlet reflection at r_max.

Linearising the amplitude equation about psi = A / r gives the exponents
-p0 and p0 + 1 with p0 = (sqrt(9 - 8 e0^2) - 1) / 2, so the two fits can be
checked against each other.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .electrostatics import ScreeningFunction, alpha_moment
from .grid import Grid
from .stability import sin_theta_mismatch

logger = logging.getLogger(__name__)

SQRT2 = float(np.sqrt(2.0))
SIN3_INTEGRAL = 4.0 / 3.0  # int_0^pi sin^3
MIN_FIT_NODES = 8


class FitError(ValueError):
    """A tail fit could not be carried out; ``diagnostics`` says why."""

    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


def default_window(grid: Grid) -> tuple[float, float]:
    return grid.r_max / 8.0, grid.r_max / 4.0


def window_rows(grid: Grid, window: Optional[Sequence[float]] = None) -> np.ndarray:
    """Radial node indices inside ``window``; at least 8 and clear of the outer half."""
    lo, hi = default_window(grid) if window is None else (float(window[0]), float(window[1]))
    if not 1.0 < lo < hi:
        raise FitError(f"bad fit window [{lo}, {hi}]")
    if hi > grid.r_max / 2.0:
        raise FitError(f"fit window upper end {hi} too close to r_max = {grid.r_max}")
    idx = np.nonzero((grid.r_nodes >= lo) & (grid.r_nodes <= hi))[0]
    if idx.size < MIN_FIT_NODES:
        raise FitError(f"fit window [{lo}, {hi}] holds {idx.size} radial nodes, need {MIN_FIT_NODES}")
    return idx


def sphere_average(field_: np.ndarray, grid: Grid) -> np.ndarray:
    return grid.sphere_integral(field_) / (4.0 * np.pi)


def p0_formula(e0) -> np.ndarray:
    """Decay exponent of the amplitude tail for effective charge e0."""
    e0 = np.asarray(e0, dtype=float)
    if np.any(e0 < 0) or np.any(8.0 * e0**2 > 9.0):
        raise ValueError("e0 must lie in [0, 3/(2 sqrt 2)]")
    out = 0.5 * (np.sqrt(9.0 - 8.0 * e0**2) - 1.0)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Potential tail


def _psi_tail(solution, window) -> tuple[float, float, float, np.ndarray]:
    grid = solution.grid
    idx = window_rows(grid, window)
    r = grid.r_nodes[idx]
    y = r * sphere_average(solution.psi.psi, grid)[idx]
    X = np.column_stack([np.ones_like(r), 1.0 / r])
    (a, b), *_ = np.linalg.lstsq(X, y, rcond=None)
    rms = float(np.sqrt(np.mean((X @ [a, b] - y) ** 2)))
    return float(a), float(b), rms, idx


def fit_psi0(solution, window=None) -> float:
    """Tail constant of r <psi>."""
    return _psi_tail(solution, window)[0]


def fit_e0(solution, window=None) -> float:
    """Effective charge from r <psi> -> sqrt(2) g^-2 e0 on the window."""
    return fit_psi0(solution, window) * solution.g**2 / SQRT2


# ---------------------------------------------------------------------------
# Amplitude tail


def _reflection(r: np.ndarray, p: float, r_out: float) -> np.ndarray:
    """1 - (r / r_out)^(2p + 1): the decaying power with the growing one that cancels it at r_out."""
    return 1.0 - (r / r_out) ** (2.0 * p + 1.0)


def _loglog(r, f):
    X = np.column_stack([np.ones_like(r), -np.log(r)])
    (lc, p), *_ = np.linalg.lstsq(X, np.log(f), rcond=None)
    rms = float(np.sqrt(np.mean((X @ [lc, p] - np.log(f)) ** 2)))
    return float(p), float(np.exp(lc)), rms


@dataclass
class DecayFit:
    p0: float
    c0: float
    p0_raw: float
    rms: float
    angular_mismatch: float
    iterations: int


def fit_decay(solution, window=None, dirichlet: bool = True, max_iter: int = 100) -> DecayFit:
    """Log-log fit of the sin^2 moment, optionally with the r_max reflection removed.

    The corrected model is f = C (r^-p - r_max^-(2p+1) r^(p+1)), solved by a
    fixed point in p; c0 = C / int sin^3.
    """
    grid = solution.grid
    idx = window_rows(grid, window)
    r = grid.r_nodes[idx]
    f = alpha_moment(solution.alpha, grid)[idx]
    if not np.all(f > 0):
        raise FitError(
            "amplitude moment not positive on the fit window",
            {"r": r.tolist(), "f": f.tolist(), "min": float(f.min())},
        )
    p_raw, C, rms = _loglog(r, f)
    p, it = p_raw, 0
    if dirichlet:
        for it in range(1, max_iter + 1):
            p_new, C, rms = _loglog(r, f / _reflection(r, p, grid.r_max))
            if abs(p_new - p) < 1e-12:
                p = p_new
                break
            p = p_new
        else:
            raise FitError("reflection-corrected exponent fit did not settle", {"p": p, "p_raw": p_raw})
    mismatch = sin_theta_mismatch(solution.alpha, grid, rows=slice(idx[0], idx[-1] + 1))
    return DecayFit(p0=p, c0=C / SIN3_INTEGRAL, p0_raw=p_raw, rms=rms, angular_mismatch=mismatch, iterations=it)


def fit_decay_exponent(solution, window=None) -> tuple[float, float]:
    """(p0_fit, c0) of alpha ~ c0 sin(theta) r^-p0."""
    fit = fit_decay(solution, window)
    return fit.p0, fit.c0


# ---------------------------------------------------------------------------
# Pointwise bounds and remainders


@dataclass
class PointwiseReport:
    psi_decay_constant: float  # sup_{r>=2} r psi g^(1/2)
    gamma: float
    psi_exponential_constant: float  # sup_{r>=gamma} r psi g^2 exp(g^(1/4)/gamma)
    alpha_floor: float  # inf over gamma <= r <= r_max/4 of r alpha / (g^(1/2) sin theta)
    alpha_floor_equator: float
    psi_times_r_max: float


def plateau_onset(solution, level: float = 0.5) -> float:
    """First radius where r * alpha on the equator reaches ``level`` of its maximum over r <= r_max/4."""
    grid = solution.grid
    j = int(np.argmin(np.abs(grid.theta_nodes - np.pi / 2)))
    r = grid.r_nodes
    keep = (r >= 1.0) & (r <= grid.r_max / 4)
    ra = (r * solution.alpha[:, j])[keep]
    if not np.any(ra > 0):
        return float("nan")
    k = int(np.argmax(ra >= level * ra.max()))
    return float(r[keep][k])


def check_pointwise_bounds(solution, gamma: Optional[float] = None) -> PointwiseReport:
    """Constants implied by the solution for the pointwise tail bounds."""
    grid, g = solution.grid, solution.g
    r = grid.r_nodes
    psi = solution.psi.psi
    rpsi = r[:, None] * psi
    far = r >= 2.0
    c_decay = float(np.max(rpsi[far]) * np.sqrt(g))
    if gamma is None:
        gamma = plateau_onset(solution)
    if not np.isfinite(gamma):
        gamma = 2.0
    beyond = r >= gamma
    c_exp = float(np.max(rpsi[beyond]) * g**2 * np.exp(g**0.25 / gamma))
    band = (r >= gamma) & (r <= grid.r_max / 4)
    s = np.sin(grid.theta_nodes)[None, :]
    ratio = r[band, None] * solution.alpha[band] / (np.sqrt(g) * s)
    j = int(np.argmin(np.abs(grid.theta_nodes - np.pi / 2)))
    floor = float(ratio.min()) if ratio.size else float("nan")
    floor_eq = float(ratio[:, j].min()) if ratio.size else float("nan")
    return PointwiseReport(c_decay, float(gamma), c_exp, floor, floor_eq, float(np.max(rpsi[-1])))


def fit_remainders(solution, report: "AsymptoticsReport", window=None) -> tuple[float, float]:
    """sup over the window of r |r<psi> g^2/sqrt2 - e0| and of r |amplitude(r) - c0|.

    amplitude(r) is the sin^2 moment divided by int sin^3 and by the
    reflection-corrected power law with the fitted p0.
    """
    grid, g = solution.grid, solution.g
    window = report.fit_window if window is None else window
    idx = window_rows(grid, window)
    r = grid.r_nodes[idx]
    rpsi = r * sphere_average(solution.psi.psi, grid)[idx]
    m_psi = float(np.max(r * np.abs(rpsi * g**2 / SQRT2 - report.e0)))
    if report.c0 == 0.0:
        return m_psi, 0.0
    f = alpha_moment(solution.alpha, grid)[idx]
    amp = f / SIN3_INTEGRAL / (r ** (-report.p0_fit) * _reflection(r, report.p0_fit, grid.r_max))
    m_alpha = float(np.max(r * np.abs(amp - report.c0)))
    return m_psi, m_alpha


# ---------------------------------------------------------------------------
# Report


@dataclass
class AsymptoticsReport:
    e0: float
    psi0: float
    p0_fit: float
    p0_formula: float
    c0: float
    m_psi_bound: float
    m_alpha_bound: float
    fit_window: tuple
    residuals: dict = field(default_factory=dict)
    p0_fit_raw: float = float("nan")
    angular_mismatch: float = float("nan")
    coulomb: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fit_window"] = list(self.fit_window)
        return {k: (float(v) if isinstance(v, (np.floating, np.integer)) else v) for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "AsymptoticsReport":
        d = dict(d)
        d["fit_window"] = tuple(d["fit_window"])
        return cls(**d)


def analyze(solution, window=None) -> AsymptoticsReport:
    """Fit e0, p0 and c0 and the remainder constants for one solution.

    A Coulomb solution (alpha = 0) has no amplitude tail; its exponent fields
    are NaN and c0 = 0.
    """
    grid = solution.grid
    window = default_window(grid) if window is None else (float(window[0]), float(window[1]))
    psi0, _, rms_psi, _ = _psi_tail(solution, window)
    e0 = psi0 * solution.g**2 / SQRT2
    nan = float("nan")
    coulomb = bool(np.max(np.abs(solution.alpha)) < 1e-6)
    if coulomb:
        rep = AsymptoticsReport(e0, psi0, nan, nan, 0.0, 0.0, 0.0, window, {"psi": rms_psi}, nan, nan, True)
    else:
        fit = fit_decay(solution, window)
        try:
            p_formula = p0_formula(e0)
        except ValueError:
            p_formula = nan
        rep = AsymptoticsReport(
            e0=e0,
            psi0=psi0,
            p0_fit=fit.p0,
            p0_formula=p_formula,
            c0=fit.c0,
            m_psi_bound=0.0,
            m_alpha_bound=0.0,
            fit_window=window,
            residuals={"psi": rms_psi, "alpha_loglog": fit.rms},
            p0_fit_raw=fit.p0_raw,
            angular_mismatch=fit.angular_mismatch,
        )
    rep.m_psi_bound, rep.m_alpha_bound = fit_remainders(solution, rep, window)
    return rep


def screening_consistency(screening: ScreeningFunction, report: AsymptoticsReport, g: float) -> dict:
    """Compare sigma(0) with the two candidate normalisations of the tail charge.

    Returns the ratios sigma(0) / (sqrt2 g^-2 e0) and sigma(0) / (4 pi sqrt2 g^-2 e0)
    and which of them lies within 10% of one.
    """
    psi0 = SQRT2 * report.e0 / g**2
    ratios = {"unit": screening.sigma_origin / psi0, "four_pi": screening.sigma_origin / (4.0 * np.pi * psi0)}
    matches = [k for k, v in ratios.items() if abs(v - 1.0) <= 0.1]
    return {"sigma0": screening.sigma_origin, "psi0": psi0, "ratios": ratios, "matches": matches}
