"""Axisymmetric (r, theta) grid, quadrature weights and finite-volume operators.

Radial nodes are uniform in r on [0, 1] and uniform in s = ln r on [1, r_max],
with r = 1 an exact node.  Polar nodes are cell centred, so the axis is never
sampled.  Every operator is assembled from a discrete quadratic form, which
makes it exactly symmetric under the matching inner product.

Arrays living on the grid have shape ``(n_r, n_theta)`` and are stored
r-major.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class GridSpec:
    r_max: float = 128.0
    n_r_in: int = 32
    n_r_out: int = 256
    n_theta: int = 48

    def __post_init__(self):
        for name in ("n_r_in", "n_r_out", "n_theta"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ValueError(f"{name} must be an integer, got {value!r}")
            if value < 8:
                raise ValueError(f"{name} must be >= 8, got {value}")
        if not np.isfinite(self.r_max) or self.r_max < 16:
            raise ValueError(f"r_max must be >= 16, got {self.r_max}")

    def refined(self) -> "GridSpec":
        """Halve every spacing at fixed r_max."""
        return GridSpec(self.r_max, 2 * self.n_r_in, 2 * self.n_r_out, 2 * self.n_theta)


@dataclass(frozen=True, eq=False)
class Grid:
    """Discretised axisymmetric domain.

    Attributes
    ----------
    r_nodes : (n_r,) radii, ``r_nodes[i_one] == 1`` exactly
    r_faces : (n_r + 1,) finite-volume cell boundaries in r
    theta_nodes, theta_faces : cell centres and the n_theta + 1 cell edges
    w_sphere : (n_theta,) integral of sin(theta) over each polar cell
    w_vol : (n_r, n_theta) cell volumes, 2*pi and the r^2 sin(theta) Jacobian included
    w_inside : part of each cell volume lying in the closed unit ball
    """

    spec: GridSpec
    r_nodes: np.ndarray
    r_faces: np.ndarray
    theta_nodes: np.ndarray
    theta_faces: np.ndarray
    w_sphere: np.ndarray
    w_vol: np.ndarray
    w_inside: np.ndarray
    i_one: int
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.r_nodes.size, self.theta_nodes.size)

    @property
    def n_r(self) -> int:
        return self.r_nodes.size

    @property
    def n_theta(self) -> int:
        return self.theta_nodes.size

    @property
    def r_max(self) -> float:
        return float(self.r_nodes[-1])

    @property
    def h_s(self) -> float:
        return float(np.log(self.spec.r_max) / self.spec.n_r_out)

    @property
    def r(self) -> np.ndarray:
        """Radius broadcast to the full grid shape."""
        return np.broadcast_to(self.r_nodes[:, None], self.shape)

    @property
    def theta(self) -> np.ndarray:
        return np.broadcast_to(self.theta_nodes[None, :], self.shape)

    @property
    def w_outside(self) -> np.ndarray:
        return self.w_vol - self.w_inside

    @cached_property
    def alpha_rows(self) -> slice:
        """Radial rows carrying free gauge-amplitude unknowns (1 < r < r_max)."""
        return slice(self.i_one + 1, self.n_r - 1)

    @cached_property
    def outside_mask(self) -> np.ndarray:
        return self.r > 1.0

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def integrate(self, f: np.ndarray) -> float:
        return float(np.sum(self.w_vol * f))

    def integrate_inside(self, f: np.ndarray) -> float:
        return float(np.sum(self.w_inside * f))

    def integrate_outside(self, f: np.ndarray) -> float:
        return float(np.sum(self.w_outside * f))

    def sphere_integral(self, f: np.ndarray) -> np.ndarray:
        """Integral over the unit sphere dOmega at every radial node."""
        return TWO_PI * (f @ self.w_sphere)

    def is_outside_only(self, f: np.ndarray) -> bool:
        return bool(np.all(f[: self.i_one + 1] == 0.0))

    def restrict_outside(self, f: np.ndarray) -> np.ndarray:
        """Zero ``f`` on the closed unit ball and on the outer Dirichlet row."""
        out = np.array(f, dtype=float, copy=True)
        out[: self.i_one + 1] = 0.0
        out[-1] = 0.0
        return out

    def nearest_row(self, r: float) -> int:
        return int(np.argmin(np.abs(self.r_nodes - r)))


def build_grid(spec: GridSpec) -> Grid:
    if not isinstance(spec, GridSpec):
        raise TypeError("build_grid expects a GridSpec")
    n_in, n_out, n_th = spec.n_r_in, spec.n_r_out, spec.n_theta

    r_in = np.arange(n_in + 1) / n_in
    s_out = np.log(spec.r_max) * np.arange(1, n_out + 1) / n_out
    r_nodes = np.concatenate([r_in, np.exp(s_out)])
    r_nodes[n_in] = 1.0
    if np.any(np.diff(r_nodes) <= 0):
        raise ValueError("degenerate radial grid")

    # Inner faces are arithmetic midpoints, outer faces geometric midpoints
    # (so r_face^2 = r_i r_{i+1}, which makes the radial flux exact for 1/r).
    mid_in = 0.5 * (r_nodes[:n_in] + r_nodes[1 : n_in + 1])
    mid_out = np.sqrt(r_nodes[n_in:-1] * r_nodes[n_in + 1 :])
    r_faces = np.concatenate([[0.0], mid_in, mid_out, [r_nodes[-1]]])

    theta_faces = np.linspace(0.0, np.pi, n_th + 1)
    theta_nodes = 0.5 * (theta_faces[:-1] + theta_faces[1:])
    w_sphere = np.cos(theta_faces[:-1]) - np.cos(theta_faces[1:])

    lo, hi = r_faces[:-1], r_faces[1:]
    radial = (hi**3 - lo**3) / 3.0
    radial_in = np.clip(np.minimum(hi, 1.0) ** 3 - lo**3, 0.0, None) / 3.0
    w_vol = TWO_PI * np.outer(radial, w_sphere)
    w_inside = TWO_PI * np.outer(radial_in, w_sphere)

    return Grid(
        spec=spec,
        r_nodes=r_nodes,
        r_faces=r_faces,
        theta_nodes=theta_nodes,
        theta_faces=theta_faces,
        w_sphere=w_sphere,
        w_vol=w_vol,
        w_inside=w_inside,
        i_one=n_in,
    )


# ---------------------------------------------------------------------------
# Scalar Laplacian (electric potential)


def _index(grid: Grid) -> np.ndarray:
    return np.arange(grid.n_r * grid.n_theta).reshape(grid.shape)


def scalar_stiffness(grid: Grid, robin: bool = True) -> sp.csr_matrix:
    """Matrix S with f^T S f = integral of |grad f|^2 over the grid cells.

    With ``robin`` the exterior energy of a pure 1/r continuation beyond
    r_max is appended, which is the weak form of d_r(r f) = 0 at r_max.
    The origin row is kept as n_theta separate wedges; use
    :func:`origin_collapse` to tie them together.
    """
    key = ("scalar_stiffness", robin)
    if key in grid._cache:
        return grid._cache[key]
    n_r, n_t = grid.shape
    idx = _index(grid)
    r, rf, th_f = grid.r_nodes, grid.r_faces, grid.theta_faces
    dth = np.pi / n_t

    rows, cols, vals = [], [], []

    def couple(a, b, c):
        rows.extend([a, b, a, b])
        cols.extend([a, b, b, a])
        vals.extend([c, c, -c, -c])

    # radial faces between node i and i+1 sit at r_faces[i+1]
    c_r = TWO_PI * rf[1:-1, None] ** 2 / np.diff(r)[:, None] * grid.w_sphere[None, :]
    couple(idx[:-1].ravel(), idx[1:].ravel(), c_r.ravel())
    # polar faces, skipping the two axis faces (zero flux)
    length = np.diff(rf)
    c_t = TWO_PI * length[:, None] * np.sin(th_f[None, 1:-1]) / dth
    c_t = np.broadcast_to(c_t, (n_r, n_t - 1)).copy()
    c_t[0] = 0.0  # origin wedges are merged by origin_collapse
    couple(idx[:, :-1].ravel(), idx[:, 1:].ravel(), c_t.ravel())

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    S = sp.coo_matrix((vals, (rows, cols)), shape=(n_r * n_t,) * 2).tocsr()
    if robin:
        S = S + sp.diags(
            np.concatenate([np.zeros((n_r - 1) * n_t), TWO_PI * r[-1] * grid.w_sphere])
        )
    S = S.tocsr()
    grid._cache[key] = S
    return S


def origin_collapse(grid: Grid) -> sp.csr_matrix:
    """Prolongation P from reduced unknowns to the full grid.

    The n_theta origin nodes share one unknown; every other node is its own
    unknown.  Reduced systems are P^T A P.
    """
    if "origin_collapse" in grid._cache:
        return grid._cache["origin_collapse"]
    n_r, n_t = grid.shape
    n_full = n_r * n_t
    n_red = n_full - n_t + 1
    cols = np.concatenate([np.zeros(n_t, dtype=int), np.arange(1, n_red)])
    P = sp.csr_matrix((np.ones(n_full), (np.arange(n_full), cols)), shape=(n_full, n_red))
    grid._cache["origin_collapse"] = P
    return P


def laplacian_axi(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Finite-volume Laplacian of an axisymmetric field.

    The outermost radial row has no outer neighbour and is not a valid
    Laplacian value; callers should ignore it.
    """
    f = np.asarray(f, dtype=float)
    S = scalar_stiffness(grid, robin=False)
    P = origin_collapse(grid)
    w = grid.w_vol.ravel()
    flux = -(P.T @ (S @ f.ravel()))
    wr = P.T @ w
    lap_red = flux / wr
    return (P @ lap_red).reshape(grid.shape)


# ---------------------------------------------------------------------------
# Gauge-amplitude operator  -a_rr - r^-2 ((sin th)^-1 (sin th a)_th)_th


def _axis_coefficient(grid: Grid) -> float:
    """Diagonal closure for the polar cells touching the axis.

    Chosen so that the discrete angular operator reproduces
    -((sin th)^-1 (sin^2 th)_th)_th = 2 sin th exactly in the first cell; the
    resulting value is 2 + O(dtheta^2), the energy of a = c sin(theta) on the
    half cell next to the axis.
    """
    d = np.pi / grid.n_theta
    t0, t1 = grid.theta_nodes[0], grid.theta_nodes[1]
    s0, s1 = np.sin(t0), np.sin(t1)
    coupling = s0 * (s0**2 - s1**2) / (np.sin(d) * d)
    return float((2.0 * s0 * grid.w_sphere[0] - coupling) / s0)


def gauge_stiffness(grid: Grid) -> sp.csr_matrix:
    """Matrix K on the free alpha rows with

        a^T K a = 2 pi int (a_r^2 + r^-2 (sin th)^-1 ((sin th a)_th)^2) dr dth,

    i.e. twice the magnetic energy at g = 1.  Dirichlet a = 0 at r = 1 and
    r = r_max.  Unknowns are ``alpha[grid.alpha_rows]`` flattened r-major.
    """
    if "gauge_stiffness" in grid._cache:
        return grid._cache["gauge_stiffness"]
    n_t = grid.n_theta
    rows_sl = grid.alpha_rows
    r_all = grid.r_nodes
    rf = grid.r_faces
    dth = np.pi / n_t
    n_a = rows_sl.stop - rows_sl.start
    idx = np.arange(n_a * n_t).reshape(n_a, n_t)
    w_s = grid.w_sphere
    sin_c = np.sin(grid.theta_nodes)

    diag = np.zeros((n_a, n_t))
    rr, cc, vv = [], [], []

    # radial part: sum over faces (i, i+1) including the Dirichlet neighbours
    dr = np.diff(r_all)
    i0 = rows_sl.start
    for k in range(n_a + 1):
        i = i0 - 1 + k  # face between i and i+1
        c = TWO_PI * w_s / dr[i]
        if k > 0:
            diag[k - 1] += c
        if k < n_a:
            diag[k] += c
        if 0 < k < n_a:
            rr.append(idx[k - 1])
            cc.append(idx[k])
            vv.append(-c)

    # angular part with u = sin(th) a
    inv_r2 = 1.0 / rf[rows_sl.start : rows_sl.stop] - 1.0 / rf[rows_sl.start + 1 : rows_sl.stop + 1]
    sin_f = np.sin(grid.theta_faces[1:-1])
    cf = 1.0 / (sin_f * dth)  # coefficient on (u_{j+1} - u_j)^2
    ax = _axis_coefficient(grid)
    for k in range(n_a):
        scale = TWO_PI * inv_r2[k]
        c = scale * cf
        diag[k, :-1] += c * sin_c[:-1] ** 2
        diag[k, 1:] += c * sin_c[1:] ** 2
        rr.append(idx[k, :-1])
        cc.append(idx[k, 1:])
        vv.append(-c * sin_c[:-1] * sin_c[1:])
        diag[k, 0] += scale * ax
        diag[k, -1] += scale * ax

    rr = np.concatenate(rr)
    cc = np.concatenate(cc)
    vv = np.concatenate(vv)
    off = sp.coo_matrix((vv, (rr, cc)), shape=(n_a * n_t,) * 2)
    K = (off + off.T + sp.diags(diag.ravel())).tocsr()
    grid._cache["gauge_stiffness"] = K
    return K


def gauge_mass(grid: Grid) -> np.ndarray:
    """Weights of the sin(theta) dr dtheta dphi measure on the alpha rows (w_vol / r^2)."""
    sl = grid.alpha_rows
    return (grid.w_vol[sl] / grid.r_nodes[sl, None] ** 2).ravel()


def gauge_operator(alpha: np.ndarray, grid: Grid) -> np.ndarray:
    """Apply the linear part of the gauge-amplitude equation.

    Returns a full-grid array, zero on the ball and on the outer boundary row.
    The operator is symmetric under ``gauge_mass`` weights.
    """
    alpha = np.asarray(alpha, dtype=float)
    sl = grid.alpha_rows
    K = gauge_stiffness(grid)
    out = grid.zeros()
    out[sl] = ((K @ alpha[sl].ravel()) / gauge_mass(grid)).reshape(-1, grid.n_theta)
    return out


def magnetic_form(alpha: np.ndarray, grid: Grid) -> float:
    """2 pi int r^-2 (a_r^2 + r^-2 sin^-2 (sin a)_th^2) dV over the grid (g = 1, no 1/2)."""
    a = np.asarray(alpha, dtype=float)[grid.alpha_rows].ravel()
    return float(a @ (gauge_stiffness(grid) @ a))


def magnetic_density_rows(alpha: np.ndarray, grid: Grid) -> np.ndarray:
    """Split of :func:`magnetic_form` into per-radial-interval contributions.

    Returns an array of length n_r - 1; entry i holds the radial energy of
    the interval [r_i, r_{i+1}] plus half the angular energy of the two
    adjacent node rows.  Sums to ``magnetic_form``.
    """
    a = np.asarray(alpha, dtype=float)
    n_t = grid.n_theta
    rf = grid.r_faces
    dth = np.pi / n_t
    dr = np.diff(grid.r_nodes)
    radial = TWO_PI * np.sum(np.diff(a, axis=0) ** 2 * grid.w_sphere[None, :], axis=1) / dr

    u = a * np.sin(grid.theta_nodes)[None, :]
    sin_f = np.sin(grid.theta_faces[1:-1])
    ang_row = np.sum(np.diff(u, axis=1) ** 2 / (sin_f * dth), axis=1)
    ax = _axis_coefficient(grid)
    ang_row = ang_row + ax * (a[:, 0] ** 2 + a[:, -1] ** 2)
    inv_r2 = np.zeros(grid.n_r)
    inv_r2[1:] = 1.0 / rf[1:-1] - 1.0 / rf[2:]
    ang_row = TWO_PI * inv_r2 * ang_row
    return radial + 0.5 * (ang_row[:-1] + ang_row[1:])


# ---------------------------------------------------------------------------
# Hardy / Poincare inequality checks


def _random_radial_profile(rng, x):
    """Smooth random combination of bumps on x in [0, 1], vanishing at both ends."""
    n = rng.integers(1, 5)
    out = np.zeros_like(x)
    for _ in range(n):
        c, wdt, amp = rng.uniform(0.05, 0.95), rng.uniform(0.03, 0.5), rng.normal()
        out += amp * np.exp(-0.5 * ((x - c) / wdt) ** 2)
    out *= np.sin(np.pi * x) ** rng.integers(1, 3)
    return out


def validate_inequalities(samples: int, grid: Grid, seed: int = 0) -> dict:
    """Check the three one-dimensional inequalities used in the stability bound.

    For each random test function this evaluates

    1. int_{r>=1} r^-2 f^2 dr  <=  4 int f_r^2 dr         (f(1) = 0)
    2. int_{r>=1} f^2 dr       <=  4 int r^2 f_r^2 dr     (f -> 0 at r_max)
    3. int sin f^2 dth         <=  1/2 int sin^-1 ((sin f)_th)^2 dth

    with the grid's own quadrature and reports the worst LHS/RHS ratios.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    r = grid.r_nodes[grid.i_one :]
    s = np.log(r)
    x = s / s[-1]
    dr = np.diff(r)
    r_mid = np.sqrt(r[:-1] * r[1:])
    h2 = max(grid.h_s, 1.0 / grid.spec.n_r_in, np.pi / grid.n_theta) ** 2

    def trap(y, xs):
        return float(np.sum(0.5 * (y[:-1] + y[1:]) * np.diff(xs)))

    ratios = {"hardy_r2": [], "hardy_weighted": [], "angular": []}
    K1 = gauge_stiffness_angular(grid)
    w_s = grid.w_sphere
    th = grid.theta_nodes
    for k in range(samples):
        f = _random_radial_profile(rng, x)
        if k == 0:
            f = (r - 1.0) * np.exp(-r) * (1.0 - (r / r[-1]) ** 2)
        lhs = trap(f**2 / r**2, r)
        rhs = 4.0 * float(np.sum(np.diff(f) ** 2 / dr))
        ratios["hardy_r2"].append(lhs / rhs if rhs > 0 else 0.0)
        lhs = trap(f**2, r)
        rhs = 4.0 * float(np.sum(r_mid**2 * np.diff(f) ** 2 / dr))
        ratios["hardy_weighted"].append(lhs / rhs if rhs > 0 else 0.0)

        coeffs = rng.normal(size=4) / np.arange(1, 5) ** 2
        fa = sum(c * np.sin((m + 1) * th) for m, c in enumerate(coeffs))
        if k == 0:
            fa = np.sin(th)
        lhs = float(np.sum(w_s * fa**2))
        rhs = 0.5 * float(fa @ (K1 @ fa))
        ratios["angular"].append(lhs / rhs if rhs > 0 else 0.0)

    worst = {key: float(max(v)) for key, v in ratios.items()}
    slack = 5.0 * h2
    return {
        "samples": samples,
        "worst_ratio": worst,
        "slack": slack,
        "passed": all(v <= 1.0 + slack for v in worst.values()),
        "sin_theta_ratio": float(ratios["angular"][0]),
    }


def gauge_stiffness_angular(grid: Grid) -> np.ndarray:
    """Dense n_theta matrix of int sin^-1 ((sin th f)_th)^2 dth (axis closure included)."""
    n_t = grid.n_theta
    dth = np.pi / n_t
    sin_c = np.sin(grid.theta_nodes)
    sin_f = np.sin(grid.theta_faces[1:-1])
    cf = 1.0 / (sin_f * dth)
    K = np.zeros((n_t, n_t))
    j = np.arange(n_t - 1)
    K[j, j] += cf * sin_c[:-1] ** 2
    K[j + 1, j + 1] += cf * sin_c[1:] ** 2
    K[j, j + 1] -= cf * sin_c[:-1] * sin_c[1:]
    K[j + 1, j] -= cf * sin_c[:-1] * sin_c[1:]
    ax = _axis_coefficient(grid)
    K[0, 0] += ax
    K[-1, -1] += ax
    return K
