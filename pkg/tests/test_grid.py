import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from su2statics.electrostatics import coulomb_psi_values
from su2statics.grid import (
    GridSpec,
    build_grid,
    gauge_mass,
    gauge_operator,
    gauge_stiffness,
    laplacian_axi,
    magnetic_density_rows,
    magnetic_form,
    origin_collapse,
    scalar_stiffness,
    validate_inequalities,
)


def test_spec_validation():
    with pytest.raises(ValueError):
        GridSpec(r_max=8)
    with pytest.raises(ValueError):
        GridSpec(n_theta=4)
    with pytest.raises(ValueError):
        GridSpec(n_r_in=16.5)
    with pytest.raises(ValueError):
        GridSpec(r_max=float("nan"))


@settings(max_examples=30, deadline=None)
@given(
    r_max=st.floats(16, 1e4),
    n_in=st.integers(8, 40),
    n_out=st.integers(8, 80),
    n_t=st.integers(8, 40),
)
def test_grid_invariants(r_max, n_in, n_out, n_t):
    g = build_grid(GridSpec(r_max, n_in, n_out, n_t))
    assert g.r_nodes[g.i_one] == 1.0
    assert np.all(np.diff(g.r_nodes) > 0)
    assert np.all((g.theta_nodes > 0) & (g.theta_nodes < np.pi))
    assert g.integrate_inside(np.ones(g.shape)) == pytest.approx(4 * np.pi / 3, rel=1e-10)
    assert g.integrate(np.ones(g.shape)) == pytest.approx(4 * np.pi / 3 * r_max**3, rel=1e-10)
    s = np.log(g.r_nodes[g.i_one :])
    assert np.allclose(np.diff(s), s[-1] / n_out)


def test_inner_spacing_uniform():
    g = build_grid(GridSpec(n_r_in=8))
    assert np.allclose(np.diff(g.r_nodes[: g.i_one + 1]), 1 / 8)


def test_unit_charge(grid):
    assert grid.integrate_inside(np.full(grid.shape, 3 / (4 * np.pi))) == pytest.approx(1.0, abs=1e-12)


def test_laplacian_harmonic(grid):
    L = laplacian_axi(1.0 / np.maximum(grid.r, 1e-300), grid)
    m = (grid.r >= 2) & (grid.r <= grid.r_max / 2)
    assert np.max(np.abs(L[m])) < 1e-10


def test_laplacian_of_coulomb(grid):
    L = laplacian_axi(coulomb_psi_values(grid.r), grid)
    rho = np.where(grid.r <= 1, 3 / (4 * np.pi), 0.0)
    away = (np.abs(grid.r - 1) > 0.1) & (grid.r < grid.r_max / 2)
    assert np.max(np.abs(L + rho)[away]) < 1e-10


@pytest.mark.parametrize(
    "f, lap",
    [
        (lambda r, t: r**2, lambda r, t: 6 + 0 * r),
        (lambda r, t: (r * np.cos(t)) ** 2, lambda r, t: 2 + 0 * r),
        (lambda r, t: np.exp(-(r**2) / 50), lambda r, t: np.exp(-(r**2) / 50) * ((r / 25) ** 2 - 6 / 50)),
    ],
)
def test_laplacian_second_order(f, lap):
    spec = GridSpec()
    errs = []
    for s in (spec, spec.refined()):
        g = build_grid(s)
        err = np.abs(laplacian_axi(f(g.r, g.theta), g) - lap(g.r, g.theta))
        errs.append(np.max(err[(g.r >= 2) & (g.r <= g.r_max / 2)]))
    order = np.log2(errs[0] / errs[1])
    assert 1.8 <= order <= 2.2


def test_operator_symmetry(grid, rng):
    sl = grid.alpha_rows
    S = origin_collapse(grid).T @ scalar_stiffness(grid, robin=False) @ origin_collapse(grid)
    assert abs(S - S.T).max() < 1e-12 * abs(S).max()
    K = gauge_stiffness(grid)
    assert abs(K - K.T).max() < 1e-12 * abs(K).max()
    # gauge operator is self-adjoint under the w_vol / r^2 weights
    m = gauge_mass(grid)
    for _ in range(5):
        a, b = grid.zeros(), grid.zeros()
        a[sl] = rng.standard_normal(a[sl].shape)
        b[sl] = rng.standard_normal(b[sl].shape)
        la, lb = gauge_operator(a, grid)[sl].ravel(), gauge_operator(b, grid)[sl].ravel()
        lhs, rhs = np.sum(m * lb * a[sl].ravel()), np.sum(m * la * b[sl].ravel())
        assert abs(lhs - rhs) < 1e-12 * max(abs(lhs), 1.0)
    # Laplacian symmetric under w_vol on interior-supported fields
    inner = (grid.r > 0.2) & (grid.r < grid.r_max / 2)
    f, h = rng.standard_normal(grid.shape) * inner, rng.standard_normal(grid.shape) * inner
    lhs = grid.integrate(f * laplacian_axi(h, grid))
    rhs = grid.integrate(h * laplacian_axi(f, grid))
    assert abs(lhs - rhs) < 1e-12 * abs(lhs)


def test_gauge_operator_regular_input(grid):
    a = grid.restrict_outside(np.sin(grid.theta) * (grid.r - 1) / np.maximum(grid.r, 1.0) ** 2)
    out = gauge_operator(a, grid)
    assert np.all(np.isfinite(out))
    assert np.max(np.abs(out[:, [0, -1]])) <= 2 * np.max(np.abs(out))


@pytest.mark.parametrize("p", [0.5, 1.0, 1.5])
@np.errstate(divide="ignore", invalid="ignore")  # r = 0 row is masked out
def test_gauge_operator_monomial(p):
    """-a_rr - r^-2 (sin^-1 (sin a)_th)_th on r^-p sin(theta) is (2 - p(p+1)) r^(-p-2) sin(theta)."""
    errs = []
    for spec in (GridSpec(), GridSpec().refined()):
        g = build_grid(spec)
        a = g.restrict_outside(g.r ** (-p) * np.sin(g.theta))
        m = (g.r >= 4) & (g.r <= g.r_max / 4)
        exact = (2 - p * (p + 1)) * g.r ** (-p - 2) * np.sin(g.theta)
        scale = np.max(np.abs(g.r ** (-p - 2) * np.sin(g.theta))[m])
        errs.append(np.max(np.abs(gauge_operator(a, g) - exact)[m]) / scale)
    assert errs[0] < 5e-3
    assert errs[1] < errs[0] / 3


def test_magnetic_density_rows_sum(grid, rng):
    a = grid.zeros()
    a[grid.alpha_rows] = rng.random(a[grid.alpha_rows].shape)
    assert magnetic_density_rows(a, grid).sum() == pytest.approx(magnetic_form(a, grid), rel=1e-12)


def test_inequality_suite(grid):
    rep = validate_inequalities(100, grid)
    assert rep["passed"], rep
    # sin(theta) is the extremal angular profile
    assert rep["sin_theta_ratio"] == pytest.approx(1.0, abs=rep["slack"])


def test_inequality_examples(grid):
    with pytest.raises(ValueError):
        validate_inequalities(0, grid)
    r = grid.r_nodes[grid.i_one :]
    f = (r - 1) * np.exp(-r)
    lhs = np.trapezoid(f**2 / r**2, r)
    rhs = 4 * np.sum(np.diff(f) ** 2 / np.diff(r))
    assert lhs <= rhs
