import numpy as np
import pytest

from su2statics.electrostatics import SolverError, solve_psi
from su2statics.minimizer import (
    MinimizeOptions,
    ball_energy_floor,
    continuation_sweep,
    coulomb_energy,
    gradient_norm,
    hessian_direction,
    minimize,
    random_seed,
    reduced_energy,
    reduced_gradient,
    trial_alpha,
)


def directional_fd(alpha, d, g, grid, h=1e-3):
    """Richardson-extrapolated central difference of the reduced energy."""

    def e(t):
        return reduced_energy(alpha + t * d, g, grid, tol=1e-12).total

    c1 = (e(h) - e(-h)) / (2 * h)
    c2 = (e(h / 2) - e(-h / 2)) / h
    return (4 * c2 - c1) / 3


def test_coulomb_energy_value():
    assert coulomb_energy(1.0) == pytest.approx(3 / (20 * np.pi), rel=1e-15)
    assert ball_energy_floor(2.0) == pytest.approx(4 / (40 * np.pi), rel=1e-15)


def test_energy_scaling_and_symmetry(grid, rng):
    a = random_seed(grid, rng, amplitude=3.0)
    e1, e2 = reduced_energy(a, 1.0, grid), reduced_energy(a, 2.0, grid)
    # magnetic part scales like g^-2, electric like g^2
    assert e2.magnetic == pytest.approx(e1.magnetic / 4, rel=1e-12)
    assert e2.electric == pytest.approx(4 * e1.electric, rel=1e-12)
    assert reduced_energy(-a, 1.5, grid).total == pytest.approx(reduced_energy(a, 1.5, grid).total, rel=1e-13)
    assert reduced_energy(grid.zeros(), 3.0, grid).total == pytest.approx(coulomb_energy(3.0), rel=5e-4)


def test_gradient_vanishes_at_coulomb(grid):
    psi = solve_psi(grid.zeros(), grid)
    assert gradient_norm(grid.zeros(), psi, 7.0, grid) == 0.0


@pytest.mark.parametrize("g", [5.0, 10.0, 20.0])
def test_gradient_matches_finite_differences(g, grid):
    rng = np.random.default_rng(int(g))
    worst = 0.0
    for _ in range(4):
        a = random_seed(grid, rng, amplitude=np.sqrt(g))
        d = random_seed(grid, rng)
        G = reduced_gradient(a, solve_psi(a, grid, tol=1e-12), g, grid)
        exact = float(np.sum(grid.w_vol * G * d))
        fd = directional_fd(a, d, g, grid)
        worst = max(worst, abs(fd - exact) / abs(exact))
    assert np.isfinite(worst)
    assert worst < 1e-6


def test_gradient_zero_on_ball(grid, rng):
    a = random_seed(grid, rng)
    G = reduced_gradient(a, solve_psi(a, grid), 5.0, grid)
    assert np.all(G[grid.r_nodes <= 1.0] == 0)
    assert np.all(G[-1] == 0)


def test_rejects_bad_input(grid):
    with pytest.raises(ValueError):
        minimize(0.0, grid)
    with pytest.raises(ValueError):
        minimize(5.0, grid, init="banana")
    with pytest.raises(ValueError):
        minimize(5.0, grid, init=np.ones(grid.shape))


def test_iteration_cap_raises_with_payload(grid):
    with pytest.raises(SolverError) as info:
        minimize(20.0, grid, opts=MinimizeOptions(max_iter=3))
    sol = info.value.payload
    assert sol is not None and not sol.report.converged
    assert sol.energy.total < coulomb_energy(20.0)


@pytest.mark.parametrize("g", [2.0, 3.0, 4.0])
def test_subcritical_collapse(g, solve):
    sol = solve(g)
    assert sol.report.converged
    assert np.max(np.abs(sol.alpha)) < 1e-6
    assert sol.energy.total == pytest.approx(coulomb_energy(g), rel=5e-3)


@pytest.mark.parametrize("g", [5.0, 6.0, 10.0, 20.0])
def test_supercritical_branch(g, solve):
    sol = solve(g)
    assert sol.report.converged
    assert not sol.is_coulomb
    assert sol.energy.interaction > 0
    assert sol.energy.total < coulomb_energy(g)
    hist = np.array(sol.report.energy_history)
    assert np.all(np.diff(hist) <= 0)


@pytest.mark.parametrize("g", [10.0, 20.0])
def test_positivity_floor(g, solve, grid):
    """alpha >= c r^-2 (r - 1) sin(theta) away from the outer boundary."""
    sol = solve(g)
    m = (grid.r > 1) & (grid.r <= grid.r_max / 4)
    ratio = sol.alpha[m] / (grid.r[m] ** -2 * (grid.r[m] - 1) * np.sin(grid.theta[m]))
    assert ratio.min() > 0


@pytest.mark.parametrize("g", [10.0, 20.0, 40.0])
def test_trial_upper_bound(g, solve, grid):
    """Trial energy sits above the minimiser and within C g of the ball floor."""
    e_trial = reduced_energy(trial_alpha(g, grid), g, grid).total
    assert e_trial >= solve(g).energy.total
    assert e_trial <= ball_energy_floor(g) + 10.0 * g


def test_trial_alpha_validation(grid):
    assert np.all(trial_alpha(5.0, grid, lam=0.0) == 0)
    with pytest.raises(ValueError):
        trial_alpha(5.0, grid, lam=0.5)
    with pytest.raises(ValueError):
        trial_alpha(5.0, grid, eps=0.7)


def test_warm_start_matches_cold(grid, solve):
    cold = solve(20.0)
    warm = minimize(20.0, grid, init=solve(10.0).alpha)
    assert warm.energy.total == pytest.approx(cold.energy.total, rel=1e-8)
    assert np.max(np.abs(warm.alpha - cold.alpha)) < 1e-4 * np.max(cold.alpha)


def test_hessian_direction_shape(grid):
    b = hessian_direction(grid)
    assert grid.is_outside_only(b)
    assert np.all(b >= 0)
    assert np.all(b[grid.r_nodes >= grid.r_max / 2] == 0)


def test_sweep_crosses_threshold(grid):
    res = continuation_sweep([3.0, 4.0, 6.0], grid)
    assert not res.failures
    coul = [s.is_coulomb for s in res.solutions]
    assert coul == [True, True, False]
    with pytest.raises(ValueError):
        continuation_sweep([], grid)
    with pytest.raises(ValueError):
        continuation_sweep([4.0, 3.0], grid)
