"""Command line drivers: solve, sweep, stability, verify, plotdata, coulomb.

Exit codes: 0 success, 2 configuration or usage error, 3 solver failure,
4 verification failure (including a bad checksum).
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import asymptotics as asy
from .electrostatics import SolverError, alpha_moment, solve_screening
from .grid import build_grid, magnetic_density_rows
from .identities import identity_suite
from .io import SEED_POLICIES, ChecksumError, ConfigError, RunConfig, SolutionFile, load_config, parse_g_list
from .minimizer import ball_energy_floor, continuation_sweep, coulomb_energy, minimize
from .stability import SQRT_6PI, shell_concentration, threshold_scan

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4

SWEEP_COLUMNS = [
    "g",
    "E_total",
    "E_magnetic",
    "E_el_in",
    "E_el_out",
    "E_interaction",
    "excess",
    "e0",
    "p0_fit",
    "p0_formula",
    "shell_fraction",
    "sigma0",
    "iterations",
    "status",
]
PLOT_KINDS = ("psi-tail", "alpha-tail", "energy-density", "theta-profile")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".12g")


def _initial(config: RunConfig, grid):
    if config.seed_policy == "file":
        stored = SolutionFile.load(config.seed_file)
        if stored.grid_spec != grid.spec:
            raise ConfigError("seed file was computed on a different grid")
        return stored.alpha
    return SEED_POLICIES[config.seed_policy]


def analyze_solution(sol, config: RunConfig):
    """Asymptotics report for a supercritical solution, None for a Coulomb one."""
    if sol.is_coulomb:
        return None
    return asy.analyze(sol, config.window)


def energy_summary(sol) -> str:
    e = sol.energy
    g = sol.g
    lines = [
        f"g = {g:.6g}   {sol.report.message} after {sol.report.iterations} iterations",
        f"  total energy            {e.total:.12g}",
        f"  magnetic                {e.magnetic:.12g}",
        f"  electric, r <= 1        {e.electric_inside:.12g}",
        f"  electric, r >= 1        {e.electric_outside:.12g}",
        f"  |a|^2 psi^2 term        {e.interaction:.12g}",
        f"  Coulomb energy          {coulomb_energy(g):.12g}",
        f"  (E - g^2/(40 pi)) / g   {(e.total - ball_energy_floor(g)) / g:.12g}",
        f"  sup alpha               {float(np.max(np.abs(sol.alpha))):.6g}",
    ]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# solve


def cmd_solve(config: RunConfig, out: Optional[str] = None) -> SolutionFile:
    if config.g is None:
        raise ConfigError("solve needs a single g")
    grid = build_grid(config.grid)
    sol = minimize(config.g, grid, init=_initial(config, grid), opts=config.minimize_options(), rng_seed=config.rng_seed)
    report = analyze_solution(sol, config)
    sf = SolutionFile.from_solution(sol, config, report)
    path = out or config.out
    if path:
        sf.save(path)
    print(energy_summary(sol))
    return sf


# ---------------------------------------------------------------------------
# sweep


def sweep_row(sol, config: RunConfig, failed: bool = False) -> dict:
    g = sol.g
    e = sol.energy
    row = {
        "g": g,
        "E_total": e.total,
        "E_magnetic": e.magnetic,
        "E_el_in": e.electric_inside,
        "E_el_out": e.electric_outside,
        "E_interaction": e.interaction,
        "excess": (e.total - ball_energy_floor(g)) / g,
        "e0": None,
        "p0_fit": None,
        "p0_formula": None,
        "shell_fraction": None,
        "sigma0": None,
        "iterations": sol.report.iterations,
        "status": "failed" if failed else "ok",
    }
    try:
        rep = analyze_solution(sol, config)
        if rep is not None:
            row.update(e0=rep.e0, p0_fit=rep.p0_fit, p0_formula=rep.p0_formula)
        else:
            row["e0"] = asy.fit_e0(sol, config.window)
        row["shell_fraction"] = shell_concentration(sol, config.c_shell).fraction
        row["sigma0"] = solve_screening(sol.alpha, sol.grid).sigma_origin
    except (ValueError, SolverError) as exc:
        logger.warning("analysis failed at g=%g: %s", g, exc)
        row["status"] = "analysis-failed" if not failed else "failed"
    return row


def _solve_independent(args):
    g, config = args
    grid = build_grid(config.grid)
    try:
        sol = minimize(g, grid, init=_initial(config, grid), opts=config.minimize_options(), rng_seed=config.rng_seed)
        return sweep_row(sol, config)
    except SolverError as exc:
        return sweep_row(exc.payload, config, failed=True) if exc.payload is not None else {"g": g, "status": "failed"}


def cmd_sweep(config: RunConfig, out: Optional[str] = None) -> list[dict]:
    """One CSV row per coupling, ordered by g.

    With one worker the solves are chained by continuation; with several the
    couplings are solved independently from the configured seed.
    """
    if not config.g_list:
        raise ConfigError("sweep needs a non-empty g_list")
    g_list = sorted(set(float(g) for g in config.g_list))
    if config.workers == 1:
        grid = build_grid(config.grid)
        res = continuation_sweep(g_list, grid, opts=config.minimize_options())
        rows = [sweep_row(sol, config, failed=g in res.failures) for g, sol in zip(res.g_values, res.solutions)]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(_solve_independent, [(g, config) for g in g_list]))
    text = rows_to_csv(rows, SWEEP_COLUMNS)
    _emit(text, out or (config.out if config.out.endswith(".csv") else None))
    return rows


def rows_to_csv(rows: list[dict], columns: list[str]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def _emit(text: str, path: Optional[str]):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# stability


def cmd_stability(config: RunConfig, out: Optional[str] = None):
    grid = build_grid(config.grid)
    rep = threshold_scan(config.g_lo, config.g_hi, config.steps, grid)
    g0 = "no crossing" if rep.g0_estimate is None else _fmt(rep.g0_estimate)
    rows = [{"g": g, "lambda_min": lam, "g0_estimate": g0} for g, lam in rep.rows()]
    text = rows_to_csv(rows, ["g", "lambda_min", "g0_estimate"])
    _emit(text, out)
    print(f"g0_estimate: {g0}  ({rep.message})", file=sys.stderr)
    return rep


# ---------------------------------------------------------------------------
# verify


def cmd_verify(path: str):
    """Re-run the identity suite on a stored solution; returns (all_passed, checks)."""
    sf = SolutionFile.load(path)
    grid = build_grid(sf.grid_spec)
    checks = identity_suite(sf.alpha, sf.psi, sf.g, grid)
    for c in checks:
        print(c.line())
    ok = all(c.passed for c in checks)
    print("verify:", "all identities hold" if ok else "FAILED")
    return ok, checks


# ---------------------------------------------------------------------------
# plotdata


def plot_table(sf: SolutionFile, which: str, r_profile: float = 10.0) -> str:
    if which not in PLOT_KINDS:
        raise ConfigError(f"unknown plot kind {which!r}; choose from {', '.join(PLOT_KINDS)}")
    grid = build_grid(sf.grid_spec)
    r = grid.r_nodes
    out = r >= 1.0
    if which == "psi-tail":
        avg = asy.sphere_average(sf.psi, grid)
        cols, header = [r[out], (r * avg)[out]], "r  r*<psi>"
    elif which == "alpha-tail":
        f = alpha_moment(sf.alpha, grid)
        keep = out & (f > 0)
        cols, header = [r[keep], f[keep]], "r  int(alpha sin^2 theta dtheta)"
    elif which == "energy-density":
        mag = magnetic_density_rows(sf.alpha, grid) / np.diff(r) / sf.g**2
        mid = 0.5 * (r[1:] + r[:-1])
        keep = mid >= 1.0
        cols, header = [mid[keep], mag[keep]], "r  g^-2 magnetic energy per unit radius"
    else:
        i = grid.nearest_row(r_profile)
        th = grid.theta_nodes
        a = sf.alpha[i]
        scale = float(a @ (np.sin(th) * grid.w_sphere) / (np.sin(th) ** 2 @ grid.w_sphere))
        cols, header = [th, a, scale * np.sin(th)], f"theta  alpha(r={r[i]:.6g})  best c*sin(theta)"
    lines = ["# " + header]
    for row in zip(*cols):
        lines.append(" ".join(format(float(v), ".12g") for v in row))
    return "\n".join(lines) + "\n"


def cmd_plotdata(path: str, which: str, out: Optional[str] = None, r_profile: float = 10.0) -> str:
    sf = SolutionFile.load(path)
    text = plot_table(sf, which, r_profile)
    _emit(text, out)
    return text


# ---------------------------------------------------------------------------
# coulomb


def coulomb_numbers(g: float) -> dict:
    return {
        "g": g,
        "energy": coulomb_energy(g),
        "electric_inside": g**2 / (40.0 * np.pi),
        "electric_outside": g**2 / (8.0 * np.pi),
        "r_psi_tail": 1.0 / (4.0 * np.pi),
        "psi_origin": 3.0 / (8.0 * np.pi),
        "instability_threshold": SQRT_6PI,
        "stable": g < SQRT_6PI,
    }


def cmd_coulomb(g: float) -> dict:
    nums = coulomb_numbers(g)
    for k, v in nums.items():
        print(f"{k:<22s} {v}")
    return nums


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="su2statics", description="Reduced electro/magneto-static energy solver.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI configuration file")
        sp.add_argument("--g", type=float)
        sp.add_argument("--g-list", help="comma separated couplings")
        sp.add_argument("--out", help="output path")
        sp.add_argument("--workers", type=int)
        sp.add_argument("--seed-policy", choices=sorted(SEED_POLICIES))
        sp.add_argument("--rng-seed", type=int)
        sp.add_argument("-v", "--verbose", action="store_true")

    for name in ("solve", "sweep", "stability"):
        common(sub.add_parser(name))
    v = sub.add_parser("verify")
    v.add_argument("solution")
    pd = sub.add_parser("plotdata")
    pd.add_argument("solution")
    pd.add_argument("which")
    pd.add_argument("--out")
    pd.add_argument("--r", type=float, default=10.0, help="radius for theta-profile")
    c = sub.add_parser("coulomb")
    c.add_argument("--g", type=float, default=1.0)
    return p


def _config_from_args(args) -> RunConfig:
    g_list = parse_g_list(args.g_list) if args.g_list else None
    return load_config(
        args.config,
        g=args.g,
        g_list=g_list,
        workers=args.workers,
        seed_policy=args.seed_policy,
        rng_seed=args.rng_seed,
    )


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING)
    try:
        if args.command == "solve":
            cmd_solve(_config_from_args(args), args.out)
        elif args.command == "sweep":
            rows = cmd_sweep(_config_from_args(args), args.out)
            if any(r.get("status") == "failed" for r in rows):
                return EXIT_SOLVER
        elif args.command == "stability":
            cmd_stability(_config_from_args(args), args.out)
        elif args.command == "verify":
            ok, _ = cmd_verify(args.solution)
            return EXIT_OK if ok else EXIT_VERIFY
        elif args.command == "plotdata":
            cmd_plotdata(args.solution, args.which, args.out, args.r)
        elif args.command == "coulomb":
            if not args.g > 0:
                raise ConfigError("g must be positive")
            cmd_coulomb(args.g)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ChecksumError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
