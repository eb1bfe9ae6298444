import csv
import io
import json

import numpy as np
import pytest

from su2statics import cli
from su2statics.grid import GridSpec
from su2statics.io import ChecksumError, ConfigError, RunConfig, SolutionFile, load_config, parse_g_list
from su2statics.minimizer import coulomb_energy

SMALL = GridSpec(r_max=32, n_r_in=12, n_r_out=48, n_theta=16)


def write_ini(path, text):
    path.write_text(text)
    return str(path)


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


# ---------------------------------------------------------------------------
# configuration


def test_config_file(tmp_path):
    ini = write_ini(
        tmp_path / "run.ini",
        "[grid]\nr_max = 64\nn_theta = 24\n\n[run]\ng = 12.5   # coupling\nseed_policy = random\nrng_seed = 7\n"
        "\n[solver]\ngtol = 1e-7\n\n[analysis]\nwindow_lo = 8\nwindow_hi = 16\n",
    )
    cfg = load_config(ini)
    assert cfg.grid == GridSpec(r_max=64, n_theta=24)
    assert cfg.g == 12.5 and cfg.seed_policy == "random" and cfg.rng_seed == 7
    assert cfg.window == (8.0, 16.0)
    assert cfg.minimize_options().gtol == 1e-7
    # command-line style overrides win, and g replaces g_list
    assert load_config(ini, g_list=(1.0, 2.0)).g is None
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize(
    "text",
    [
        "[grid]\nr_max = -3\n",
        "[run]\ng = abc\n",
        "[run]\nseed_policy = lucky\n",
        "[run]\nseed_policy = file\n",
        "[mystery]\nx = 1\n",
        "[run]\ncolour = red\n",
        "[stability]\ng_lo = 5\ng_hi = 4\n",
        "[analysis]\nwindow_lo = 4\n",
        "not an ini file",
    ],
)
def test_config_errors(tmp_path, text):
    ini = write_ini(tmp_path / "bad.ini", text)
    with pytest.raises(ConfigError):
        load_config(ini)
    assert cli.main(["solve", "--config", ini]) == 2


def test_g_list_parsing():
    assert parse_g_list("10, 20;40") == (10.0, 20.0, 40.0)
    for bad in ("", " , ", "1,x"):
        with pytest.raises(ConfigError):
            parse_g_list(bad)
    with pytest.raises(ConfigError):
        RunConfig(g=1.0, g_list=(2.0,))


def test_missing_config_file(tmp_path):
    assert cli.main(["solve", "--config", str(tmp_path / "nope.ini"), "--g", "1"]) == 2
    assert cli.main(["frobnicate"]) == 2


# ---------------------------------------------------------------------------
# solution files


@pytest.fixture(scope="module")
def solved_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("sol") / "g20.json"
    assert cli.main(["solve", "--g", "20", "--out", str(path)]) == 0
    return path


def test_solve_summary_coulomb(tmp_path, capsys):
    path = tmp_path / "g1.json"
    assert cli.main(["solve", "--g", "1", "--seed-policy", "zero", "--out", str(path)]) == 0
    out = capsys.readouterr().out
    total = float(next(l for l in out.splitlines() if "total energy" in l).split()[-1])
    magnetic = float(next(l for l in out.splitlines() if "magnetic" in l).split()[-1])
    assert total == pytest.approx(coulomb_energy(1.0), rel=5e-3)
    assert total == pytest.approx(0.0477, abs=1e-4)
    assert magnetic == 0.0


def test_round_trip_byte_identical(solved_file, tmp_path):
    sf = SolutionFile.load(solved_file)
    again = tmp_path / "again.json"
    sf.save(again)
    assert again.read_bytes() == solved_file.read_bytes()
    sol = sf.to_solution()
    assert np.array_equal(sol.alpha, sf.alpha)
    assert sol.energy.total == sf.energy["total"]
    assert SolutionFile.from_solution(sol, RunConfig.from_dict(sf.config), sf.asymptotics).dumps() == sf.dumps()


def test_repeated_runs_identical(tmp_path):
    paths = [tmp_path / f"run{i}.json" for i in range(2)]
    for p in paths:
        assert cli.main(["solve", "--g", "6", "--seed-policy", "random", "--rng-seed", "3", "--out", str(p)]) == 0
    a, b = (json.loads(p.read_text())["checksums"] for p in paths)
    assert a == b
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_file_layout(solved_file):
    body = json.loads(solved_file.read_text())
    f = body["fields"]
    assert f["layout"] == "r-major"
    n_r, n_t = f["shape"]
    assert len(f["alpha"].split()) == n_r * n_t
    assert body["grid"]["spec"] == {"r_max": 128.0, "n_r_in": 32, "n_r_out": 256, "n_theta": 48}
    assert body["asymptotics"]["p0_fit"] > 0.9


def test_verify_fresh_file(solved_file):
    ok, checks = cli.cmd_verify(str(solved_file))
    assert ok, [c.line() for c in checks]
    assert cli.main(["verify", str(solved_file)]) == 0


def test_verify_coulomb_file(tmp_path):
    path = tmp_path / "c.json"
    assert cli.main(["solve", "--g", "2", "--seed-policy", "zero", "--out", str(path)]) == 0
    ok, checks = cli.cmd_verify(str(path))
    assert ok
    virial = next(c for c in checks if c.name == "magnetic=interaction")
    assert virial.residual == 0.0


def test_verify_detects_corrupted_alpha(solved_file, tmp_path):
    sf = SolutionFile.load(solved_file)
    grid_r = np.linspace(0, 1, sf.alpha.shape[0])
    band = (grid_r > 0.2) & (grid_r < 0.4)
    sf.alpha = sf.alpha.copy()
    sf.alpha[band] *= 2.0
    bad = tmp_path / "corrupt.json"
    sf.save(bad)
    ok, checks = cli.cmd_verify(str(bad))
    assert not ok
    assert not next(c for c in checks if c.name == "magnetic=interaction").passed
    assert cli.main(["verify", str(bad)]) == 4


def test_checksum_mismatch_is_hard_failure(solved_file, tmp_path):
    text = solved_file.read_text()
    body = json.loads(text)
    values = body["fields"]["alpha"].split()
    values[5000] = "0.5"
    body["fields"]["alpha"] = " ".join(values)
    bad = tmp_path / "edited.json"
    bad.write_text(json.dumps(body))
    with pytest.raises(ChecksumError):
        SolutionFile.load(bad)
    assert cli.main(["verify", str(bad)]) == 4
    (tmp_path / "junk.json").write_text("{")
    assert cli.main(["verify", str(tmp_path / "junk.json")]) == 4


def test_seed_from_file(solved_file, tmp_path):
    ini = write_ini(tmp_path / "s.ini", f"[run]\ng = 20\nseed_policy = file\nseed_file = {solved_file}\n")
    sf = cli.cmd_solve(load_config(ini), str(tmp_path / "warm.json"))
    assert sf.report["iterations"] <= 2
    ini2 = write_ini(tmp_path / "s2.ini", f"[grid]\nr_max = 64\n[run]\ng = 20\nseed_policy = file\nseed_file = {solved_file}\n")
    assert cli.main(["solve", "--config", ini2]) == 2


# ---------------------------------------------------------------------------
# sweep


def test_sweep_subcritical(tmp_path):
    out = tmp_path / "sub.csv"
    assert cli.main(["sweep", "--g-list", "1,2,3", "--out", str(out)]) == 0
    rows = read_csv(out.read_text())
    assert list(rows[0]) == cli.SWEEP_COLUMNS
    for row in rows:
        g = float(row["g"])
        # the Coulomb excess is g / (8 pi), not zero
        assert float(row["excess"]) == pytest.approx(g / (8 * np.pi), rel=5e-3)
        assert float(row["E_magnetic"]) < 1e-12
        assert row["p0_fit"] == "" and row["status"] == "ok"


def test_sweep_supercritical_band():
    cfg = load_config(g_list=(10.0, 20.0, 40.0))
    rows = cli.cmd_sweep(cfg, out=None)
    excess = np.array([r["excess"] for r in rows])
    assert np.all(excess > 0)
    assert excess.max() / excess.min() <= 4
    assert all(r["status"] == "ok" for r in rows)
    e0 = [r["e0"] for r in rows]
    assert e0[0] > e0[1] > e0[2] > 0


def test_sweep_parallel_matches_serial(tmp_path):
    ini = write_ini(tmp_path / "p.ini", "[grid]\nr_max = 32\nn_r_in = 12\nn_r_out = 48\nn_theta = 16\n")
    a = cli.cmd_sweep(load_config(ini, g_list=(6.0, 8.0), workers=1))
    b = cli.cmd_sweep(load_config(ini, g_list=(6.0, 8.0), workers=2))
    for ra, rb in zip(a, b):
        assert ra["E_total"] == pytest.approx(rb["E_total"], rel=1e-8)


def test_sweep_usage_errors():
    assert cli.main(["sweep"]) == 2
    assert cli.main(["sweep", "--g-list", ""]) == 2
    assert cli.main(["sweep", "--g-list", " , "]) == 2


# ---------------------------------------------------------------------------
# stability, plotdata, coulomb


def test_stability_csv(tmp_path):
    out = tmp_path / "stab.csv"
    assert cli.main(["stability", "--out", str(out)]) == 0
    rows = read_csv(out.read_text())
    assert len(rows) == 9
    g0 = float(rows[0]["g0_estimate"])
    assert abs(g0 - 4.3416) / 4.3416 < 0.05
    lam = [float(r["lambda_min"]) for r in rows]
    assert lam[0] > 0 > lam[-1]


def test_stability_no_crossing_and_errors(tmp_path, capsys):
    ini = write_ini(tmp_path / "lo.ini", "[grid]\nn_r_in = 8\nn_r_out = 56\nn_theta = 16\n[stability]\ng_lo = 1\ng_hi = 2\nsteps = 4\n")
    assert cli.main(["stability", "--config", ini]) == 0
    out = capsys.readouterr()
    assert "no crossing" in out.out and "no crossing" in out.err
    bad = write_ini(tmp_path / "bad.ini", "[stability]\ng_lo = 5.5\ng_hi = 3.5\n")
    assert cli.main(["stability", "--config", bad]) == 2


def test_plotdata_kinds(solved_file, tmp_path):
    for kind in cli.PLOT_KINDS:
        out = tmp_path / f"{kind}.dat"
        assert cli.main(["plotdata", str(solved_file), kind, "--out", str(out)]) == 0
        data = np.loadtxt(out)
        assert data.ndim == 2 and data.shape[0] > 10
    assert cli.main(["plotdata", str(solved_file), "spectrum"]) == 2


def test_plotdata_shapes(solved_file, tmp_path):
    sf = SolutionFile.load(solved_file)
    prof = np.loadtxt(io.StringIO(cli.plot_table(sf, "theta-profile", 10.0)))
    assert np.max(np.abs(prof[:, 1] - prof[:, 2])) < 0.02 * np.max(prof[:, 1])
    tail = np.loadtxt(io.StringIO(cli.plot_table(sf, "alpha-tail")))
    keep = (tail[:, 0] >= 16) & (tail[:, 0] <= 32)
    slope = np.polyfit(np.log(tail[keep, 0]), np.log(tail[keep, 1]), 1)[0]
    assert slope == pytest.approx(-sf.asymptotics["p0_fit_raw"], abs=1e-2)


def test_plotdata_coulomb_tail(tmp_path):
    path = tmp_path / "c.json"
    assert cli.main(["solve", "--g", "1", "--seed-policy", "zero", "--out", str(path)]) == 0
    tail = np.loadtxt(io.StringIO(cli.plot_table(SolutionFile.load(path), "psi-tail")))
    assert np.allclose(tail[:, 1], 1 / (4 * np.pi), rtol=1e-8)


def test_coulomb_command(capsys):
    assert cli.main(["coulomb", "--g", "2"]) == 0
    nums = cli.coulomb_numbers(2.0)
    assert nums["energy"] == pytest.approx(nums["electric_inside"] + nums["electric_outside"])
    assert nums["stable"]
    assert "instability_threshold" in capsys.readouterr().out
    assert cli.main(["coulomb", "--g", "-1"]) == 2
