"""Run configuration (INI) and the JSON solution file format."""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .electrostatics import UNIFORM, ElectricPotential
from .grid import Grid, GridSpec, build_grid
from .minimizer import EnergyBreakdown, MinimizeOptions, Solution, SolveReport

FORMAT_VERSION = 1
SEED_POLICIES = {
    "zero": "zero",
    "hessian-direction": "hessian",
    "trial-field": "trial",
    "random": "random",
    "file": None,
}


class ConfigError(ValueError):
    pass


class ChecksumError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    g: Optional[float] = None
    g_list: Optional[tuple] = None
    seed_policy: str = "hessian-direction"
    seed_file: Optional[str] = None
    rng_seed: int = 0
    out: str = "solution.json"
    workers: int = 1
    energy_rtol: float = 1e-10
    gtol: float = 1e-8
    xtol: float = 1e-8
    max_iter: int = 50000
    preconditioner: str = "operator"
    psi_tol: float = 1e-10
    g_lo: float = 3.5
    g_hi: float = 5.5
    steps: int = 9
    window: Optional[tuple] = None
    c_shell: float = 5.0

    def __post_init__(self):
        if self.g is not None and self.g_list is not None:
            raise ConfigError("give either g or g_list, not both")
        if self.g is not None and not self.g > 0:
            raise ConfigError(f"g must be positive, got {self.g}")
        if self.g_list is not None:
            if len(self.g_list) == 0:
                raise ConfigError("g_list is empty")
            if any(not g > 0 for g in self.g_list):
                raise ConfigError("g_list entries must be positive")
        if self.seed_policy not in SEED_POLICIES:
            raise ConfigError(f"unknown seed policy {self.seed_policy!r}; choose from {sorted(SEED_POLICIES)}")
        if self.seed_policy == "file" and not self.seed_file:
            raise ConfigError("seed_policy = file needs seed_file")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not self.g_lo < self.g_hi:
            raise ConfigError(f"stability range needs g_lo < g_hi, got [{self.g_lo}, {self.g_hi}]")
        if self.steps < 2:
            raise ConfigError("steps must be >= 2")
        if self.preconditioner not in ("operator", "jacobi"):
            raise ConfigError(f"unknown preconditioner {self.preconditioner!r}")

    def minimize_options(self) -> MinimizeOptions:
        return MinimizeOptions(
            max_iter=self.max_iter,
            energy_rtol=self.energy_rtol,
            gtol=self.gtol,
            xtol=self.xtol,
            preconditioner=self.preconditioner,
            psi_tol=self.psi_tol,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["g_list"] = list(self.g_list) if self.g_list is not None else None
        d["window"] = list(self.window) if self.window is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        d["grid"] = GridSpec(**d["grid"])
        for key in ("g_list", "window"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


def parse_g_list(text: str) -> tuple:
    try:
        values = tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse g list {text!r}") from exc
    if not values:
        raise ConfigError("g list is empty")
    return values


_SECTIONS = {
    "grid": {"r_max": float, "n_r_in": int, "n_r_out": int, "n_theta": int},
    "run": {
        "g": float,
        "g_list": parse_g_list,
        "seed_policy": str,
        "seed_file": str,
        "rng_seed": int,
        "out": str,
        "workers": int,
    },
    "solver": {
        "energy_rtol": float,
        "gtol": float,
        "xtol": float,
        "max_iter": int,
        "preconditioner": str,
        "psi_tol": float,
    },
    "stability": {"g_lo": float, "g_hi": float, "steps": int},
    "analysis": {"window_lo": float, "window_hi": float, "c_shell": float},
}


def load_config(path=None, **overrides) -> RunConfig:
    """Read an INI file (optional) and apply keyword overrides (None values ignored)."""
    values: dict = {}
    grid_values: dict = {}
    if path is not None:
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for section in cp.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section [{section}]")
            for key, raw in cp.items(section):
                if key not in _SECTIONS[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                if raw.strip() == "":
                    continue
                try:
                    value = _SECTIONS[section][key](raw.strip())
                except ValueError as exc:
                    raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc
                (grid_values if section == "grid" else values)[key] = value
    lo, hi = values.pop("window_lo", None), values.pop("window_hi", None)
    if (lo is None) != (hi is None):
        raise ConfigError("give both window_lo and window_hi")
    if lo is not None:
        values["window"] = (lo, hi)
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    if "g" in overrides and overrides["g"] is not None:
        values.pop("g_list", None)
    if "g_list" in overrides and overrides["g_list"] is not None:
        values.pop("g", None)
    try:
        grid = GridSpec(**grid_values)
        return RunConfig(grid=grid, **values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Solution files


def _encode_array(a: np.ndarray) -> str:
    return " ".join(format(float(x), ".17g") for x in np.asarray(a, dtype=float).ravel())


def _decode_array(text: str, shape) -> np.ndarray:
    a = np.array([float(t) for t in text.split()], dtype=float)
    return a.reshape(shape)


def _clean(obj):
    """JSON-safe copy: NaN/inf become None, numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _digest(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class SolutionFile:
    g: float
    grid_spec: GridSpec
    alpha: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    energy: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)
    asymptotics: Optional[dict] = None
    config: Optional[dict] = None
    format_version: int = FORMAT_VERSION

    @classmethod
    def from_solution(cls, sol: Solution, config: Optional[RunConfig] = None, asymptotics=None) -> "SolutionFile":
        rep = asdict(sol.report)
        rep.pop("wall_time", None)  # keeps files byte-identical across runs
        rep["energy_history"] = list(rep["energy_history"])
        return cls(
            g=float(sol.g),
            grid_spec=sol.grid.spec,
            alpha=np.array(sol.alpha, dtype=float),
            psi=np.array(sol.psi.psi, dtype=float),
            energy=sol.energy.as_dict(),
            report=rep,
            asymptotics=asymptotics.to_dict() if hasattr(asymptotics, "to_dict") else asymptotics,
            config=config.to_dict() if config is not None else None,
        )

    def payload(self) -> dict:
        grid = build_grid(self.grid_spec)
        alpha_txt, psi_txt = _encode_array(self.alpha), _encode_array(self.psi)
        body = {
            "format_version": self.format_version,
            "config": self.config,
            "g": float(self.g),
            "grid": {
                "spec": asdict(self.grid_spec),
                "r_nodes": _encode_array(grid.r_nodes),
                "theta_nodes": _encode_array(grid.theta_nodes),
            },
            "fields": {"shape": list(self.alpha.shape), "layout": "r-major", "alpha": alpha_txt, "psi": psi_txt},
            "energy": self.energy,
            "report": self.report,
            "asymptotics": self.asymptotics,
        }
        body = _clean(body)
        body["checksums"] = {
            "alpha": hashlib.sha256(alpha_txt.encode()).hexdigest(),
            "psi": hashlib.sha256(psi_txt.encode()).hexdigest(),
            "sha256": _digest(body),
        }
        return body

    def dumps(self) -> str:
        return json.dumps(self.payload(), indent=1, sort_keys=True, allow_nan=False) + "\n"

    def save(self, path) -> str:
        text = self.dumps()
        Path(path).write_text(text)
        return json.loads(text)["checksums"]["sha256"]

    @classmethod
    def loads(cls, text: str) -> "SolutionFile":
        try:
            body = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ChecksumError(f"not a solution file: {exc}") from exc
        if body.get("format_version") != FORMAT_VERSION:
            raise ChecksumError(f"unsupported format_version {body.get('format_version')!r}")
        sums = body.pop("checksums", None)
        if not sums or _digest(body) != sums.get("sha256"):
            raise ChecksumError("checksum mismatch: file was modified or truncated")
        f = body["fields"]
        for key in ("alpha", "psi"):
            if hashlib.sha256(f[key].encode()).hexdigest() != sums.get(key):
                raise ChecksumError(f"checksum mismatch in {key}")
        shape = tuple(f["shape"])
        spec = GridSpec(**body["grid"]["spec"])
        return cls(
            g=body["g"],
            grid_spec=spec,
            alpha=_decode_array(f["alpha"], shape),
            psi=_decode_array(f["psi"], shape),
            energy=body["energy"],
            report=body["report"],
            asymptotics=body["asymptotics"],
            config=body["config"],
            format_version=body["format_version"],
        )

    @classmethod
    def load(cls, path) -> "SolutionFile":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ChecksumError(f"cannot read {path}: {exc}") from exc
        return cls.loads(text)

    def to_solution(self, grid: Optional[Grid] = None) -> Solution:
        grid = grid or build_grid(self.grid_spec)
        psi = ElectricPotential(psi=self.psi, residual_norm=float("nan"), alpha=self.alpha, charge=UNIFORM)
        rep = dict(self.report)
        rep["energy_history"] = tuple(rep["energy_history"])
        rep["final_step_norm"] = rep.get("final_step_norm") if rep.get("final_step_norm") is not None else float("nan")
        report = SolveReport(wall_time=float("nan"), **rep)
        energy = EnergyBreakdown(**{k: self.energy[k] for k in (f.name for f in fields(EnergyBreakdown))})
        return Solution(alpha=self.alpha, psi=psi, energy=energy, g=self.g, report=report, grid=grid)
