"""Scenario configuration: loading, name resolution and the explicit echo form.

Configs are TOML (or JSON, chosen by file suffix).  Every named preset is
expanded so that ``resolve(...).to_dict()`` is itself a valid config that
reproduces the same run.
"""
from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .markov import ClosedSet, SystemModel, closed_set_xy, closed_set_zi, spin_boson
from .nonmarkov import BathCorrelation, flat_bath
from .operators import I2, SM, SP, SX, SY, SZ, as_operator, density, validate_density_matrix


class ConfigError(ValueError):
    """Raised for unparsable or unresolvable configuration content."""


OPERATOR_NAMES = {
    "sigma_x": SX, "sigma_y": SY, "sigma_z": SZ,
    "sigma_p": SP, "sigma_m": SM, "identity": I2,
}
TIME_PLACEHOLDER = "t"


def load_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text.decode("utf-8"))
        return tomllib.loads(text.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc


def _number(x, what: str) -> complex:
    if isinstance(x, bool):
        raise ConfigError(f"{what}: booleans are not numbers")
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, (list, tuple)) and len(x) == 2 and all(isinstance(v, (int, float)) for v in x):
        return complex(x[0], x[1])
    raise ConfigError(f"{what}: expected a number or [re, im], got {x!r}")


def parse_matrix(raw, what: str) -> np.ndarray:
    if not isinstance(raw, list) or not raw or not all(isinstance(r, list) for r in raw):
        raise ConfigError(f"{what}: expected a list of rows")
    rows = [[_number(v, what) for v in r] for r in raw]
    if any(len(r) != len(rows) for r in rows):
        raise ConfigError(f"{what}: matrix must be square")
    try:
        return as_operator(np.array(rows, dtype=complex), what)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def matrix_to_json(a) -> list:
    a = np.asarray(a, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in a]


def parse_operator(raw, what: str = "operator") -> np.ndarray:
    if isinstance(raw, str):
        if raw not in OPERATOR_NAMES:
            raise ConfigError(f"{what}: unknown operator name {raw!r}")
        return OPERATOR_NAMES[raw].copy()
    return parse_matrix(raw, what)


def parse_rho(raw) -> np.ndarray:
    if isinstance(raw, str):
        try:
            return density(raw)
        except KeyError as exc:
            raise ConfigError(f"rho_s: unknown preset {raw!r}") from exc
    rho = parse_matrix(raw, "rho_s")
    try:
        return validate_density_matrix(rho)
    except ValueError as exc:
        raise ConfigError(f"rho_s: {exc}") from exc


def _float(x, what: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{what}: expected a real number, got {x!r}")
    if not math.isfinite(x):
        raise ConfigError(f"{what}: must be finite")
    return float(x)


def parse_grid(raw) -> list:
    if raw is None:
        return []
    if isinstance(raw, dict):
        try:
            start, stop, count = raw["start"], raw["stop"], raw["count"]
        except KeyError as exc:
            raise ConfigError(f"grid: missing key {exc.args[0]!r}") from exc
    elif isinstance(raw, list) and len(raw) == 3:
        start, stop, count = raw
    else:
        raise ConfigError("grid: expected {start, stop, count}")
    start, stop = _float(start, "grid.start"), _float(stop, "grid.stop")
    if isinstance(count, bool) or not isinstance(count, int) or count < 1:
        raise ConfigError("grid.count must be a positive integer")
    if count == 1:
        return [start]
    return [float(x) for x in np.linspace(start, stop, count)]


@dataclass
class Scenario:
    model: SystemModel
    ops: list
    op_raw: list
    times: list
    grid: list
    closed_set: ClosedSet | None
    closed_set_nu: ClosedSet | None
    mu: int
    nu: int
    diff_index: int | None
    rho: np.ndarray
    bath: BathCorrelation | None
    fock_cutoff: int
    h: float
    dt: float
    tolerances: dict
    sweep: dict
    raw_model: dict
    extra: dict = field(default_factory=dict)

    def times_at(self, t: float) -> list:
        return [t if x == TIME_PLACEHOLDER else x for x in self.times]

    def time_rows(self) -> list:
        if any(x == TIME_PLACEHOLDER for x in self.times):
            if not self.grid:
                raise ConfigError("times contain 't' but no grid is given")
            return list(self.grid)
        return [None]

    def to_dict(self) -> dict:
        """Explicit form of the resolved scenario; loading it reproduces the run."""
        out = {
            "model": {
                "omega0": self.model.omega0,
                "delta": self.model.delta,
                "gamma": self.model.gamma,
            },
            "scenario": {
                "ops": [matrix_to_json(o) for o in self.ops],
                "times": list(self.times),
                "mu": self.mu,
                "nu": self.nu,
                "rho_s": matrix_to_json(self.rho),
                "h": self.h,
                "dt": self.dt,
            },
            "tolerances": dict(sorted(self.tolerances.items())),
        }
        if self.diff_index is not None:
            out["scenario"]["diff_index"] = self.diff_index
        if self.grid:
            out["scenario"]["grid"] = {"start": self.grid[0], "stop": self.grid[-1], "count": len(self.grid)}
        for key, cs in (("closed_set", self.closed_set), ("closed_set_nu", self.closed_set_nu)):
            if cs is not None:
                out["scenario"][key] = {"ops": [matrix_to_json(o) for o in cs.ops], "m": matrix_to_json(cs.m)}
        if self.bath is not None:
            out["bath"] = {
                "modes": [[float(w), [float(g.real), float(g.imag)]] for w, g in zip(self.bath.omegas, self.bath.couplings)],
                "fock_cutoff": self.fock_cutoff,
            }
        if self.sweep:
            out["sweep"] = dict(self.sweep)
        return out


def _closed_set(raw, model: SystemModel, what: str) -> ClosedSet | None:
    if raw is None:
        return None
    if isinstance(raw, str):
        if raw == "zi":
            return closed_set_zi(model)
        if raw == "xy":
            return closed_set_xy(model)
        raise ConfigError(f"{what}: unknown preset {raw!r} (use zi or xy)")
    if not isinstance(raw, dict) or "ops" not in raw or "m" not in raw:
        raise ConfigError(f"{what}: expected a preset name or {{ops, m}}")
    ops = [parse_operator(o, f"{what}.ops") for o in raw["ops"]]
    m = parse_matrix(raw["m"], f"{what}.m")
    try:
        return ClosedSet(tuple(ops), m)
    except ValueError as exc:
        raise ConfigError(f"{what}: {exc}") from exc


def _bath(raw) -> tuple:
    if raw is None:
        return None, 2
    if not isinstance(raw, dict):
        raise ConfigError("bath: expected a table")
    cutoff = raw.get("fock_cutoff", 2)
    if isinstance(cutoff, bool) or not isinstance(cutoff, int) or cutoff < 1:
        raise ConfigError("bath.fock_cutoff must be a positive integer")
    if "modes" in raw:
        modes = raw["modes"]
        if not isinstance(modes, list):
            raise ConfigError("bath.modes: expected a list of [omega, g]")
        try:
            w = [_float(m[0], "bath.modes omega") for m in modes]
            g = [_number(m[1], "bath.modes g") for m in modes]
        except (TypeError, IndexError) as exc:
            raise ConfigError("bath.modes: expected a list of [omega, g]") from exc
        return BathCorrelation(np.array(w), np.array(g, dtype=complex)), cutoff
    if "n_modes" in raw:
        try:
            n = raw["n_modes"]
            bw = _float(raw["bandwidth"], "bath.bandwidth")
            gt = _float(raw["gamma_target"], "bath.gamma_target")
            center = _float(raw.get("center", raw.get("omega0", 1.0)), "bath.center")
        except KeyError as exc:
            raise ConfigError(f"bath: missing key {exc.args[0]!r}") from exc
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            raise ConfigError("bath.n_modes must be a positive integer")
        try:
            return flat_bath(center, bw, n, gt), cutoff
        except ValueError as exc:
            raise ConfigError(f"bath: {exc}") from exc
    raise ConfigError("bath: give either modes or (n_modes, bandwidth, gamma_target)")


def resolve(raw: dict, h_override: float | None = None) -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a table")
    model_raw = raw.get("model", {})
    sc = raw.get("scenario", {})
    if not isinstance(model_raw, dict) or not isinstance(sc, dict):
        raise ConfigError("model and scenario must be tables")
    bath, cutoff = _bath(raw.get("bath"))
    omega0 = _float(model_raw.get("omega0", 1.0), "model.omega0")
    gamma = _float(model_raw.get("gamma", 0.01), "model.gamma")
    if model_raw.get("lamb_shift_from_bath", False):
        if bath is None:
            raise ConfigError("lamb_shift_from_bath needs a bath")
        delta = bath.lamb_shift(omega0)
    else:
        delta = _float(model_raw.get("delta", 0.0), "model.delta")
    if gamma < 0:
        raise ConfigError("model.gamma must be non-negative")
    model = spin_boson(omega0, gamma, delta)

    op_raw = sc.get("ops", ["sigma_x"])
    if not isinstance(op_raw, list) or not op_raw:
        raise ConfigError("scenario.ops must be a non-empty list")
    ops = [parse_operator(o, f"scenario.ops[{n}]") for n, o in enumerate(op_raw)]
    times_raw = sc.get("times", [0.0] * len(ops))
    if not isinstance(times_raw, list):
        raise ConfigError("scenario.times must be a list")
    times = []
    for x in times_raw:
        if x == TIME_PLACEHOLDER:
            times.append(x)
            continue
        v = _float(x, "scenario.times")
        if v < 0:
            raise ConfigError("scenario.times must be non-negative")
        times.append(v)
    grid = parse_grid(sc.get("grid"))
    if any(t < 0 for t in grid):
        raise ConfigError("grid times must be non-negative")

    cset = _closed_set(sc.get("closed_set"), model, "scenario.closed_set")
    cset_nu = _closed_set(sc.get("closed_set_nu", sc.get("closed_set")), model, "scenario.closed_set_nu")
    mu = _index(sc.get("mu", 0), cset, "scenario.mu")
    nu = _index(sc.get("nu", 0), cset_nu, "scenario.nu")
    diff_index = sc.get("diff_index")
    if diff_index is not None and (isinstance(diff_index, bool) or not isinstance(diff_index, int)):
        raise ConfigError("scenario.diff_index must be an integer")
    rho = parse_rho(sc.get("rho_s", "excited"))
    h = _float(h_override if h_override is not None else sc.get("h", 1e-4), "h")
    dt = _float(sc.get("dt", 5e-3), "dt")
    if h <= 0 or dt <= 0:
        raise ConfigError("h and dt must be positive")
    tol = raw.get("tolerances", {})
    if not isinstance(tol, dict):
        raise ConfigError("tolerances must be a table")
    tolerances = {k: _float(v, f"tolerances.{k}") for k, v in tol.items()}
    sweep = raw.get("sweep", {})
    if not isinstance(sweep, dict):
        raise ConfigError("sweep must be a table")
    return Scenario(model, ops, op_raw, times, grid, cset, cset_nu, mu, nu, diff_index, rho, bath, cutoff,
                    h, dt, tolerances, dict(sweep), dict(model_raw))


def _index(raw, cset, what) -> int:
    if isinstance(raw, str):
        names = cset.names if cset is not None else ()
        if raw not in names:
            raise ConfigError(f"{what}: {raw!r} not in closed set {names}")
        return names.index(raw)
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise ConfigError(f"{what}: expected an index or name")
    if cset is not None and not 0 <= raw < len(cset):
        raise ConfigError(f"{what}: index {raw} out of range")
    return raw


__all__ = ["ConfigError", "OPERATOR_NAMES", "load_file", "parse_matrix", "parse_operator", "parse_rho",
           "parse_grid", "matrix_to_json", "Scenario", "resolve", "TIME_PLACEHOLDER"]
