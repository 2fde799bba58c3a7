"""
Run configuration: a TOML file with nested sections, validated up front.

Schema (every key optional unless marked)::

    [solver]      nu*, N*, dt*, a = -2, scheme, nonlinearity, physical_points, dealias
    [forcing]     profile*, beta, q, K, n_f, modes = {"1" = 0.1, ...}
    [initial]     kind, seed, k, amplitude, K, norm, m, modes
    [[initial_set]]   extra initial data (couple / uniqueness), same keys as [initial]
    [output]      directory, cadence, observables, spectra, checkpoint
    [experiment]  mode, T, seed, burn_in_fraction, n_samples, fit_window, m, cstar,
                  eps, independent_noise, check
    [sweep]       parameter ("section.key"), values, mode

Validation collects every violation before reporting; unknown keys are
rejected so that typos never silently fall back to defaults.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .diagnostics import Observable, coefficient, default_observables, exp_energy, sobolev, sobolev_sq
from .errors import ConfigurationError
from .forcing import PROFILE_KINDS, ForcingSpec, b_profile
from .integrator import INITIAL_KINDS, SCHEMES, SolverConfig, initial_field
from .spectral import DEALIAS_RULES, Field, GridSpec, grid_violations

MODES = ("simulate", "couple", "uniqueness", "sweep")

SCHEMA: dict[str, dict[str, Any]] = {
    "solver": {"nu": None, "N": None, "dt": None, "a": -2.0, "scheme": "exp-euler-maruyama",
               "nonlinearity": True, "physical_points": None, "dealias": "two_thirds"},
    "forcing": {"profile": None, "beta": None, "q": None, "K": None, "n_f": None, "modes": None},
    "initial": {"kind": "zero", "seed": 0, "k": None, "amplitude": None, "K": None, "norm": None,
                "m": None, "modes": None},
    "output": {"directory": "out", "cadence": 10, "observables": None, "spectra": True, "checkpoint": True},
    "experiment": {"mode": "simulate", "T": 10.0, "seed": 0, "burn_in_fraction": 0.5, "n_samples": 50,
                   "fit_window": None, "m": 1, "cstar": 16.0, "eps": None, "independent_noise": True,
                   "check": False},
    "sweep": {"parameter": None, "values": None, "mode": "simulate"},
}
REQUIRED = {("solver", "nu"), ("solver", "N"), ("solver", "dt"), ("forcing", "profile")}
INITIAL_PARAMS = ("k", "amplitude", "K", "norm", "m", "modes")


@dataclass
class InitialSpec:
    kind: str
    params: dict
    seed: int

    def build(self, N: int) -> Field:
        return initial_field(self.kind, N, self.params, self.seed)


@dataclass
class RunConfig:
    solver: SolverConfig
    forcing: ForcingSpec
    initial: list[InitialSpec]
    output: dict
    experiment: dict
    sweep: dict | None
    observables: list[Observable]
    data: dict                                  # normalized, fully defaulted copy
    notes: list[str] = field(default_factory=list)

    @property
    def mode(self) -> str:
        return self.experiment["mode"]

    @property
    def seed(self) -> int:
        return int(self.experiment["seed"])

    @property
    def hash(self) -> str:
        return config_digest(self.data)

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2)


def config_digest(data: dict) -> str:
    blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def load_toml(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid TOML: {exc}") from None


def parse_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Read and validate a TOML run configuration."""
    return build_config(load_toml(path), overrides)


def _normalize_section(name: str, raw: Any, problems: list[str]) -> dict:
    defaults = SCHEMA[name]
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        problems.append(f"[{name}] must be a table")
        return dict(defaults)
    for key in raw:
        if key not in defaults:
            problems.append(f"unknown key {name}.{key} (allowed: {', '.join(defaults)})")
    out = {k: raw.get(k, v) for k, v in defaults.items()}
    return out


def _number(problems, section, key, value, kind=float, positive=False, nonneg=False):
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        problems.append(f"{section}.{key} must be a number, got {value!r}")
        return None
    if kind is int and not float(value).is_integer():
        problems.append(f"{section}.{key} must be an integer, got {value!r}")
        return None
    value = kind(value)
    if not math.isfinite(value):
        problems.append(f"{section}.{key} must be finite")
        return None
    if positive and value <= 0:
        problems.append(f"{section}.{key} must be > 0, got {value}")
    if nonneg and value < 0:
        problems.append(f"{section}.{key} must be >= 0, got {value}")
    return value


def _parse_observable(name: str, nu: float | None, B0: float | None, problems: list[str]) -> Observable | None:
    try:
        if name.startswith("exp:"):
            eps = float(name[4:])
            if nu is None or B0 is None:
                return None
            if 2 * eps * B0 > nu:
                problems.append(f"observable {name}: exponential-moment guard 2*eps*B0 <= nu violated "
                                f"(2*{eps:g}*{B0:g} = {2 * eps * B0:g} > nu = {nu:g})")
                return None
            return exp_energy(eps, nu, B0)
        if name.startswith("H") and name.endswith("_sq"):
            return sobolev_sq(int(name[1:-3]))
        if name.startswith("H"):
            return sobolev(int(name[1:]))
        if name.startswith("w"):
            k = int(name[1:])
            if k == 0:
                raise ValueError
            return coefficient(k)
    except ValueError:
        pass
    problems.append(f"unknown observable {name!r} (use H<m>, H<m>_sq, w<k>, exp:<eps>)")
    return None


def build_config(raw: dict, overrides: dict | None = None) -> RunConfig:
    """Validate a raw mapping; raises ConfigurationError listing every violation."""
    problems: list[str] = []
    notes: list[str] = []
    raw = copy.deepcopy(raw)
    sections = set(SCHEMA) | {"initial_set"}
    for key in raw:
        if key not in sections:
            problems.append(f"unknown section [{key}] (allowed: {', '.join(sorted(sections))})")
    for (sec, key), value in (overrides or {}).items():
        raw.setdefault(sec, {})[key] = value

    data = {name: _normalize_section(name, raw.get(name), problems) for name in SCHEMA}
    for sec, key in sorted(REQUIRED):
        if data[sec][key] is None:
            problems.append(f"missing required key {sec}.{key}")
    if "a" not in (raw.get("solver") or {}):
        notes.append("solver.a not given: using a = -2 (the L2-conserving case)")

    # solver
    s = data["solver"]
    nu = _number(problems, "solver", "nu", s["nu"], nonneg=True)
    N = _number(problems, "solver", "N", s["N"], int, positive=True)
    dt = _number(problems, "solver", "dt", s["dt"], positive=True)
    a = _number(problems, "solver", "a", s["a"])
    M = _number(problems, "solver", "physical_points", s["physical_points"], int, positive=True)
    if s["scheme"] not in SCHEMES:
        problems.append(f"solver.scheme must be one of {SCHEMES}, got {s['scheme']!r}")
    if s["dealias"] not in DEALIAS_RULES:
        problems.append(f"solver.dealias must be one of {DEALIAS_RULES}, got {s['dealias']!r}")
    if not isinstance(s["nonlinearity"], bool):
        problems.append("solver.nonlinearity must be a boolean")
    if nu == 0 and s["scheme"] != "deterministic-rk4":
        problems.append("solver.nu = 0 requires scheme = 'deterministic-rk4'")
    grid = None
    if N and N > 0 and s["dealias"] in DEALIAS_RULES:
        if M is not None:
            kd = (2 * N) // 3 if s["dealias"] == "two_thirds" else N
            grid_problems = grid_violations(N, M, max(kd, 1), s["dealias"])
            problems.extend(f"solver grid: {p}" for p in grid_problems)
            if not grid_problems:
                grid = GridSpec(N, M, max(kd, 1), s["dealias"])
        else:
            grid = GridSpec.for_cutoff(N, s["dealias"])
            s["physical_points"] = grid.physical_points

    # forcing
    f = data["forcing"]
    spec = None
    if f["profile"] is not None:
        if f["profile"] not in PROFILE_KINDS:
            problems.append(f"forcing.profile must be one of {PROFILE_KINDS}, got {f['profile']!r}")
        else:
            params = {k: f[k] for k in ("beta", "q", "K") if f[k] is not None}
            if f["modes"] is not None:
                if not isinstance(f["modes"], dict):
                    problems.append("forcing.modes must be a table of wavenumber = amplitude")
                else:
                    try:
                        params["modes"] = {int(k): float(v) for k, v in f["modes"].items()}
                    except (TypeError, ValueError):
                        problems.append("forcing.modes keys must be integers and values numbers")
            n_f = _number(problems, "forcing", "n_f", f["n_f"], int, positive=True)
            try:
                spec = b_profile(f["profile"], params, n_f)
            except ConfigurationError as exc:
                problems.append(f"forcing: {exc}")
    if spec is not None and s["scheme"] == "deterministic-rk4" and not spec.is_zero():
        problems.append("scheme 'deterministic-rk4' requires forcing.profile = 'zero'")

    # initial data
    initial: list[InitialSpec] = []
    blocks = [("initial", data["initial"])]
    extra = raw.get("initial_set", [])
    if not isinstance(extra, list):
        problems.append("[[initial_set]] must be an array of tables")
        extra = []
    data["initial_set"] = []
    for i, block in enumerate(extra):
        norm = _normalize_section("initial", block, problems)
        data["initial_set"].append(norm)
        blocks.append((f"initial_set[{i}]", norm))
    for label, block in blocks:
        if block["kind"] not in INITIAL_KINDS:
            problems.append(f"{label}.kind must be one of {INITIAL_KINDS}, got {block['kind']!r}")
            continue
        params = {k: block[k] for k in INITIAL_PARAMS if block[k] is not None}
        if "modes" in params:
            try:
                params["modes"] = {int(k): float(v) for k, v in params["modes"].items()}
            except (AttributeError, TypeError, ValueError):
                problems.append(f"{label}.modes must be a table of wavenumber = value")
                continue
        seed = _number(problems, label, "seed", block["seed"], int, nonneg=True) or 0
        ini = InitialSpec(block["kind"], params, seed)
        if N and N > 0:
            try:
                ini.build(N)
            except (ConfigurationError, KeyError, ValueError) as exc:
                problems.append(f"{label}: {exc}")
        initial.append(ini)

    # experiment
    e = data["experiment"]
    if e["mode"] not in MODES:
        problems.append(f"experiment.mode must be one of {MODES}, got {e['mode']!r}")
    T = _number(problems, "experiment", "T", e["T"], positive=True)
    _number(problems, "experiment", "seed", e["seed"], int, nonneg=True)
    bf = _number(problems, "experiment", "burn_in_fraction", e["burn_in_fraction"], nonneg=True)
    if bf is not None and bf >= 1:
        problems.append("experiment.burn_in_fraction must be < 1")
    _number(problems, "experiment", "n_samples", e["n_samples"], int, positive=True)
    _number(problems, "experiment", "m", e["m"], int, nonneg=True)
    _number(problems, "experiment", "cstar", e["cstar"], positive=True)
    if e["fit_window"] is not None:
        w = e["fit_window"]
        if not (isinstance(w, list) and len(w) == 2 and all(isinstance(x, (int, float)) for x in w) and w[0] < w[1]):
            problems.append("experiment.fit_window must be [t_start, t_end] with t_start < t_end")
        elif T is not None and w[1] > T:
            problems.append(f"experiment.fit_window end {w[1]} exceeds T={T}")
    eps = _number(problems, "experiment", "eps", e["eps"], positive=True)
    B0 = spec.B0 if spec is not None else None
    if eps is not None and nu is not None and B0 is not None and 2 * eps * B0 > nu:
        problems.append(f"experiment.eps: exponential-moment guard 2*eps*B0 <= nu violated "
                        f"(2*{eps:g}*{B0:g} = {2 * eps * B0:g} > nu = {nu:g})")
    if e["mode"] == "couple" and len(initial) < 2:
        problems.append("couple mode needs a second initial datum in [[initial_set]]")
    if e["mode"] == "uniqueness" and len(initial) < 2:
        problems.append("uniqueness mode needs at least one [[initial_set]] entry besides [initial]")

    # output
    o = data["output"]
    _number(problems, "output", "cadence", o["cadence"], int, positive=True)
    names = o["observables"]
    if names is None:
        names = [ob.name for ob in default_observables()]
        o["observables"] = names
    observables = []
    if not isinstance(names, list):
        problems.append("output.observables must be a list of names")
    else:
        for name in names:
            ob = _parse_observable(str(name), nu, B0, problems)
            if ob is not None:
                observables.append(ob)

    # sweep
    sw = data["sweep"]
    sweep = None
    if e["mode"] == "sweep":
        par, values = sw["parameter"], sw["values"]
        if not (isinstance(par, str) and par.count(".") == 1 and par.split(".")[0] in SCHEMA
                and par.split(".")[1] in SCHEMA.get(par.split(".")[0], {})):
            problems.append(f"sweep.parameter must be 'section.key' naming a known key, got {par!r}")
        if not (isinstance(values, list) and values):
            problems.append("sweep.values must be a non-empty list")
        if sw["mode"] not in ("simulate", "couple", "uniqueness"):
            problems.append("sweep.mode must be simulate, couple or uniqueness")
        sweep = sw
    elif raw.get("sweep"):
        notes.append("[sweep] ignored because experiment.mode != 'sweep'")

    solver = None
    if not problems:
        try:
            solver = SolverConfig(nu, N, dt, a, s["scheme"], grid, s["nonlinearity"])
        except ConfigurationError as exc:
            problems.extend(exc.violations or [str(exc)])
    if problems:
        raise ConfigurationError(f"{len(problems)} configuration violation(s):\n  " + "\n  ".join(problems),
                                 problems)
    data["version"] = __version__
    return RunConfig(solver, spec, initial, o, e, sweep, observables, data, notes)


def sweep_points(cfg: RunConfig) -> list[tuple[Any, RunConfig]]:
    """One validated sub-config per sweep value."""
    sec, key = cfg.sweep["parameter"].split(".")
    points = []
    for value in cfg.sweep["values"]:
        raw = {k: copy.deepcopy(v) for k, v in cfg.data.items() if k in SCHEMA and k != "sweep"}
        raw["initial_set"] = copy.deepcopy(cfg.data.get("initial_set", []))
        raw[sec][key] = value
        raw["experiment"]["mode"] = cfg.sweep["mode"]
        points.append((value, build_config(raw)))
    return points
