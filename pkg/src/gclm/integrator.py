"""
Time stepping for the Galerkin-truncated stochastic gCLMG equation

    d omega = (nu omega_xx + u_x omega - a u omega_x) dt + d xi,   u_x = H(omega).

Schemes
-------
``exp-euler-maruyama`` (default)
    omega_k <- e^{-nu k^2 dt} omega_k + phi1(-nu k^2 dt) dt B_a(omega)_k + eta_k,
    where eta_k is the exact stochastic-convolution increment over dt.
``imex-euler``
    implicit diffusion, explicit nonlinearity, plain Brownian increments.
``deterministic-rk4``
    classical RK4 on the full right-hand side; forcing must vanish.

The state of one trajectory is a Markov chain in (omega, stream counter); all
batching (ensembles, coupled pairs) happens along leading array axes.
"""

from __future__ import annotations

import collections
import hashlib
import json
import logging
import math
import struct
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import BlowUpError, ConfigurationError
from .forcing import ForcingSpec, NoiseStream, heat_decay, ou_noise_std
from .spectral import (
    Field,
    GridSpec,
    field_from_bytes,
    field_nbytes,
    field_to_bytes,
    grid_violations,
    nonlinear_term_coeffs,
    resize,
    sobolev_norm_sq,
    wavenumbers,
)

log = logging.getLogger(__name__)

SCHEMES = ("exp-euler-maruyama", "imex-euler", "deterministic-rk4")
BLOWUP_L2 = 1e12
IMEX_GUARD = 1.0


def phi1(z: np.ndarray) -> np.ndarray:
    """(e^z - 1) / z with phi1(0) = 1."""
    z = np.asarray(z, dtype=np.float64)
    safe = np.where(z != 0, z, 1.0)
    return np.where(z != 0, np.expm1(safe) / safe, 1.0)


@dataclass(frozen=True)
class SolverConfig:
    nu: float
    N: int
    dt: float
    a: float = -2.0
    scheme: str = "exp-euler-maruyama"
    grid: GridSpec | None = None
    nonlinearity: bool = True

    def __post_init__(self):
        problems = solver_violations(self)
        if problems:
            raise ConfigurationError("; ".join(problems), problems)
        if self.grid is None:
            object.__setattr__(self, "grid", GridSpec.for_cutoff(self.N))
        if self.scheme == "imex-euler" and self.dt * self.nu * self.N ** 2 > IMEX_GUARD:
            warnings.warn(
                f"imex-euler with dt*nu*N^2 = {self.dt * self.nu * self.N ** 2:.3g} > {IMEX_GUARD}: "
                "high modes are strongly over-damped per step",
                stacklevel=2,
            )

    def with_(self, **changes) -> "SolverConfig":
        if "N" in changes and "grid" not in changes:
            rule = self.grid.rule if self.grid is not None else "two_thirds"
            changes["grid"] = GridSpec.for_cutoff(changes["N"], rule)
        return replace(self, **changes)

    def to_dict(self) -> dict:
        g = self.grid
        return {
            "nu": self.nu, "a": self.a, "N": self.N, "dt": self.dt, "scheme": self.scheme,
            "nonlinearity": self.nonlinearity,
            "grid": {"physical_points": g.physical_points, "dealias_cutoff": g.dealias_cutoff, "rule": g.rule},
        }


def solver_violations(cfg: SolverConfig) -> list[str]:
    problems = []
    if not (isinstance(cfg.N, (int, np.integer)) and cfg.N >= 1):
        problems.append(f"N must be a positive integer, got {cfg.N!r}")
    if not (cfg.nu >= 0 and math.isfinite(cfg.nu)):
        problems.append(f"nu must be finite and >= 0, got {cfg.nu}")
    if cfg.nu == 0 and cfg.scheme != "deterministic-rk4":
        problems.append("nu = 0 is only supported by the deterministic-rk4 scheme")
    if not (cfg.dt > 0 and math.isfinite(cfg.dt)):
        problems.append(f"dt must be positive, got {cfg.dt}")
    if not math.isfinite(cfg.a):
        problems.append("a must be finite")
    if cfg.scheme not in SCHEMES:
        problems.append(f"scheme must be one of {SCHEMES}, got {cfg.scheme!r}")
    if cfg.grid is not None:
        if cfg.N > cfg.grid.cutoff:
            problems.append(f"N={cfg.N} exceeds grid cutoff {cfg.grid.cutoff}")
    return problems


def config_hash(cfg: SolverConfig, spec: ForcingSpec) -> str:
    payload = {
        "solver": cfg.to_dict(),
        "forcing": {"profile": spec.profile, "b": [float(x) for x in spec.b]},
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


# --------------------------------------------------------------------------
# Stepper
# --------------------------------------------------------------------------

class Stepper:
    """Per-(config, forcing) cache of mode multipliers.

    ``advance`` works on raw coefficient arrays with any leading batch shape.
    """

    def __init__(self, cfg: SolverConfig, spec: ForcingSpec):
        self.cfg = cfg
        self.spec = spec
        self.k = wavenumbers(cfg.N).astype(np.float64)
        self.b = spec.amplitudes(cfg.N)
        self.forced = bool(np.any(self.b))
        if cfg.scheme == "deterministic-rk4" and self.forced:
            raise ConfigurationError("deterministic-rk4 requires zero forcing (b = 0)")
        self._cache: dict[float, tuple] = {}

    def _factors(self, dt: float):
        f = self._cache.get(dt)
        if f is None:
            nu, k = self.cfg.nu, self.k
            decay = heat_decay(k, nu, dt)
            f = (
                decay,
                phi1(-nu * k ** 2 * dt) * dt,
                self.b * ou_noise_std(k, nu, dt),
                self.b * math.sqrt(dt),
                1.0 / (1.0 + nu * k ** 2 * dt),
            )
            if len(self._cache) > 8:
                self._cache.clear()
            self._cache[dt] = f
        return f

    def nonlinear(self, coeffs: np.ndarray) -> np.ndarray:
        if not self.cfg.nonlinearity:
            return np.zeros_like(coeffs)
        return nonlinear_term_coeffs(coeffs, self.cfg.a, self.cfg.grid)

    def rhs(self, coeffs: np.ndarray) -> np.ndarray:
        return -self.cfg.nu * self.k ** 2 * coeffs + self.nonlinear(coeffs)

    def eta(self, zeta: np.ndarray, dt: float) -> np.ndarray:
        """Scheme-appropriate noise increment from standard normals on |k| <= N."""
        if not self.forced:
            return np.zeros_like(zeta)
        decay, _, ou_std, bm_std, _ = self._factors(dt)
        if self.cfg.scheme == "imex-euler":
            return bm_std * zeta
        return ou_std * zeta

    def ou_eta(self, zeta: np.ndarray, dt: float) -> np.ndarray:
        """Exact OU increment (zero initial value) from the same normals."""
        return self._factors(dt)[2] * zeta

    def deterministic(self, coeffs: np.ndarray, dt: float) -> np.ndarray:
        """One step of the noise-free part of the scheme."""
        decay, phi_dt, _, _, implicit = self._factors(dt)
        scheme = self.cfg.scheme
        if scheme == "exp-euler-maruyama":
            return decay * coeffs + phi_dt * self.nonlinear(coeffs)
        if scheme == "imex-euler":
            return implicit * (coeffs + dt * self.nonlinear(coeffs))
        k1 = self.rhs(coeffs)
        k2 = self.rhs(coeffs + 0.5 * dt * k1)
        k3 = self.rhs(coeffs + 0.5 * dt * k2)
        k4 = self.rhs(coeffs + dt * k3)
        return coeffs + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def advance(self, coeffs: np.ndarray, eta: np.ndarray | None, dt: float) -> np.ndarray:
        nxt = self.deterministic(coeffs, dt)
        if self.cfg.scheme == "imex-euler" and eta is not None:
            return nxt + self._factors(dt)[4] * eta
        return nxt if eta is None else nxt + eta

    def normals(self, stream: NoiseStream) -> np.ndarray:
        """One block of normals from the stream, projected onto |k| <= N."""
        z = stream.draw(2 * self.spec.cutoff)
        return resize(Field(z), self.cfg.N).coeffs


def _step_plan(T: float, dt: float) -> tuple[int, float]:
    """Number of full steps and the length of a final partial step (0 if none)."""
    if T < 0:
        raise ConfigurationError("horizon T must be non-negative")
    ratio = T / dt
    n = int(round(ratio))
    if abs(ratio - n) <= 1e-9 * max(1.0, ratio):
        return n, 0.0
    n = int(math.floor(ratio))
    return n, T - n * dt


# --------------------------------------------------------------------------
# Trajectory state, observers and the single-trajectory API
# --------------------------------------------------------------------------

@dataclass
class TrajectoryState:
    t: float
    omega: Field
    stream: NoiseStream
    v: Field | None = None

    def copy(self) -> "TrajectoryState":
        return TrajectoryState(self.t, self.omega, self.stream.copy(), self.v)

    @property
    def w(self) -> Field | None:
        """Nonlinear component omega - v of the decomposition."""
        return None if self.v is None else self.omega - self.v


class Observer:
    """Callback invoked every ``every`` steps (and at the first and last time).

    ``alive`` is a boolean mask over realizations for ensemble runs, else None.
    """

    every: int = 1

    def observe(self, t: float, omega: Field, alive: np.ndarray | None = None) -> None:
        raise NotImplementedError

    def result(self):
        return None


class CallbackObserver(Observer):
    def __init__(self, fn: Callable[[float, Field], object], every: int = 1, name: str = "callback"):
        self.fn = fn
        self.every = every
        self.name = name
        self.records: list = []

    def observe(self, t, omega, alive=None):
        self.records.append((t, self.fn(t, omega)))

    def result(self):
        return self.records


class SnapshotObserver(Observer):
    """Stores (t, coefficients) snapshots."""

    name = "snapshots"

    def __init__(self, every: int = 1):
        self.every = every
        self.times: list[float] = []
        self.states: list[np.ndarray] = []

    def observe(self, t, omega, alive=None):
        self.times.append(t)
        self.states.append(omega.coeffs)

    def result(self):
        return np.array(self.times), np.array(self.states)


@dataclass
class RunResult:
    state: TrajectoryState
    outputs: dict = field(default_factory=dict)


class _BlowUpGuard:
    def __init__(self, history: int = 32):
        self.history = collections.deque(maxlen=history)

    def check(self, t: float, coeffs: np.ndarray) -> None:
        norm = float(np.sqrt(np.sum(coeffs * coeffs)))
        self.history.append((t, norm))
        if not np.all(np.isfinite(coeffs)):
            raise BlowUpError(t, list(self.history), "non-finite coefficient")
        if norm > BLOWUP_L2:
            raise BlowUpError(t, list(self.history), f"L2 norm {norm:.3g} exceeds {BLOWUP_L2:g}")


def step(state: TrajectoryState, cfg: SolverConfig, spec: ForcingSpec,
         dt: float | None = None, stepper: Stepper | None = None) -> TrajectoryState:
    """Advance one trajectory by one step (dt defaults to cfg.dt)."""
    if state.omega.cutoff != cfg.N:
        raise ConfigurationError(f"state cutoff {state.omega.cutoff} != N={cfg.N}")
    stepper = stepper or Stepper(cfg, spec)
    dt = cfg.dt if dt is None else dt
    stream = state.stream.copy()
    zeta = stepper.normals(stream) if stepper.forced else None
    eta = None if zeta is None else stepper.eta(zeta, dt)
    new = stepper.advance(state.omega.coeffs, eta, dt)
    guard = _BlowUpGuard()
    guard.check(state.t, state.omega.coeffs)
    guard.check(state.t + dt, new)
    v = None
    if state.v is not None:
        v_arr = heat_decay(stepper.k, cfg.nu, dt) * state.v.coeffs
        if zeta is not None:
            v_arr = v_arr + stepper.ou_eta(zeta, dt)
        v = Field(v_arr)
    return TrajectoryState(state.t + dt, Field(new), stream, v)


def _notify(observers: Sequence[Observer], t: float, coeffs: np.ndarray, alive=None) -> None:
    if observers:
        snap = Field(coeffs) if alive is None else Field(np.where(alive[..., None], coeffs, 0.0))
        for ob in observers:
            ob.observe(t, snap, alive)


def run(cfg: SolverConfig, spec: ForcingSpec, omega0: Field | TrajectoryState, T: float,
        observers: Sequence[Observer] = (), seed: int = 0, index: int = 0,
        track_ou: bool = False) -> RunResult:
    """Integrate one trajectory over a horizon T.

    ``omega0`` may be a TrajectoryState (restart); otherwise a fresh stream
    ``(seed, index)`` is created. The last step is shortened to land on T.
    """
    if isinstance(omega0, TrajectoryState):
        state = omega0.copy()
    else:
        if omega0.cutoff != cfg.N or omega0.batch_shape:
            raise ConfigurationError(f"initial field must be unbatched with cutoff N={cfg.N}")
        state = TrajectoryState(0.0, omega0, NoiseStream(seed, index), Field.zeros(cfg.N) if track_ou else None)
    stepper = Stepper(cfg, spec)
    n_full, partial = _step_plan(T, cfg.dt)
    dts = [cfg.dt] * n_full + ([partial] if partial > 0 else [])
    coeffs = state.omega.coeffs
    v = None if state.v is None else state.v.coeffs
    t0 = state.t
    # times stay on the global grid n*dt so that restarts reproduce them exactly
    n0 = int(round(t0 / cfg.dt))
    on_grid = abs(t0 - n0 * cfg.dt) <= 1e-12 * max(1.0, abs(t0))
    guard = _BlowUpGuard()
    guard.check(t0, coeffs)
    stream = state.stream
    _notify(observers, t0, coeffs)
    t = t0
    for i, dt in enumerate(dts, start=1):
        zeta = stepper.normals(stream) if stepper.forced else None
        eta = None if zeta is None else stepper.eta(zeta, dt)
        coeffs = stepper.advance(coeffs, eta, dt)
        if v is not None:
            v = heat_decay(stepper.k, cfg.nu, dt) * v
            if zeta is not None:
                v = v + stepper.ou_eta(zeta, dt)
        if i > n_full:
            t = t0 + T
        else:
            t = (n0 + i) * cfg.dt if on_grid else t0 + i * cfg.dt
        guard.check(t, coeffs)
        due = [ob for ob in observers if i % ob.every == 0 or i == len(dts)]
        _notify(due, t, coeffs)
    final = TrajectoryState(t, Field(coeffs), stream, None if v is None else Field(v))
    outputs = {getattr(ob, "name", f"observer{j}"): ob.result() for j, ob in enumerate(observers)}
    return RunResult(final, outputs)


# --------------------------------------------------------------------------
# Ensembles
# --------------------------------------------------------------------------

@dataclass
class EnsembleResult:
    t: float
    omega: Field            # shape (..., R, 2N)
    alive: np.ndarray       # shape (R,)
    reports: dict           # realization -> blow-up report
    outputs: dict = field(default_factory=dict)


def run_ensemble(cfg: SolverConfig, spec: ForcingSpec, omega0: Field, T: float,
                 streams: Sequence[NoiseStream], observers: Sequence[Observer] = ()) -> EnsembleResult:
    """Integrate R realizations in lockstep.

    ``omega0`` has batch shape (..., R); realization r consumes ``streams[r]``
    and every member along the leading axes shares that noise (synchronous
    coupling when the leading axis has length 2). A realization whose member
    blows up is frozen, marked dead and reported.
    """
    R = len(streams)
    if omega0.cutoff != cfg.N:
        raise ConfigurationError(f"initial cutoff {omega0.cutoff} != N={cfg.N}")
    if not omega0.batch_shape or omega0.batch_shape[-1] != R:
        raise ConfigurationError(f"last batch axis of omega0 must equal the number of streams ({R})")
    stepper = Stepper(cfg, spec)
    n_full, partial = _step_plan(T, cfg.dt)
    dts = [cfg.dt] * n_full + ([partial] if partial > 0 else [])
    coeffs = np.array(omega0.coeffs)
    lead = coeffs.ndim - 2
    alive = np.ones(R, dtype=bool)
    reports: dict[int, dict] = {}
    history: dict[int, collections.deque] = collections.defaultdict(lambda: collections.deque(maxlen=16))
    _notify(observers, 0.0, coeffs, alive)
    t = 0.0
    for i, dt in enumerate(dts, start=1):
        eta = None
        if stepper.forced:
            zeta = np.stack([stepper.normals(s) for s in streams])
            eta = stepper.eta(zeta, dt)
        new = stepper.advance(coeffs, eta, dt)
        t = i * cfg.dt if i <= n_full else T
        norms = np.sqrt(np.sum(new * new, axis=-1))
        bad = ~np.isfinite(new).all(axis=-1) | ~(norms <= BLOWUP_L2)
        bad_r = bad.reshape(-1, R).any(axis=0) if lead else bad
        max_norm = norms.reshape(-1, R).max(axis=0) if lead else norms
        for r in np.flatnonzero(alive):
            history[r].append((t, float(max_norm[r])))
        for r in np.flatnonzero(bad_r & alive):
            reports[int(r)] = BlowUpError(t, list(history[r]), "realization left the admissible region").report()
            log.warning("realization %d blew up at t=%.4g", r, t)
        alive &= ~bad_r
        coeffs = np.where(alive[:, None], new, coeffs)
        due = [ob for ob in observers if i % ob.every == 0 or i == len(dts)]
        _notify(due, t, coeffs, alive)
    outputs = {getattr(ob, "name", f"observer{j}"): ob.result() for j, ob in enumerate(observers)}
    return EnsembleResult(t, Field(coeffs), alive, reports, outputs)


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"GCKP"
CHECKPOINT_VERSION = 1
_CKPT_HEAD = struct.Struct("<4sIII32sdQQQII")


def save_checkpoint(path: str | Path, state: TrajectoryState, cfg: SolverConfig, spec: ForcingSpec) -> None:
    """Header, config hash, time, stream position, omega and optional v."""
    digest = bytes.fromhex(config_hash(cfg, spec))
    s = state.stream
    head = _CKPT_HEAD.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, 0, 0, digest, float(state.t),
                           s.seed, s.index, s.counter, int(state.v is not None), 0)
    body = field_to_bytes(state.omega) + (field_to_bytes(state.v) if state.v is not None else b"")
    Path(path).write_bytes(head + body)


def load_checkpoint(path: str | Path, cfg: SolverConfig | None = None, spec: ForcingSpec | None = None,
                    force: bool = False) -> TrajectoryState:
    data = Path(path).read_bytes()
    if len(data) < _CKPT_HEAD.size:
        raise ConfigurationError("truncated checkpoint")
    magic, version, _, _, digest, t, seed, index, counter, has_v, _ = _CKPT_HEAD.unpack_from(data)
    if magic != CHECKPOINT_MAGIC or version != CHECKPOINT_VERSION:
        raise ConfigurationError(f"not a version-{CHECKPOINT_VERSION} checkpoint: {path}")
    if cfg is not None and spec is not None and not force:
        expected = config_hash(cfg, spec)
        if digest.hex() != expected:
            raise ConfigurationError(
                f"checkpoint config hash {digest.hex()[:12]} does not match {expected[:12]} (use force to override)"
            )
    off = _CKPT_HEAD.size
    size = field_nbytes(_peek_cutoff(data[off:]))
    omega = field_from_bytes(data[off:off + size])
    off += size
    v = field_from_bytes(data[off:]) if has_v else None
    if not has_v and off != len(data):
        raise ConfigurationError("trailing bytes after checkpoint body")
    return TrajectoryState(t, omega, NoiseStream(seed, index, counter), v)


def _peek_cutoff(data: bytes) -> int:
    if len(data) < 16:
        raise ConfigurationError("truncated checkpoint body")
    return struct.unpack_from("<4sIII", data)[2]


# --------------------------------------------------------------------------
# Refinement studies
# --------------------------------------------------------------------------

@dataclass
class RefinementTable:
    kind: str
    levels: list
    sup_diff: list[float]        # sup over shared times of ||fine - coarse||_{H^m}
    final_diff: list[float]
    m: int
    orders: list[float]

    def rows(self) -> list[dict]:
        return [
            {"coarse": self.levels[i], "fine": self.levels[i + 1], "sup_diff": self.sup_diff[i],
             "final_diff": self.final_diff[i], "order": self.orders[i - 1] if i else float("nan")}
            for i in range(len(self.sup_diff))
        ]


def _orders(diffs: list[float]) -> list[float]:
    out = []
    for a, b in zip(diffs, diffs[1:]):
        out.append(math.log2(a / b) if a > 0 and b > 0 else float("nan"))
    return out


def refine_study(cfg: SolverConfig, spec: ForcingSpec, omega0: Field, T: float, levels: Sequence,
                 kind: str = "N", m: int = 1, seed: int = 0, index: int = 0) -> RefinementTable:
    """Successive differences under Galerkin (kind="N") or time-step (kind="dt") refinement.

    kind="N": ``levels`` are cutoffs; every level uses the same dt and the
    same noise path (normals drawn over the forcing support, then projected).
    kind="dt": ``levels`` are halving exponents j (dt_j = cfg.dt / 2**j); the
    coarse increments are composed exactly from the finest ones.
    Differences are Sobolev-m norms, sup over the common time grid.
    """
    if kind == "N":
        return _refine_N(cfg, spec, omega0, T, list(levels), m, seed, index)
    if kind == "dt":
        return _refine_dt(cfg, spec, omega0, T, list(levels), m, seed, index)
    raise ConfigurationError(f"unknown refinement kind {kind!r}")


def _refine_N(cfg, spec, omega0, T, levels, m, seed, index):
    trajectories = []
    for n in levels:
        c = cfg.with_(N=n)
        snaps = SnapshotObserver(every=1)
        run(c, spec, resize(omega0, n), T, [snaps], seed=seed, index=index)
        trajectories.append(snaps.result()[1])
    sup, final = [], []
    for lo, hi, a, b in zip(levels, levels[1:], trajectories, trajectories[1:]):
        diff = Field(b) - resize(Field(a), hi)
        norms = np.sqrt(sobolev_norm_sq(diff, m))
        sup.append(float(np.max(norms)))
        final.append(float(norms[-1]))
    return RefinementTable("N", levels, sup, final, m, _orders(sup))


def _refine_dt(cfg, spec, omega0, T, levels, m, seed, index):
    J = max(levels)
    dt_f = cfg.dt / 2 ** J
    n_coarse, partial = _step_plan(T, cfg.dt)
    if partial:
        raise ConfigurationError("dt refinement needs T to be a multiple of cfg.dt")
    fine = Stepper(cfg.with_(dt=dt_f), spec)
    stream = NoiseStream(seed, index)
    per_coarse = 2 ** J
    states = {j: [omega0.coeffs] for j in levels}
    current = {j: omega0.coeffs for j in levels}
    decay_f = heat_decay(fine.k, cfg.nu, dt_f)
    steppers = {j: (fine if j == J else Stepper(cfg.with_(dt=cfg.dt / 2 ** j), spec)) for j in levels}
    for _ in range(n_coarse):
        block = [fine.normals(stream) for _ in range(per_coarse)] if fine.forced else None
        for j in levels:
            r = 2 ** (J - j)
            stepper = steppers[j]
            dt_j = cfg.dt / 2 ** j
            x = current[j]
            for s in range(2 ** j):
                eta = None
                if block is not None:
                    sub = block[s * r:(s + 1) * r]
                    if cfg.scheme == "imex-euler":
                        eta = fine.b * math.sqrt(dt_f) * np.sum(sub, axis=0)
                    else:
                        eta = np.zeros_like(x)
                        for z in sub:
                            eta = decay_f * eta + fine.ou_eta(z, dt_f)
                x = stepper.advance(x, eta, dt_j)
            current[j] = x
            states[j].append(x)
    sup, final = [], []
    for a, b in zip(levels, levels[1:]):
        diff = Field(np.array(states[b]) - np.array(states[a]))
        norms = np.sqrt(sobolev_norm_sq(diff, m))
        sup.append(float(np.max(norms)))
        final.append(float(norms[-1]))
    return RefinementTable("dt", levels, sup, final, m, _orders(sup))


# --------------------------------------------------------------------------
# Initial data
# --------------------------------------------------------------------------

INITIAL_KINDS = ("zero", "single_mode", "random", "modes")


def initial_field(kind: str, N: int, params: dict | None = None, seed: int = 0) -> Field:
    """Initial data, drawn from a generator independent of every forcing stream.

    ``single_mode``: ``k``, ``amplitude``. ``random``: band ``K``, target
    norm ``norm`` in the Sobolev index ``m``. ``modes``: mapping k -> value.
    """
    params = dict(params or {})
    if kind == "zero":
        return Field.zeros(N)
    if kind == "single_mode":
        return Field.from_modes({int(params.get("k", 1)): float(params.get("amplitude", 1.0))}, N)
    if kind == "modes":
        return Field.from_modes({int(k): float(v) for k, v in dict(params["modes"]).items()}, N)
    if kind == "random":
        band = int(params.get("K", max(1, N // 4)))
        if not 1 <= band <= N:
            raise ConfigurationError(f"random initial band K={band} must lie in [1, N={N}]")
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x494E4954]))
        arr = np.zeros(2 * N)
        arr[N - band:N + band] = rng.standard_normal(2 * band)
        f = Field(arr)
        target = float(params.get("norm", 1.0))
        current = math.sqrt(sobolev_norm_sq(f, int(params.get("m", 0))))
        return f * (target / current)
    raise ConfigurationError(f"unknown initial data kind {kind!r}; expected one of {INITIAL_KINDS}")


def batch(fields: Iterable[Field]) -> Field:
    return Field(np.stack([f.coeffs for f in fields]))
