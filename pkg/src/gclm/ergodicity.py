"""
Coupling, mixing and uniqueness experiments for a = -2.

Coupled pairs are synchronous: both members of a realization read the same
noise block at every step, so their difference obeys a noise-free equation.
The constant C* of the contraction estimate is not computable; the lab uses a
proxy (default 16, the largest coefficient of the absorbed inequality) and
labels every threshold statement with the value used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .diagnostics import (
    EmpiricalMeasure,
    KBAverager,
    Observable,
    bootstrap_ci,
    default_observables,
    sobolev_sq,
)
from .errors import ConfigurationError, InsufficientSamplesError
from .forcing import ForcingSpec, NoiseStream
from .integrator import Observer, SolverConfig, Stepper, run, run_ensemble
from .spectral import Field, sobolev_norm_sq

CSTAR_PROXY = 16.0
MIN_REALIZATIONS = 10


# --------------------------------------------------------------------------
# Rate fitting
# --------------------------------------------------------------------------

def fit_rate(times: np.ndarray, values: np.ndarray, window: tuple[float, float] | None = None) -> tuple[float, float]:
    """Least-squares fit log(values) = c + rate * t; returns (rate, c)."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    sel = values > 0
    if window is not None:
        sel &= (times >= window[0] - 1e-12) & (times <= window[1] + 1e-12)
    if sel.sum() < 2:
        raise InsufficientSamplesError("rate fit needs at least two positive samples in the window")
    rate, c = np.polyfit(times[sel], np.log(values[sel]), 1)
    return float(rate), float(c)


def reference_rate(nu: float, B0: float, cstar: float = CSTAR_PROXY) -> float:
    """-nu/4 + C* B0 / nu^2."""
    return -nu / 4.0 + cstar * B0 / nu ** 2


@dataclass
class MixingFit:
    rate: float
    ci: tuple[float, float]
    window: tuple[float, float]
    reference_rate: float
    cstar: float
    threshold_report: dict

    def to_json(self) -> dict:
        return {
            "rate": self.rate, "ci": list(self.ci), "window": list(self.window),
            "reference_rate": self.reference_rate, "cstar_proxy": self.cstar,
            "threshold_report": self.threshold_report,
        }


def threshold_report(nu: float, B0: float, cstar: float = CSTAR_PROXY) -> dict:
    return {
        "cstar_proxy": cstar,
        "nu_cubed": nu ** 3,
        "mixing_threshold": 2 * cstar * B0,
        "uniqueness_threshold": 8 * cstar * B0,
        "mixing_condition": nu ** 3 >= 2 * cstar * B0,
        "uniqueness_condition": nu ** 3 >= 8 * cstar * B0,
    }


# --------------------------------------------------------------------------
# Coupled pairs
# --------------------------------------------------------------------------

class _DifferenceObserver(Observer):
    name = "difference"

    def __init__(self, m: int, every: int):
        self.m, self.every = m, every
        self.times, self.h0, self.hm = [], [], []

    def observe(self, t, omega, alive=None):
        diff = Field(omega.coeffs[0] - omega.coeffs[1])
        self.times.append(t)
        self.h0.append(sobolev_norm_sq(diff, 0))
        self.hm.append(sobolev_norm_sq(diff, self.m))


@dataclass
class CouplingRun:
    times: np.ndarray
    diff_h0_sq: np.ndarray       # (n_times, R)
    diff_hm_sq: np.ndarray
    m: int
    alive: np.ndarray
    reports: dict
    final: Field                 # (2, R, 2N)

    @property
    def n_alive(self) -> int:
        return int(self.alive.sum())

    def mean(self) -> np.ndarray:
        return self.diff_h0_sq[:, self.alive].mean(axis=1)

    def stderr(self) -> np.ndarray:
        n = self.n_alive
        if n < 2:
            return np.full(self.times.shape, np.nan)
        return self.diff_h0_sq[:, self.alive].std(axis=1, ddof=1) / math.sqrt(n)

    def mixing_rows(self):
        for t, mu, se in zip(self.times, self.mean(), self.stderr()):
            yield t, mu, se, self.n_alive


def run_coupled(cfg: SolverConfig, spec: ForcingSpec, omega1: Field, omega2: Field, T: float,
                n_samples: int, seed: int = 0, m: int = 1, every: int = 1) -> CouplingRun:
    """Synchronously coupled pairs for n_samples independent noise realizations."""
    if n_samples < 1:
        raise ConfigurationError("need at least one realization")
    streams = [NoiseStream(seed, r) for r in range(n_samples)]
    pair = np.stack([
        np.broadcast_to(omega1.coeffs, (n_samples, 2 * cfg.N)),
        np.broadcast_to(omega2.coeffs, (n_samples, 2 * cfg.N)),
    ])
    obs = _DifferenceObserver(m, every)
    res = run_ensemble(cfg, spec, Field(pair), T, streams, [obs])
    return CouplingRun(np.array(obs.times), np.array(obs.h0), np.array(obs.hm), m,
                       res.alive, res.reports, res.omega)


def fit_mixing(run_: CouplingRun, window: tuple[float, float], nu: float, B0: float,
               cstar: float = CSTAR_PROXY, n_boot: int = 1000, seed: int = 0) -> MixingFit:
    """Log-linear fit of the ensemble mean with a realization-level bootstrap CI."""
    if run_.n_alive < MIN_REALIZATIONS:
        raise InsufficientSamplesError(
            f"mixing fit requires >= {MIN_REALIZATIONS} surviving realizations, have {run_.n_alive}"
        )
    data = run_.diff_h0_sq[:, run_.alive]
    rate, _ = fit_rate(run_.times, data.mean(axis=1), window)
    rng = np.random.default_rng(seed)
    boot = []
    for _ in range(n_boot):
        idx = rng.integers(0, data.shape[1], data.shape[1])
        try:
            boot.append(fit_rate(run_.times, data[:, idx].mean(axis=1), window)[0])
        except InsufficientSamplesError:
            continue
    ci = tuple(float(q) for q in np.quantile(boot, [0.025, 0.975])) if boot else (float("nan"),) * 2
    return MixingFit(rate, ci, tuple(window), reference_rate(nu, B0, cstar), cstar, threshold_report(nu, B0, cstar))


def coupled_pair(cfg: SolverConfig, spec: ForcingSpec, omega1: Field, omega2: Field, T: float,
                 n_samples: int, window: tuple[float, float] | None = None, seed: int = 0, m: int = 1,
                 cstar: float = CSTAR_PROXY) -> tuple[CouplingRun, MixingFit | None]:
    """Coupled ensemble plus a mixing-rate fit (None if too few survivors)."""
    run_ = run_coupled(cfg, spec, omega1, omega2, T, n_samples, seed, m)
    window = window or (0.1 * T, T)
    try:
        fit = fit_mixing(run_, window, cfg.nu, spec.B0, cstar)
    except InsufficientSamplesError:
        fit = None
    return run_, fit


def noise_cancellation_residual(cfg: SolverConfig, spec: ForcingSpec, omega1: Field, omega2: Field,
                                n_steps: int, seed: int = 0) -> float:
    """Max |coupled difference - noise-free recomputation| over n_steps.

    The difference at step n+1 is recomputed from the two states at step n
    without any noise input.
    """
    stepper = Stepper(cfg, spec)
    stream = NoiseStream(seed, 0)
    x1, x2 = np.array(omega1.coeffs), np.array(omega2.coeffs)
    worst = 0.0
    for _ in range(n_steps):
        eta = stepper.eta(stepper.normals(stream), cfg.dt) if stepper.forced else None
        n1 = stepper.advance(x1, eta, cfg.dt)
        n2 = stepper.advance(x2, eta, cfg.dt)
        recomputed = stepper.deterministic(x1, cfg.dt) - stepper.deterministic(x2, cfg.dt)
        scale = max(1.0, float(np.max(np.abs(n1))), float(np.max(np.abs(n2))))
        worst = max(worst, float(np.max(np.abs((n1 - n2) - recomputed))) / scale)
        x1, x2 = n1, n2
    return worst


# --------------------------------------------------------------------------
# C* proxy
# --------------------------------------------------------------------------

@dataclass
class CStarReport:
    cstar: float
    nu: float
    B0: float
    mean_h0_sq: float
    mean_h1_sq: float
    reference_rate: float
    effective_rate: float
    thresholds: dict


def estimate_cstar(cfg: SolverConfig, spec: ForcingSpec, T: float = 200.0, omega0: Field | None = None,
                   seed: int = 0, cstar: float = CSTAR_PROXY, every: int = 10) -> CStarReport:
    """C* proxy with measured stationary statistics.

    ``effective_rate`` replaces the random norms of the absorbed difference
    inequality by stationary averages (both members distributed alike):
    -nu/4 + (12 <||w||^2> + C* <||w||^2_{H^1}>) / nu.
    """
    omega0 = omega0 if omega0 is not None else Field.zeros(cfg.N)
    if spec.is_zero() and not np.any(omega0.coeffs):
        h0 = h1 = 0.0
    else:
        avg = KBAverager([sobolev_sq(0), sobolev_sq(1)], T, 0.5 * T, every=every)
        run(cfg, spec, omega0, T, [avg], seed=seed)
        res = avg.result()
        h0, h1 = float(res.averages["H0_sq"]), float(res.averages["H1_sq"])
    nu = cfg.nu
    return CStarReport(
        cstar, nu, spec.B0, h0, h1,
        reference_rate(nu, spec.B0, cstar),
        -nu / 4.0 + (12.0 * h0 + cstar * h1) / nu,
        threshold_report(nu, spec.B0, cstar),
    )


# --------------------------------------------------------------------------
# Uniqueness probe
# --------------------------------------------------------------------------

@dataclass
class UniquenessReport:
    horizon: float
    observables: list[str]
    averages: dict               # name -> list over initial data
    cis: dict                    # name -> list of (lo, hi)
    overlap: dict                # name -> bool (all CIs share a point)

    @property
    def all_overlap(self) -> bool:
        return all(self.overlap.values())

    def to_json(self) -> dict:
        return {
            "horizon": self.horizon,
            "observables": {
                name: {
                    "averages": [float(a) for a in self.averages[name]],
                    "ci": [[float(lo), float(hi)] for lo, hi in self.cis[name]],
                    "overlap": bool(self.overlap[name]),
                }
                for name in self.observables
            },
        }


def uniqueness_probe(cfg: SolverConfig, spec: ForcingSpec, initial_set: Sequence[Field], T: float,
                     observables: Sequence[Observable] | None = None, seed: int = 0,
                     burn_in: float | None = None, every: int = 10, independent_noise: bool = True,
                     level: float = 0.95) -> UniquenessReport:
    """Krylov-Bogoliubov averages per initial datum and a CI-overlap verdict."""
    if len(initial_set) < 2:
        raise ConfigurationError("uniqueness probe needs at least two initial data")
    observables = list(observables) if observables is not None else default_observables()
    measures: list[EmpiricalMeasure] = []
    for i, w0 in enumerate(initial_set):
        avg = KBAverager(observables, T, burn_in, every=every)
        run(cfg, spec, w0, T, [avg], seed=seed, index=i if independent_noise else 0)
        measures.append(avg.result())
    names = [ob.name for ob in observables]
    averages, cis, overlap = {}, {}, {}
    for name in names:
        averages[name] = [float(ms.averages[name]) for ms in measures]
        cis[name] = [bootstrap_ci(ms.batch_means[name], level, seed=seed) for ms in measures]
        overlap[name] = max(lo for lo, _ in cis[name]) <= min(hi for _, hi in cis[name])
    return UniquenessReport(T, names, averages, cis, overlap)


# --------------------------------------------------------------------------
# Dual-Lipschitz gap
# --------------------------------------------------------------------------

@dataclass
class GapSeries:
    times: np.ndarray
    reference: dict              # name -> (average, stderr)
    gap: dict                    # name -> array over times
    noise_floor: dict            # name -> array over times
    fits: dict = field(default_factory=dict)    # name -> rate or "not resolvable"


class _GridObserver(Observer):
    def __init__(self, times: Sequence[float], observables: Sequence[Observable]):
        self.grid = list(times)
        self.observables = observables
        self.every = 1
        self.records: dict[float, dict] = {}

    def observe(self, t, omega, alive=None):
        for g in self.grid:
            if abs(t - g) <= 1e-9 * max(1.0, g) and g not in self.records:
                sel = alive if alive is not None else slice(None)
                self.records[g] = {ob.name: np.asarray(ob(omega))[sel] for ob in self.observables}


def dual_lipschitz_gap(cfg: SolverConfig, spec: ForcingSpec, omega0: Field, T_grid: Sequence[float],
                       observables: Sequence[Observable], n_samples: int = 200, reference_T: float | None = None,
                       seed: int = 0, every: int = 10) -> GapSeries:
    """|E phi(omega(t)) - <phi, mu>| with mu replaced by a long independent run.

    The reference run uses a stream index disjoint from the ensemble and
    discards its first half.
    """
    T_grid = sorted(float(t) for t in T_grid)
    T_max = T_grid[-1]
    reference_T = reference_T if reference_T is not None else max(200.0, 50.0 * T_max)
    if reference_T <= 2 * T_max:
        raise ConfigurationError("reference run must be much longer than the gap horizon")
    ref_avg = KBAverager(observables, reference_T, 0.5 * reference_T, every=every)
    run(cfg, spec, omega0, reference_T, [ref_avg], seed=seed, index=n_samples + 1_000_000)
    ref = ref_avg.result()
    streams = [NoiseStream(seed, r) for r in range(n_samples)]
    start = Field(np.broadcast_to(omega0.coeffs, (n_samples, 2 * cfg.N)))
    grid_obs = _GridObserver(T_grid, observables)
    run_ensemble(cfg, spec, start, T_max, streams, [grid_obs])
    times = np.array([t for t in T_grid if t in grid_obs.records])
    reference, gap, floor, fits = {}, {}, {}, {}
    for ob in observables:
        mu, se_ref = float(ref.averages[ob.name]), float(ref.stderr[ob.name])
        reference[ob.name] = (mu, se_ref)
        samples = [grid_obs.records[t][ob.name] for t in times]
        means = np.array([s.mean() for s in samples])
        ses = np.array([s.std(ddof=1) / math.sqrt(s.size) if s.size > 1 else 0.0 for s in samples])
        gap[ob.name] = np.abs(means - mu)
        floor[ob.name] = np.sqrt(ses ** 2 + se_ref ** 2)
        above = gap[ob.name] > 2 * floor[ob.name]
        if above.sum() >= 3:
            fits[ob.name] = fit_rate(times[above], gap[ob.name][above])[0]
        else:
            fits[ob.name] = "not resolvable"
    return GapSeries(times, reference, gap, floor, fits)
