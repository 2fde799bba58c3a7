"""
Spectral, moment and time-average diagnostics.

Shell conventions (shell k collects modes +k and -k):

    E(k) = 1/2 (u_k^2 + u_{-k}^2) = 1/2 k^{-2} (omega_k^2 + omega_{-k}^2)
    Q(k) = 1/2 (omega_k^2 + omega_{-k}^2)

so that 2 sum_k k^2 E(k) = 2 sum_k Q(k) = ||omega||_{L2}^2. The nonlinear
enstrophy transfer into shell k is T(k) = omega_k B_k + omega_{-k} B_{-k}
with B = B_a(omega), and the flux through k is Pi_Q(k) = -sum_{k' <= k} T(k').
Positive flux means enstrophy moving towards high wavenumbers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError
from .forcing import ForcingSpec, NoiseStream
from .integrator import Observer, SolverConfig, run, run_ensemble
from .spectral import Field, GridSpec, nonlinear_term, sobolev_norm_sq

DEFAULT_CADENCE = 10
DEFAULT_BURN_IN = 0.2
ATTRACTOR_MODES = (4, 8, 16)


# --------------------------------------------------------------------------
# Spectra and transfer
# --------------------------------------------------------------------------

def _shell_sq(f: Field) -> np.ndarray:
    return 0.5 * (f.cos_part() ** 2 + f.sin_part() ** 2)


def enstrophy_spectrum(omega: Field) -> np.ndarray:
    return _shell_sq(omega)


def energy_spectrum(omega: Field) -> np.ndarray:
    """E(k), k = 1..N, of the velocity u with u_x = H(omega)."""
    k = np.arange(1, omega.cutoff + 1, dtype=np.float64)
    return _shell_sq(omega) / k ** 2


def enstrophy_transfer(omega: Field, a: float, g: GridSpec) -> np.ndarray:
    B = nonlinear_term(omega, a, g)
    return omega.cos_part() * B.cos_part() + omega.sin_part() * B.sin_part()


def enstrophy_flux(omega: Field, a: float, g: GridSpec) -> np.ndarray:
    """Pi_Q(k) for k = 0..N (Pi_Q(0) = 0)."""
    T = enstrophy_transfer(omega, a, g)
    flux = -np.cumsum(T, axis=-1)
    zero = np.zeros(flux.shape[:-1] + (1,))
    return np.concatenate([zero, flux], axis=-1)


def slope_fit(k: np.ndarray, values: np.ndarray, kmin: float, kmax: float) -> float:
    """Least-squares slope of log(values) against log(k) over [kmin, kmax]."""
    k = np.asarray(k, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    sel = (k >= kmin) & (k <= kmax) & (values > 0)
    if sel.sum() < 2:
        raise ConfigurationError("slope fit needs at least two positive points in the band")
    slope, _ = np.polyfit(np.log(k[sel]), np.log(values[sel]), 1)
    return float(slope)


@dataclass
class SpectrumSeries:
    times: np.ndarray
    E: np.ndarray          # (n_times, N)
    Q: np.ndarray

    def time_average(self, t_min: float = -np.inf) -> tuple[np.ndarray, np.ndarray]:
        sel = self.times >= t_min
        return self.E[sel].mean(axis=0), self.Q[sel].mean(axis=0)


@dataclass
class FluxSeries:
    times: np.ndarray
    Pi: np.ndarray         # (n_times, N + 1)

    def time_average(self, t_min: float = -np.inf) -> np.ndarray:
        return self.Pi[self.times >= t_min].mean(axis=0)


class SpectrumObserver(Observer):
    name = "spectrum"

    def __init__(self, every: int = DEFAULT_CADENCE):
        self.every = every
        self.times, self.E, self.Q = [], [], []

    def observe(self, t, omega, alive=None):
        self.times.append(t)
        self.E.append(energy_spectrum(omega))
        self.Q.append(enstrophy_spectrum(omega))

    def result(self) -> SpectrumSeries:
        return SpectrumSeries(np.array(self.times), np.array(self.E), np.array(self.Q))


class FluxObserver(Observer):
    name = "flux"

    def __init__(self, a: float, grid: GridSpec, every: int = DEFAULT_CADENCE):
        self.a, self.grid, self.every = a, grid, every
        self.times, self.Pi = [], []

    def observe(self, t, omega, alive=None):
        self.times.append(t)
        self.Pi.append(enstrophy_flux(omega, self.a, self.grid))

    def result(self) -> FluxSeries:
        return FluxSeries(np.array(self.times), np.array(self.Pi))


class AttractorObserver(Observer):
    """Cosine coefficients (omega_4, omega_8, omega_16) over time."""

    name = "attractor"

    def __init__(self, modes: Sequence[int] = ATTRACTOR_MODES, every: int = DEFAULT_CADENCE):
        self.modes, self.every = tuple(modes), every
        self.rows = []

    def observe(self, t, omega, alive=None):
        vals = [omega.mode(k) if k <= omega.cutoff else 0.0 for k in self.modes]
        self.rows.append([t, *vals])

    def result(self) -> np.ndarray:
        return np.array(self.rows)


# --------------------------------------------------------------------------
# Moments
# --------------------------------------------------------------------------

@dataclass
class MomentSeries:
    m: int
    times: np.ndarray
    h_m_sq: np.ndarray           # (n_times, ...) ||omega||^2_{H^m}
    int_h_m1_sq: np.ndarray      # running trapezoid of ||omega||^2_{H^{m+1}}


class MomentTracker(Observer):
    """||omega(t)||^2_{H^m} and the trapezoidal integral of ||omega||^2_{H^{m+1}}."""

    name = "moments"

    def __init__(self, m: int = 0, every: int = DEFAULT_CADENCE):
        self.m, self.every = m, every
        self.times, self.hm, self.integral = [], [], []
        self._last = None

    def observe(self, t, omega, alive=None):
        hm = sobolev_norm_sq(omega, self.m)
        h1 = sobolev_norm_sq(omega, self.m + 1)
        if self._last is None:
            acc = np.zeros_like(np.asarray(h1, dtype=float))
        else:
            t0, h1_0, acc0 = self._last
            acc = acc0 + 0.5 * (t - t0) * (h1_0 + h1)
        self._last = (t, h1, acc)
        self.times.append(t)
        self.hm.append(hm)
        self.integral.append(acc)

    def result(self) -> MomentSeries:
        return MomentSeries(self.m, np.array(self.times), np.array(self.hm), np.array(self.integral))


def moment_tracker(times: np.ndarray, states: np.ndarray, m: int = 0) -> MomentSeries:
    """Moment series from a recorded trajectory (states: (n_times, ..., 2N))."""
    tracker = MomentTracker(m, every=1)
    for t, s in zip(times, states):
        tracker.observe(float(t), Field(s))
    return tracker.result()


def ensemble_moments(cfg: SolverConfig, spec: ForcingSpec, omega0: Field, T: float, m: int,
                     n_samples: int, seed: int = 0, every: int = 1) -> MomentSeries:
    """Moment series for an ensemble started from one initial datum."""
    streams = [NoiseStream(seed, i) for i in range(n_samples)]
    start = Field(np.broadcast_to(omega0.coeffs, (n_samples, omega0.coeffs.shape[-1])))
    tracker = MomentTracker(m, every)
    run_ensemble(cfg, spec, start, T, streams, [tracker])
    return tracker.result()


# --------------------------------------------------------------------------
# Exponential moments
# --------------------------------------------------------------------------

def check_exp_guard(eps: float, nu: float, B0: float) -> None:
    """Admissibility 2 eps B0 <= nu; violating it is an error."""
    if eps < 0:
        raise ConfigurationError(f"epsilon must be non-negative, got {eps}")
    if 2.0 * eps * B0 > nu:
        raise ConfigurationError(
            f"exponential moment guard violated: 2*eps*B0 = {2 * eps * B0:.6g} > nu = {nu:.6g} "
            "(requires 2 eps B0 <= nu)"
        )


@dataclass
class ExpMomentEstimate:
    eps: float
    t: float
    mean: float
    stderr: float
    n: int
    bound: float

    @property
    def within_bound(self) -> bool:
        return self.mean <= self.bound * (1.0 + 3.0 * self.stderr / max(self.mean, 1e-300))


def exp_moment(h0_sq: np.ndarray, h1_integral: np.ndarray, eps: float, nu: float, B0: float,
               omega0_sq: float | None = None, t: float = float("nan")) -> ExpMomentEstimate:
    """Monte Carlo mean of exp(eps (||omega(t)||^2 + nu int_0^t ||omega||^2_{H^1} ds)).

    ``h0_sq``/``h1_integral`` are per-realization samples at time t.
    """
    check_exp_guard(eps, nu, B0)
    z = np.asarray(h0_sq, dtype=float) + nu * np.asarray(h1_integral, dtype=float)
    vals = np.exp(eps * z)
    n = vals.size
    se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    bound = math.exp(eps * (omega0_sq + t * B0)) if omega0_sq is not None else float("nan")
    return ExpMomentEstimate(eps, t, float(vals.mean()), se, n, bound)


def exp_moment_ensemble(cfg: SolverConfig, spec: ForcingSpec, omega0: Field, t: float, eps: float,
                        n_samples: int, seed: int = 0) -> ExpMomentEstimate:
    check_exp_guard(eps, cfg.nu, spec.B0)
    series = ensemble_moments(cfg, spec, omega0, t, 0, n_samples, seed, every=1)
    return exp_moment(series.h_m_sq[-1], series.int_h_m1_sq[-1], eps, cfg.nu, spec.B0,
                      omega0_sq=sobolev_norm_sq(omega0, 0), t=t)


# --------------------------------------------------------------------------
# Observables and Krylov-Bogoliubov averages
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Observable:
    """Named functional of a (possibly batched) Field returning an array."""

    name: str
    fn: Callable[[Field], np.ndarray]
    lipschitz: float | None = None     # Lipschitz constant in L2, when known

    def __call__(self, omega: Field):
        return self.fn(omega)


def sobolev_sq(m: int) -> Observable:
    return Observable(f"H{m}_sq", lambda w: sobolev_norm_sq(w, m))


def sobolev(m: int) -> Observable:
    lip = 1.0 if m == 0 else None
    return Observable(f"H{m}", lambda w: np.sqrt(sobolev_norm_sq(w, m)), lip)


def coefficient(k: int) -> Observable:
    return Observable(f"w{k}", lambda w: w.mode(k), 1.0)


def constant(c: float = 1.0) -> Observable:
    return Observable(f"const{c:g}", lambda w: np.full(w.batch_shape, float(c)) if w.batch_shape else float(c), 0.0)


def exp_energy(eps: float, nu: float, B0: float) -> Observable:
    check_exp_guard(eps, nu, B0)
    return Observable(f"exp{eps:g}_H0_sq", lambda w: np.exp(eps * sobolev_norm_sq(w, 0)))


def polynomial(terms: Mapping[tuple[int, ...], float], name: str = "poly") -> Observable:
    """sum_c coef * prod_{k in key} omega_k, keys are tuples of wavenumbers."""
    items = [(tuple(key), float(c)) for key, c in terms.items()]

    def fn(w: Field):
        total = 0.0
        for key, c in items:
            term = c
            for k in key:
                term = term * w.mode(k)
            total = total + term
        return total

    return Observable(name, fn)


def combine(alpha: float, phi: Observable, beta: float, psi: Observable) -> Observable:
    return Observable(f"{alpha:g}*{phi.name}+{beta:g}*{psi.name}", lambda w: alpha * phi(w) + beta * psi(w))


def default_observables() -> list[Observable]:
    return [sobolev_sq(0), sobolev_sq(1), coefficient(1), coefficient(-1), coefficient(2)]


@dataclass
class EmpiricalMeasure:
    horizon: float
    burn_in: float
    averages: dict
    stderr: dict
    batch_means: dict
    histogram: tuple | None = None    # (counts, edges) over ATTRACTOR_MODES

    def rows(self):
        for name in self.averages:
            yield self.horizon, name, self.averages[name], self.stderr[name]


class KBAverager(Observer):
    """Streaming time averages (1/(T - T_b)) int_{T_b}^T phi(omega(t)) dt."""

    name = "kb"

    def __init__(self, observables: Sequence[Observable], horizon: float, burn_in: float | None = None,
                 every: int = DEFAULT_CADENCE, histogram_bins: int | None = None, n_batches: int = 20):
        burn_in = DEFAULT_BURN_IN * horizon if burn_in is None else burn_in
        if horizon <= burn_in:
            raise ConfigurationError(f"horizon T={horizon} must exceed the burn-in {burn_in}")
        self.observables = list(observables)
        self.horizon, self.burn_in, self.every = horizon, burn_in, every
        self.histogram_bins, self.n_batches = histogram_bins, n_batches
        self.times: list[float] = []
        self.values: dict[str, list] = {ob.name: [] for ob in self.observables}
        self.hist_points: list = []

    def observe(self, t, omega, alive=None):
        if t < self.burn_in - 1e-12:
            return
        self.times.append(t)
        for ob in self.observables:
            self.values[ob.name].append(ob(omega))
        if self.histogram_bins:
            self.hist_points.append([omega.mode(k) if k <= omega.cutoff else 0.0 for k in ATTRACTOR_MODES])

    def result(self) -> EmpiricalMeasure:
        return time_average(np.array(self.times), {k: np.array(v) for k, v in self.values.items()},
                            self.horizon, self.burn_in, self.n_batches,
                            np.array(self.hist_points) if self.hist_points else None, self.histogram_bins)


def _trapezoid_mean(times: np.ndarray, vals: np.ndarray) -> np.ndarray:
    if times.size == 1:
        return vals[0]
    dt = np.diff(times).reshape((-1,) + (1,) * (vals.ndim - 1))
    return np.sum(0.5 * dt * (vals[1:] + vals[:-1]), axis=0) / (times[-1] - times[0])


def time_average(times: np.ndarray, values: Mapping[str, np.ndarray], horizon: float, burn_in: float,
                 n_batches: int = 20, hist_points: np.ndarray | None = None,
                 bins: int | None = None) -> EmpiricalMeasure:
    """Trapezoidal time averages with batch-means standard errors."""
    if times.size == 0:
        raise ConfigurationError("no samples after burn-in")
    averages, stderr, batches = {}, {}, {}
    nb = max(1, min(n_batches, times.size // 2))
    edges = np.linspace(0, times.size - 1, nb + 1).round().astype(int)
    for name, vals in values.items():
        vals = np.asarray(vals, dtype=float)
        averages[name] = _trapezoid_mean(times, vals)
        bm = np.array([_trapezoid_mean(times[i:j + 1], vals[i:j + 1]) for i, j in zip(edges, edges[1:])])
        batches[name] = bm
        stderr[name] = bm.std(axis=0, ddof=1) / math.sqrt(nb) if nb > 1 else np.nan * bm[0]
    hist = None
    if hist_points is not None and bins:
        hist = np.histogramdd(hist_points, bins=bins)
    return EmpiricalMeasure(horizon, burn_in, averages, stderr, batches, hist)


def kb_average(times: np.ndarray, states: np.ndarray, observables: Sequence[Observable], horizon: float,
               burn_in: float | None = None, n_batches: int = 20, histogram_bins: int | None = None) -> EmpiricalMeasure:
    """Krylov-Bogoliubov averages from a recorded trajectory."""
    avg = KBAverager(observables, horizon, burn_in, every=1, histogram_bins=histogram_bins, n_batches=n_batches)
    for t, s in zip(times, states):
        avg.observe(float(t), Field(s))
    return avg.result()


def simulate_kb(cfg: SolverConfig, spec: ForcingSpec, omega0: Field, T: float,
                observables: Sequence[Observable], burn_in: float | None = None, seed: int = 0,
                index: int = 0, every: int = DEFAULT_CADENCE, histogram_bins: int | None = None) -> EmpiricalMeasure:
    avg = KBAverager(observables, T, burn_in, every=every, histogram_bins=histogram_bins)
    run(cfg, spec, omega0, T, [avg], seed=seed, index=index)
    return avg.result()


def bootstrap_ci(batch_means: np.ndarray, level: float = 0.95, n_boot: int = 2000,
                 seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap CI of the mean of batch means."""
    x = np.asarray(batch_means, dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, x.size, size=(n_boot, x.size))
    means = x[idx].mean(axis=1)
    lo, hi = np.quantile(means, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


# --------------------------------------------------------------------------
# CSV emitters
# --------------------------------------------------------------------------

def fmt(x) -> str:
    """17 significant digits, scientific notation."""
    return f"{float(x):.16e}"


def write_csv(path: str | Path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, (str, int, np.integer)) else fmt(c) for c in row])
    return path


def write_spectrum_csv(path, series: SpectrumSeries) -> Path:
    rows = ((t, k + 1, E[k], Q[k]) for t, E, Q in zip(series.times, series.E, series.Q) for k in range(E.size))
    return write_csv(path, ["t", "k", "E", "Q"], rows)


def write_flux_csv(path, series: FluxSeries) -> Path:
    rows = ((t, k, P[k]) for t, P in zip(series.times, series.Pi) for k in range(P.size))
    return write_csv(path, ["t", "k", "Pi"], rows)


def write_moments_csv(path, series: Sequence[MomentSeries]) -> Path:
    rows = ((t, s.m, h, i) for s in series for t, h, i in zip(s.times, s.h_m_sq, s.int_h_m1_sq))
    return write_csv(path, ["t", "m", "H_m_sq", "int_H_m1_sq"], rows)


def write_kb_csv(path, measure: EmpiricalMeasure) -> Path:
    return write_csv(path, ["T", "observable", "value", "stderr"], measure.rows())


def write_attractor_csv(path, rows: np.ndarray) -> Path:
    return write_csv(path, ["t", "w4", "w8", "w16"], rows)
