"""
End-to-end self checks runnable from a clean install (``gclm selftest``).

Each check returns a :class:`Check`; exact checks compare against closed
forms, statistical ones against tolerances in standard errors. The slow tier
adds the inertial-range spectrum property (N=1024, T=200).
"""

from __future__ import annotations

import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .diagnostics import FluxObserver, SpectrumObserver, enstrophy_flux, slope_fit
from .errors import ConfigurationError
from .ergodicity import fit_rate, noise_cancellation_residual, run_coupled
from .forcing import NoiseStream, OUState, b_profile, ou_exact_step
from .integrator import SolverConfig, initial_field, load_checkpoint, run, save_checkpoint
from .spectral import (
    Field,
    GridSpec,
    derivative,
    hilbert,
    lp_norm,
    sobolev_norm_sq,
    velocity_from_vorticity,
    wavenumbers,
)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    statistical: bool = False


def _rel(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def check_operators() -> tuple[bool, str]:
    N = 16
    c1, s1 = Field.from_modes({1: 1.0}, N), Field.from_modes({-1: 1.0}, N)
    c3 = Field.from_modes({3: 1.0}, N)
    errs = [
        _rel(hilbert(c1).coeffs, s1.coeffs),                     # H cos x = sin x
        _rel(hilbert(s1).coeffs, (-c1).coeffs),                  # H sin x = -cos x
        _rel(derivative(c3).coeffs, (-3.0 * Field.from_modes({-3: 1.0}, N)).coeffs),
        _rel(velocity_from_vorticity(c3).coeffs, (-c3 * (1 / 3)).coeffs),
    ]
    return max(errs) <= 1e-12, f"max relative error {max(errs):.2e}"


def check_inviscid_l2() -> tuple[bool, str]:
    cfg = SolverConfig(0.0, 32, 1e-3, -2.0, "deterministic-rk4")
    w0 = initial_field("random", 32, {"K": 8, "norm": 1.0}, seed=1)
    w1 = run(cfg, b_profile("zero"), w0, 0.2).state.omega
    drift = abs(sobolev_norm_sq(w1, 0) / sobolev_norm_sq(w0, 0) - 1)
    return drift <= 1e-8, f"relative L2 drift {drift:.2e}"


def check_inviscid_l3() -> tuple[bool, str]:
    cfg = SolverConfig(0.0, 32, 1e-3, -3.0, "deterministic-rk4")
    w0 = initial_field("random", 32, {"K": 4, "norm": 1.0}, seed=2)
    w1 = run(cfg, b_profile("zero"), w0, 0.1).state.omega
    drift = abs(lp_norm(w1, 3) / lp_norm(w0, 3) - 1)
    return drift <= 1e-4, f"relative L3 drift {drift:.2e}"


def check_flux_closure() -> tuple[bool, str]:
    g = GridSpec.for_cutoff(24)
    # band-limited to K_d so that the dealiased product is exact
    w = initial_field("random", 24, {"K": g.dealias_cutoff, "norm": 1.0}, seed=3)
    pi = enstrophy_flux(w, -2.0, g)
    return abs(pi[-1]) <= 1e-10, f"Pi(N) = {pi[-1]:.2e}"


def check_identical_pair() -> tuple[bool, str]:
    cfg = SolverConfig(1.0, 16, 0.01)
    w = initial_field("random", 16, {"K": 4, "norm": 1.0}, seed=4)
    res = run_coupled(cfg, b_profile("single_band", {"beta": 0.1}), w, w, 0.5, 3)
    zero = bool(np.all(res.diff_h0_sq == 0.0) and np.all(res.final.coeffs[0] == res.final.coeffs[1]))
    return zero, "difference identically zero" if zero else "difference nonzero"


def check_heat_kernel_coupling() -> tuple[bool, str]:
    nu, N = 0.7, 12
    cfg = SolverConfig(nu, N, 0.01, nonlinearity=False)
    w1 = initial_field("random", N, {"K": N, "norm": 1.0}, seed=5)
    w2 = initial_field("random", N, {"K": N, "norm": 1.0}, seed=6)
    res = run_coupled(cfg, b_profile("single_band", {"beta": 0.3}), w1, w2, 0.5, 2, m=1)
    k = wavenumbers(N).astype(float)
    d0 = (w1 - w2).coeffs
    exact = np.array([np.sum(k ** 2 * np.exp(-2 * nu * k ** 2 * t) * d0 ** 2) for t in res.times])
    err = _rel(res.diff_hm_sq[:, 0], exact)
    return err <= 1e-12, f"relative error {err:.2e}"


def check_noise_cancellation() -> tuple[bool, str]:
    cfg = SolverConfig(1.0, 16, 0.01)
    w1 = initial_field("random", 16, {"K": 6, "norm": 1.0}, seed=7)
    w2 = initial_field("random", 16, {"K": 6, "norm": 0.5}, seed=8)
    r = noise_cancellation_residual(cfg, b_profile("single_band", {"beta": 0.2}), w1, w2, 50)
    return r <= 1e-12, f"residual {r:.2e}"


def check_config_rejection() -> tuple[bool, str]:
    try:
        GridSpec(64, 96, 42, "two_thirds")
    except ConfigurationError as exc:
        return "3N+1" in str(exc), "N=64, M=96 rejected"
    return False, "N=64, M=96 accepted"


def check_fit_sanity() -> tuple[bool, str]:
    rng = np.random.default_rng(0)
    t = np.linspace(0, 10, 200)
    lam = 0.8
    y = np.exp(-lam * t) * (1 + 0.01 * rng.standard_normal(t.size))
    rate, _ = fit_rate(t, y)
    err = abs(-rate - lam) / lam
    return err <= 0.02, f"recovered {-rate:.4f} vs {lam}"


def check_restart() -> tuple[bool, str]:
    cfg = SolverConfig(1.0, 16, 0.01)
    spec = b_profile("single_band", {"beta": 0.1})
    w0 = initial_field("random", 16, {"K": 4, "norm": 1.0}, seed=9)
    with tempfile.TemporaryDirectory() as d:
        full = run(cfg, spec, w0, 1.0, seed=3).state
        half = run(cfg, spec, w0, 0.5, seed=3).state
        save_checkpoint(Path(d) / "a.ckpt", half, cfg, spec)
        resumed = run(cfg, spec, load_checkpoint(Path(d) / "a.ckpt", cfg, spec), 0.5).state
        save_checkpoint(Path(d) / "b.ckpt", full, cfg, spec)
        save_checkpoint(Path(d) / "c.ckpt", resumed, cfg, spec)
        same = (Path(d) / "b.ckpt").read_bytes() == (Path(d) / "c.ckpt").read_bytes()
    return same, "checkpoint bytes identical" if same else "checkpoint bytes differ"


def check_ou_variance() -> tuple[bool, str]:
    nu, dt, n_steps = 1.0, 0.05, 10_000
    spec = b_profile("power_law", {"beta": 0.5, "q": 1.0, "K": 4})
    state, stream = OUState.initial(4), NoiseStream(11)
    samples = np.empty((n_steps, 8))
    for i in range(n_steps):
        state = ou_exact_step(state, spec, nu, dt, stream)
        samples[i] = state.v.coeffs
    k = wavenumbers(4).astype(float)
    target = spec.b ** 2 / (2 * nu * k ** 2)
    err = float(np.max(np.abs(samples[1000:].var(axis=0) / target - 1)))
    return err <= 0.10, f"max relative variance error {err:.3f}"


def check_inertial_spectrum() -> tuple[bool, str]:
    """Slow: nu=1e-3, N=1024, T=200 spectral slope and flux sign."""
    cfg = SolverConfig(1e-3, 1024, 2e-3)
    spec = b_profile("single_band", {"beta": 0.1})
    so, fo = SpectrumObserver(every=500), FluxObserver(-2.0, cfg.grid, every=500)
    run(cfg, spec, Field.zeros(1024), 200.0, [so, fo], seed=0)
    series = so.result()
    E, _ = series.time_average(100.0)                       # E(k) is the long-time average of the shell energy
    Pi = fo.result().time_average(100.0)
    slope = slope_fit(np.arange(1, 1025), E, 4, 40)
    positive = bool(np.all(Pi[4:41] > 0))
    return (-3.8 <= slope <= -2.3) and positive, f"slope {slope:.3f}, flux positive on [4,40]: {positive}"


FAST_CHECKS: list[tuple[str, Callable[[], tuple[bool, str]], bool]] = [
    ("operators", check_operators, False),
    ("inviscid_l2", check_inviscid_l2, False),
    ("inviscid_l3", check_inviscid_l3, False),
    ("flux_closure", check_flux_closure, False),
    ("identical_pair", check_identical_pair, False),
    ("heat_kernel_coupling", check_heat_kernel_coupling, False),
    ("noise_cancellation", check_noise_cancellation, False),
    ("config_rejection", check_config_rejection, False),
    ("fit_sanity", check_fit_sanity, False),
    ("restart", check_restart, False),
    ("ou_variance", check_ou_variance, True),
]
SLOW_CHECKS = [("inertial_spectrum", check_inertial_spectrum, True)]


def run_selftest(slow: bool = False, log: Callable[[str], None] = print) -> list[Check]:
    results = []
    for name, fn, statistical in FAST_CHECKS + (SLOW_CHECKS if slow else []):
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        chk = Check(name, bool(ok), detail, time.perf_counter() - t0, statistical)
        log(f"{'PASS' if chk.passed else 'FAIL'}  {name:24s} {detail} ({chk.seconds:.2f}s)")
        results.append(chk)
    return results
