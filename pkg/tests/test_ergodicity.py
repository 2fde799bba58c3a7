from __future__ import annotations

import json

import numpy as np
import pytest

from gclm.diagnostics import coefficient, constant, sobolev_sq
from gclm.errors import ConfigurationError, InsufficientSamplesError
from gclm.ergodicity import (
    CSTAR_PROXY,
    coupled_pair,
    dual_lipschitz_gap,
    estimate_cstar,
    fit_mixing,
    fit_rate,
    noise_cancellation_residual,
    reference_rate,
    run_coupled,
    threshold_report,
    uniqueness_probe,
)
from gclm.forcing import b_profile
from gclm.integrator import SolverConfig, initial_field
from gclm.spectral import Field, wavenumbers

SINGLE = b_profile("single_band", {"beta": 0.1})


def pair(N, seed=0, norm=1.0):
    a = initial_field("random", N, {"K": 4, "norm": norm}, seed=seed)
    b = initial_field("random", N, {"K": 4, "norm": norm}, seed=seed + 100)
    return a, b


class TestFitRate:
    def test_synthetic_recovery(self):
        rng = np.random.default_rng(1)
        t = np.linspace(0, 10, 100)
        for lam in (0.3, 1.0, 2.5):
            y = np.exp(-lam * t) * (1 + 0.01 * rng.standard_normal(t.size))
            assert abs(-fit_rate(t, y)[0] / lam - 1) <= 0.02

    def test_window(self):
        t = np.linspace(0, 10, 101)
        y = np.where(t < 2, 1.0, np.exp(-(t - 2)))
        assert fit_rate(t, y, (2, 10))[0] == pytest.approx(-1.0, rel=1e-10)

    def test_too_few_points(self):
        with pytest.raises(InsufficientSamplesError):
            fit_rate(np.array([0.0, 1.0]), np.array([1.0, 0.0]))


class TestThresholds:
    def test_reference_rate(self):
        assert reference_rate(2.0, 0.02) == pytest.approx(-0.5 + 16 * 0.02 / 4)

    def test_report(self):
        rep = threshold_report(1.0, 0.02)
        assert rep["uniqueness_threshold"] == pytest.approx(8 * 16 * 0.02)
        assert rep["mixing_threshold"] == pytest.approx(2 * 16 * 0.02)
        assert rep["uniqueness_condition"] is False and rep["cstar_proxy"] == CSTAR_PROXY


class TestCoupling:
    def test_identical_data_bit_exact(self):
        cfg = SolverConfig(1.0, 16, 0.01)
        w = initial_field("random", 16, {"K": 4}, seed=1)
        res = run_coupled(cfg, SINGLE, w, w, 1.0, 4)
        assert np.all(res.diff_h0_sq == 0.0) and np.all(res.diff_hm_sq == 0.0)
        np.testing.assert_array_equal(res.final.coeffs[0], res.final.coeffs[1])

    def test_initial_difference_exact(self):
        cfg = SolverConfig(1.0, 16, 0.01)
        a, b = pair(16)
        res = run_coupled(cfg, SINGLE, a, b, 0.1, 2)
        d = a.coeffs - b.coeffs
        np.testing.assert_allclose(res.diff_h0_sq[0], np.sum(d * d), rtol=1e-14)

    def test_heat_kernel_closed_form(self):
        nu, N, m = 0.8, 12, 2
        cfg = SolverConfig(nu, N, 0.01, nonlinearity=False)
        a, b = pair(N)
        res = run_coupled(cfg, SINGLE, a, b, 1.0, 3, m=m)
        k = np.abs(wavenumbers(N)).astype(float)
        d0 = a.coeffs - b.coeffs
        exact = np.array([np.sum(k ** (2 * m) * np.exp(-2 * nu * k ** 2 * t) * d0 ** 2) for t in res.times])
        for r in range(3):
            np.testing.assert_allclose(res.diff_hm_sq[:, r], exact, rtol=1e-12)

    @pytest.mark.filterwarnings("ignore:imex-euler with dt")
    @pytest.mark.parametrize("scheme", ["exp-euler-maruyama", "imex-euler"])
    def test_noise_cancellation(self, scheme):
        cfg = SolverConfig(1.0, 16, 0.01, scheme=scheme)
        a, b = pair(16, norm=2.0)
        assert noise_cancellation_residual(cfg, b_profile("power_law", {"beta": 0.3, "q": 1, "K": 8}),
                                           a, b, 100) <= 1e-12

    def test_monotone_mean_in_large_nu_regime(self):
        nu = 2.0
        assert nu ** 3 >= 8 * 16 * SINGLE.B0
        cfg = SolverConfig(nu, 16, 0.01)
        a, b = pair(16)
        res = run_coupled(cfg, SINGLE, a, b, 3.0, 20)
        mean, se = res.mean(), res.stderr()
        assert np.all(np.diff(mean) <= 2 * (se[1:] + se[:-1]) + 1e-300)

    def test_fit_requires_survivors(self):
        cfg = SolverConfig(2.0, 16, 0.01)
        a, b = pair(16)
        res = run_coupled(cfg, SINGLE, a, b, 2.0, 5)
        with pytest.raises(InsufficientSamplesError):
            fit_mixing(res, (0.5, 2.0), cfg.nu, SINGLE.B0)
        _, fit = coupled_pair(cfg, SINGLE, a, b, 2.0, 5)
        assert fit is None

    def test_mixing_fit(self):
        cfg = SolverConfig(2.0, 16, 0.01)
        a, b = pair(16)
        run_, fit = coupled_pair(cfg, SINGLE, a, b, 5.0, 12, window=(1.0, 5.0))
        assert fit.rate <= -cfg.nu / 8
        assert fit.ci[0] <= fit.rate <= fit.ci[1]
        assert fit.reference_rate == pytest.approx(reference_rate(2.0, SINGLE.B0))
        js = json.loads(json.dumps(fit.to_json()))
        assert set(js) >= {"rate", "ci", "window", "reference_rate", "threshold_report"}
        rows = list(run_.mixing_rows())
        assert len(rows) == run_.times.size and rows[0][3] == 12

    def test_invalid_samples(self):
        with pytest.raises(ConfigurationError):
            run_coupled(SolverConfig(1.0, 8, 0.01), SINGLE, Field.zeros(8), Field.zeros(8), 1.0, 0)


class TestCStar:
    def test_zero_forcing_zero_data(self):
        rep = estimate_cstar(SolverConfig(0.1, 8, 0.01), b_profile("zero"), 10.0)
        assert rep.B0 == 0 and rep.thresholds["uniqueness_condition"] and rep.thresholds["mixing_condition"]

    def test_single_band_threshold_arithmetic(self):
        cfg = SolverConfig(1.0, 32, 0.01)
        rep = estimate_cstar(cfg, SINGLE, 40.0, every=5)
        assert rep.thresholds["uniqueness_threshold"] == pytest.approx(8 * 16 * 0.02)
        assert rep.thresholds["nu_cubed"] == 1.0
        assert rep.effective_rate == pytest.approx(-0.25 + (12 * rep.mean_h0_sq + 16 * rep.mean_h1_sq) / 1.0)

    def test_scale_covariance(self):
        cfg = SolverConfig(1.0, 8, 0.01)
        r1 = estimate_cstar(cfg, b_profile("zero"), 1.0)
        spec = SINGLE
        t1 = threshold_report(1.0, spec.B0)
        t2 = threshold_report(1.0, spec.scaled(2.0).B0)
        assert t2["uniqueness_threshold"] == pytest.approx(4 * t1["uniqueness_threshold"])
        assert r1.cstar == CSTAR_PROXY


class TestUniqueness:
    def test_identical_data_same_seed(self):
        cfg = SolverConfig(1.0, 16, 0.01)
        w = initial_field("random", 16, {"K": 4}, seed=0)
        rep = uniqueness_probe(cfg, SINGLE, [w, w], 5.0, independent_noise=False)
        for name in rep.observables:
            assert rep.averages[name][0] == rep.averages[name][1]
        assert rep.all_overlap

    def test_needs_two(self):
        with pytest.raises(ConfigurationError):
            uniqueness_probe(SolverConfig(1.0, 8, 0.01), SINGLE, [Field.zeros(8)], 5.0)

    def test_linear_averages_of_w1(self):
        # nonlinearity off: E w1(t) = e^{-nu t} w1(0), so time averages forget the initial value
        nu, T = 1.0, 200.0
        cfg = SolverConfig(nu, 4, 0.02, nonlinearity=False)
        a = Field.from_modes({1: 3.0}, 4)
        b = Field.from_modes({1: -3.0}, 4)
        rep = uniqueness_probe(cfg, SINGLE, [a, b], T, [coefficient(1)], burn_in=20.0, every=5)
        assert rep.all_overlap
        for avg, (lo, hi) in zip(rep.averages["w1"], rep.cis["w1"]):
            assert lo <= 0.0 <= hi or abs(avg) < 0.02

    def test_json(self):
        cfg = SolverConfig(2.0, 8, 0.01)
        rep = uniqueness_probe(cfg, SINGLE, [Field.zeros(8), Field.from_modes({1: 1.0}, 8)], 10.0)
        js = json.loads(json.dumps(rep.to_json()))
        assert set(js["observables"]) == {"H0_sq", "H1_sq", "w1", "w-1", "w2"}


class TestDualLipschitz:
    def test_t0_gap(self):
        cfg = SolverConfig(1.0, 8, 0.01)
        w0 = Field.from_modes({1: 0.7}, 8)
        res = dual_lipschitz_gap(cfg, SINGLE, w0, [0.0, 0.5], [coefficient(1)], n_samples=20, reference_T=50.0)
        mu = res.reference["w1"][0]
        assert res.gap["w1"][0] == pytest.approx(abs(0.7 - mu), rel=1e-12)

    def test_linear_gap_decay(self):
        # nonlinearity off: E w1(t) = e^{-nu t} c exactly; reference mean is 0
        nu, c = 1.0, 2.0
        cfg = SolverConfig(nu, 4, 0.01, nonlinearity=False)
        times = [0.0, 0.5, 1.0, 1.5, 2.0]
        res = dual_lipschitz_gap(cfg, SINGLE, Field.from_modes({1: c}, 4), times, [coefficient(1)],
                                 n_samples=400, reference_T=400.0)
        exact = c * np.exp(-nu * np.array(times))
        assert np.all(np.abs(res.gap["w1"] - exact) <= 4 * res.noise_floor["w1"] + 1e-12)
        assert res.fits["w1"] == pytest.approx(-nu, rel=0.15)

    def test_large_nu_decays_below_floor(self):
        nu = 4.0
        cfg = SolverConfig(nu, 8, 0.01)
        times = [0.0, 1.0, 2.0]
        res = dual_lipschitz_gap(cfg, SINGLE, Field.from_modes({1: 1.0, -2: 0.5}, 8), times,
                                 [coefficient(1), sobolev_sq(0)], n_samples=100, reference_T=200.0)
        for name in ("w1", "H0_sq"):
            assert res.gap[name][-1] <= 2 * res.noise_floor[name][-1]

    def test_not_resolvable(self):
        cfg = SolverConfig(1.0, 4, 0.01)
        res = dual_lipschitz_gap(cfg, SINGLE, Field.zeros(4), [0.0, 0.5, 1.0], [constant(1.0)], n_samples=5,
                                 reference_T=10.0)
        assert res.fits["const1"] == "not resolvable"

    def test_reference_too_short(self):
        with pytest.raises(ConfigurationError):
            dual_lipschitz_gap(SolverConfig(1.0, 4, 0.01), SINGLE, Field.zeros(4), [0.0, 5.0],
                               [constant()], reference_T=6.0)
