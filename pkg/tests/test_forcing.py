from __future__ import annotations

import math
import warnings

import numpy as np
import pytest

from gclm.errors import ConfigurationError
from gclm.forcing import (
    ForcingSpec,
    NoiseStream,
    OUState,
    b_profile,
    check_smoothness,
    heat_decay,
    ou_exact_step,
    ou_mean_sobolev_sq,
    ou_noise_std,
    sample_increment,
    sobolev_sum,
    stationary_ou_variance,
)
from gclm.spectral import Field, wavenumbers


class TestProfiles:
    def test_single_band_B0(self):
        assert b_profile("single_band", {"beta": 0.1}).B0 == pytest.approx(0.02, rel=1e-15)

    @pytest.mark.parametrize("m", range(6))
    def test_single_band_Bm(self, m):
        assert sobolev_sum(b_profile("single_band", {"beta": 0.3}), m) == pytest.approx(2 * 0.09, rel=1e-15)

    def test_power_law_B0(self):
        spec = b_profile("power_law", {"beta": 1.0, "q": 2.0, "K": 3})
        assert spec.B0 == pytest.approx(2 * (1 + 1 / 16 + 1 / 81), rel=1e-15)

    def test_power_law_B1(self):
        spec = b_profile("power_law", {"beta": 1.0, "q": 1.0, "K": 4})
        assert sobolev_sum(spec, 1) == pytest.approx(8.0, rel=1e-15)

    def test_power_law_values(self):
        spec = b_profile("power_law", {"beta": 2.0, "q": 1.5, "K": 3}, n_f=5)
        k = np.abs(wavenumbers(5))
        expected = np.where(k <= 3, 2.0 * k ** -1.5, 0.0)
        np.testing.assert_allclose(spec.b, expected, rtol=1e-15)

    def test_zero(self):
        spec = b_profile("zero")
        assert spec.is_zero() and sobolev_sum(spec, 0) == 0.0

    def test_required_but_zero(self):
        with pytest.raises(ConfigurationError):
            b_profile("zero", required=True)

    def test_explicit(self):
        spec = b_profile("explicit", {"modes": {2: 0.5, -1: 0.25}})
        assert spec.cutoff == 2
        assert spec.B0 == pytest.approx(0.25 + 0.0625)

    @pytest.mark.parametrize("kind,params", [
        ("nope", {}), ("power_law", {"beta": 1.0}), ("power_law", {"beta": 1, "q": 1, "K": 0}),
        ("explicit", {"modes": {0: 1.0}}),
    ])
    def test_invalid(self, kind, params):
        with pytest.raises(ConfigurationError):
            b_profile(kind, params)

    def test_spec_validation(self):
        with pytest.raises(ConfigurationError):
            ForcingSpec(np.zeros(3))
        with pytest.raises(ConfigurationError):
            ForcingSpec(np.array([np.nan, 1.0]))

    def test_scaling_quadruples_B0(self):
        spec = b_profile("power_law", {"beta": 0.3, "q": 1.0, "K": 5})
        assert spec.scaled(2.0).B0 == pytest.approx(4 * spec.B0, rel=1e-14)

    def test_amplitudes_resize(self):
        spec = b_profile("power_law", {"beta": 1.0, "q": 1.0, "K": 4})
        b2 = spec.amplitudes(2)
        np.testing.assert_allclose(b2, [0.5, 1.0, 1.0, 0.5])
        assert spec.amplitudes(6).size == 12


def test_smoothness_warning():
    rough = b_profile("power_law", {"beta": 1.0, "q": 0.0, "K": 8})
    with pytest.warns(UserWarning, match="outermost"):
        check_smoothness(rough, 1)
    smooth = b_profile("power_law", {"beta": 1.0, "q": 4.0, "K": 8})
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert check_smoothness(smooth, 1) == []


class TestNoiseStream:
    def test_reproducible(self):
        a, b = NoiseStream(42, 3), NoiseStream(42, 3)
        for _ in range(5):
            np.testing.assert_array_equal(a.draw(7), b.draw(7))

    def test_counter_addressable(self):
        s = NoiseStream(5, 1)
        draws = [s.draw(4) for _ in range(4)]
        np.testing.assert_array_equal(NoiseStream(5, 1).normals_at(2, 4), draws[2])
        assert s.position() == (5, 1, 4)

    def test_restart_from_position(self):
        s = NoiseStream(9)
        s.draw(3)
        s.draw(3)
        t = NoiseStream(9, 0, 2)
        np.testing.assert_array_equal(s.draw(3), t.draw(3))

    def test_indices_and_seeds_differ(self):
        base = NoiseStream(1, 0).draw(16)
        assert not np.array_equal(base, NoiseStream(1, 1).draw(16))
        assert not np.array_equal(base, NoiseStream(2, 0).draw(16))

    def test_prefix_consistency(self):
        # a wider block starts with the narrower block: cutoff-independent paths
        s = NoiseStream(3)
        np.testing.assert_array_equal(s.normals_at(0, 10)[:4], s.normals_at(0, 4))

    def test_fork_copy(self):
        s = NoiseStream(7, 0)
        s.draw(2)
        c = s.copy()
        np.testing.assert_array_equal(c.draw(2), s.draw(2))
        assert s.fork(5).position() == (7, 5, 0)

    def test_invalid(self):
        with pytest.raises(ConfigurationError):
            NoiseStream(-1)
        with pytest.raises(ConfigurationError):
            NoiseStream(0, -1)

    def test_standard_normal_moments(self):
        s = NoiseStream(123)
        z = np.concatenate([s.draw(1000) for _ in range(100)])
        assert abs(z.mean()) < 4 / math.sqrt(z.size)
        assert abs(z.var() - 1) < 4 * math.sqrt(2 / z.size)


class TestIncrements:
    def test_zero_profile(self):
        inc = sample_increment(b_profile("zero", n_f=3), 0.1, NoiseStream(0))
        assert np.all(inc.coeffs == 0)

    def test_advances_counter(self):
        s = NoiseStream(0)
        sample_increment(b_profile("single_band"), 0.1, s)
        assert s.counter == 1

    def test_moments(self):
        spec = b_profile("power_law", {"beta": 1.0, "q": 1.0, "K": 3})
        dt, n = 0.05, 10_000
        s = NoiseStream(77)
        X = np.array([sample_increment(spec, dt, s).coeffs for _ in range(n)])
        var = spec.b ** 2 * dt
        se_mean = np.sqrt(var / n)
        assert np.all(np.abs(X.mean(axis=0)) <= 4 * se_mean)
        assert np.all(np.abs(X.var(axis=0) / var - 1) <= 0.10)

    def test_dt_positive(self):
        with pytest.raises(ConfigurationError):
            sample_increment(b_profile("single_band"), 0.0, NoiseStream(0))


class TestOU:
    def test_noise_std_limits(self):
        k = np.array([1.0, 2.0])
        np.testing.assert_allclose(ou_noise_std(k, 0.0, 0.3), math.sqrt(0.3))
        # tiny argument: close to sqrt(dt)
        np.testing.assert_allclose(ou_noise_std(k, 1e-14, 0.3), math.sqrt(0.3), rtol=1e-12)
        x = 2 * 1.0 * 4 * 0.3
        assert ou_noise_std(np.array([2.0]), 1.0, 0.3)[0] == pytest.approx(math.sqrt((1 - math.exp(-x)) / 8))

    def test_pure_decay(self):
        v0 = Field(np.arange(1.0, 7.0))
        st = ou_exact_step(OUState(v0), b_profile("zero", n_f=3), 0.5, 0.1, NoiseStream(0))
        np.testing.assert_allclose(st.v.coeffs, np.exp(-0.5 * wavenumbers(3) ** 2 * 0.1) * v0.coeffs, rtol=1e-15)
        assert st.t == pytest.approx(0.1)

    def test_small_dt_identity(self):
        v0 = Field(np.arange(1.0, 5.0))
        st = ou_exact_step(OUState(v0), b_profile("single_band", {"beta": 0.1}, n_f=2), 1.0, 1e-14, NoiseStream(0))
        np.testing.assert_allclose(st.v.coeffs, v0.coeffs, atol=1e-6)

    def test_nonpositive_viscosity(self):
        with pytest.raises(ConfigurationError):
            ou_exact_step(OUState.initial(2), b_profile("single_band"), 0.0, 0.1, NoiseStream(0))

    def test_initial_zero(self):
        st = OUState.initial(4)
        assert st.t == 0 and np.all(st.v.coeffs == 0)

    def test_stationary_variance(self):
        nu, dt = 1.0, 0.05
        spec = b_profile("power_law", {"beta": 0.5, "q": 1.0, "K": 3})
        st, s = OUState.initial(3), NoiseStream(2024)
        X = np.empty((11_000, 6))
        for i in range(X.shape[0]):
            st = ou_exact_step(st, spec, nu, dt, s)
            X[i] = st.v.coeffs
        target = stationary_ou_variance(spec, nu)
        np.testing.assert_allclose(target, spec.b ** 2 / (2 * nu * wavenumbers(3) ** 2.0))
        assert np.all(np.abs(X[1000:].var(axis=0) / target - 1) <= 0.10)

    def test_split_step_equality_in_law(self):
        # one step of dt vs two steps of dt/2 from the same nonzero start, 2e4 samples
        nu, dt, n = 0.7, 0.4, 20_000
        spec = b_profile("power_law", {"beta": 1.0, "q": 1.0, "K": 3})
        v0 = Field(np.array([0.3, -0.2, 0.5, 1.0, -0.4, 0.2]))
        k = wavenumbers(3).astype(float)
        one = np.empty((n, 6))
        two = np.empty((n, 6))
        s1, s2 = NoiseStream(1), NoiseStream(2)
        for i in range(n):
            one[i] = ou_exact_step(OUState(v0), spec, nu, dt, s1).v.coeffs
            half = ou_exact_step(OUState(v0), spec, nu, dt / 2, s2)
            two[i] = ou_exact_step(half, spec, nu, dt / 2, s2).v.coeffs
        se_mean = np.sqrt(one.var(axis=0) / n + two.var(axis=0) / n)
        assert np.all(np.abs(one.mean(axis=0) - two.mean(axis=0)) <= 5 * se_mean)
        var1, var2 = one.var(axis=0, ddof=1), two.var(axis=0, ddof=1)
        se_var = np.sqrt(2 * var1 ** 2 / (n - 1) + 2 * var2 ** 2 / (n - 1))
        assert np.all(np.abs(var1 - var2) <= 5 * se_var)
        # and both match the closed form
        exact_var = spec.b ** 2 * (1 - np.exp(-2 * nu * k ** 2 * dt)) / (2 * nu * k ** 2)
        assert np.all(np.abs(var1 / exact_var - 1) <= 0.05)

    def test_mean_sobolev_formula(self):
        nu, t, m = 0.8, 0.6, 1
        spec = b_profile("power_law", {"beta": 1.0, "q": 1.0, "K": 3})
        n = 5000
        total = 0.0
        for r in range(n):
            s = NoiseStream(9, r)
            st = OUState.initial(3)
            for _ in range(6):
                st = ou_exact_step(st, spec, nu, t / 6, s)
            total += float(np.sum(wavenumbers(3).astype(float) ** 2 * st.v.coeffs ** 2))
        mc = total / n
        assert abs(mc / ou_mean_sobolev_sq(spec, nu, t, m) - 1) <= 0.10

    def test_heat_decay(self):
        np.testing.assert_allclose(heat_decay(np.array([1, 2]), 0.5, 2.0), np.exp([-1.0, -4.0]))
