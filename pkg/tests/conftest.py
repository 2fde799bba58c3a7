"""Shared oracles: direct (FFT-free) evaluation of the real Fourier basis."""

from __future__ import annotations

import numpy as np
import pytest

SQRT_PI = np.sqrt(np.pi)


def basis(k: int, x: np.ndarray) -> np.ndarray:
    """e_k(x): cos(kx)/sqrt(pi) for k >= 1, sin(|k|x)/sqrt(pi) for k <= -1."""
    return (np.cos(k * x) if k > 0 else np.sin(-k * x)) / SQRT_PI


def signed_modes(N: int) -> list[int]:
    return list(range(-N, 0)) + list(range(1, N + 1))


def direct_eval(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """sum_k c_k e_k(x) by explicit O(N M) summation."""
    N = coeffs.size // 2
    return sum(c * basis(k, x) for k, c in zip(signed_modes(N), coeffs))


def direct_project(samples: np.ndarray, x: np.ndarray, N: int) -> np.ndarray:
    """<f, e_k> by the rectangle rule on a uniform grid (exact for trig polynomials)."""
    h = 2 * np.pi / x.size
    return np.array([h * np.sum(samples * basis(k, x)) for k in signed_modes(N)])


def uniform_grid(M: int) -> np.ndarray:
    return 2 * np.pi * np.arange(M) / M


def random_coeffs(rng: np.random.Generator, N: int, band: int | None = None) -> np.ndarray:
    c = rng.standard_normal(2 * N)
    if band is not None:
        k = np.abs(np.array(signed_modes(N)))
        c[k > band] = 0.0
    return c


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# acceptance verdicts: test_acceptance.py appends (criterion, passed, detail)
ACCEPTANCE: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(ACCEPTANCE, key=lambda r: int(r[0].split()[0])):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
