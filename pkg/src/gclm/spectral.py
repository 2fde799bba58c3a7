"""
Zero-mean fields on the circle and the deterministic spatial operators.

A :class:`Field` stores real coefficients on the orthonormal basis

    e_k(x) = cos(k x) / sqrt(pi)     (k >= 1)
    e_k(x) = sin(-k x) / sqrt(pi)    (k <= -1)

in signed-index order ``-N, ..., -1, 1, ..., N`` along the last axis, so the
array has length ``2N``. Leading axes are allowed and act as a batch (ensemble)
dimension for every operator in this module.

Internally the complex FFT convention is ``f(x) = sum_k c_k exp(i k x)`` with
``u_k = sqrt(pi) (c_k + c_{-k})`` and ``u_{-k} = i sqrt(pi) (c_k - c_{-k})``
for ``k >= 1``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, NumericalError

SQRT_PI = math.sqrt(math.pi)
MAX_SOBOLEV_INDEX = 8

FIELD_MAGIC = b"GCLM"
FIELD_VERSION = 1
_HEADER = struct.Struct("<4sIII")

# FFT worker count; set through set_fft_workers (CLI --threads).
_FFT_WORKERS = 1


def set_fft_workers(n: int) -> None:
    global _FFT_WORKERS
    _FFT_WORKERS = max(1, int(n))


def wavenumbers(cutoff: int) -> np.ndarray:
    """Signed wavenumbers ``[-N..-1, 1..N]`` in storage order."""
    return np.concatenate([np.arange(-cutoff, 0), np.arange(1, cutoff + 1)])


@dataclass(frozen=True, eq=False)
class Field:
    """Real Fourier coefficients of a zero-mean function (value semantics).

    Parameters
    ----------
    coeffs : array_like, shape (..., 2N)
        Coefficients in signed-index order. The k=0 mode has no slot.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.coeffs, dtype=np.float64, copy=True)
        if arr.ndim == 0 or arr.shape[-1] < 2 or arr.shape[-1] % 2:
            raise ConfigurationError(
                f"coefficient axis must have even length >= 2, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise NumericalError("field has non-finite coefficients")
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    @property
    def cutoff(self) -> int:
        return self.coeffs.shape[-1] // 2

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[:-1]

    @property
    def k(self) -> np.ndarray:
        return wavenumbers(self.cutoff)

    @classmethod
    def zeros(cls, cutoff: int, batch_shape: tuple[int, ...] = ()) -> "Field":
        return cls(np.zeros(batch_shape + (2 * cutoff,)))

    @classmethod
    def from_modes(cls, modes: Mapping[int, float], cutoff: int) -> "Field":
        """Build a field from ``{k: coefficient}``; k=0 is rejected."""
        arr = np.zeros(2 * cutoff)
        for k, value in modes.items():
            arr[mode_index(k, cutoff)] = value
        return cls(arr)

    def mode(self, k: int) -> np.ndarray | float:
        val = self.coeffs[..., mode_index(k, self.cutoff)]
        return float(val) if np.ndim(val) == 0 else val

    def cos_part(self) -> np.ndarray:
        """Coefficients of e_1..e_N (the cosine modes)."""
        return self.coeffs[..., self.cutoff:]

    def sin_part(self) -> np.ndarray:
        """Coefficients of e_{-1}..e_{-N} (the sine modes), ordered by |k|."""
        return self.coeffs[..., self.cutoff - 1::-1]

    def __add__(self, other: "Field") -> "Field":
        _same_cutoff(self, other)
        return Field(self.coeffs + other.coeffs)

    def __sub__(self, other: "Field") -> "Field":
        _same_cutoff(self, other)
        return Field(self.coeffs - other.coeffs)

    def __neg__(self) -> "Field":
        return Field(-self.coeffs)

    def __mul__(self, scalar: float) -> "Field":
        return Field(self.coeffs * scalar)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"Field(cutoff={self.cutoff}, batch_shape={self.batch_shape})"


def mode_index(k: int, cutoff: int) -> int:
    if k == 0 or abs(k) > cutoff:
        raise ConfigurationError(f"mode {k} not representable with cutoff {cutoff}")
    return k + cutoff if k < 0 else k + cutoff - 1


def _same_cutoff(f: Field, g: Field) -> None:
    if f.cutoff != g.cutoff:
        raise ConfigurationError(f"cutoff mismatch: {f.cutoff} vs {g.cutoff}")


def _from_parts(cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
    return np.concatenate([sin[..., ::-1], cos], axis=-1)


def _to_complex(coeffs: np.ndarray) -> np.ndarray:
    """Real layout -> complex coefficients c_0..c_N (c_0 = 0)."""
    n = coeffs.shape[-1] // 2
    a = coeffs[..., n:]
    b = coeffs[..., n - 1::-1]
    c = np.zeros(coeffs.shape[:-1] + (n + 1,), dtype=np.complex128)
    c[..., 1:] = (a - 1j * b) / (2.0 * SQRT_PI)
    return c


def _from_complex(c: np.ndarray, cutoff: int) -> np.ndarray:
    """Complex coefficients c_0.. -> real layout with the given cutoff."""
    cc = c[..., 1:cutoff + 1]
    if cc.shape[-1] < cutoff:
        pad = np.zeros(cc.shape[:-1] + (cutoff - cc.shape[-1],), dtype=cc.dtype)
        cc = np.concatenate([cc, pad], axis=-1)
    a = 2.0 * SQRT_PI * cc.real
    b = -2.0 * SQRT_PI * cc.imag
    return _from_parts(a, b)


# --------------------------------------------------------------------------
# Grid
# --------------------------------------------------------------------------

DEALIAS_RULES = ("two_thirds", "none")


@dataclass(frozen=True)
class GridSpec:
    """Physical grid used for pseudo-spectral products.

    ``physical_points`` (M) samples on [0, 2pi); ``dealias_cutoff`` (K_d) is the
    highest mode kept in a nonlinear product.
    """

    cutoff: int
    physical_points: int
    dealias_cutoff: int
    rule: str = "two_thirds"

    def __post_init__(self):
        problems = grid_violations(self.cutoff, self.physical_points, self.dealias_cutoff, self.rule)
        if problems:
            raise ConfigurationError("; ".join(problems), problems)

    @classmethod
    def for_cutoff(cls, cutoff: int, rule: str = "two_thirds", physical_points: int | None = None) -> "GridSpec":
        """Smallest admissible FFT-friendly grid for the given rule."""
        if rule == "two_thirds":
            kd = (2 * cutoff) // 3
            minimum = 3 * cutoff + 1
        elif rule == "none":
            kd = cutoff
            minimum = 2 * cutoff + 2
        else:
            raise ConfigurationError(f"unknown dealias rule {rule!r}")
        if physical_points is None:
            m = sfft.next_fast_len(minimum, real=True)
            while m % 2:
                m = sfft.next_fast_len(m + 1, real=True)
            physical_points = m
        return cls(cutoff, physical_points, max(kd, 1), rule)

    @property
    def x(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.physical_points) / self.physical_points


def grid_violations(cutoff: int, m: int, kd: int, rule: str = "two_thirds") -> list[str]:
    problems = []
    if cutoff < 1:
        problems.append(f"cutoff N must be a positive integer, got {cutoff}")
    if rule not in DEALIAS_RULES:
        problems.append(f"dealias rule must be one of {DEALIAS_RULES}, got {rule!r}")
    if m % 2:
        problems.append(f"physical_points M must be even, got {m}")
    if m < 2 * cutoff + 2:
        problems.append(f"physical_points M={m} must satisfy M >= 2N+2 = {2 * cutoff + 2}")
    if rule == "two_thirds" and m < 3 * cutoff + 1:
        problems.append(f"2/3 dealiasing needs M >= 3N+1 = {3 * cutoff + 1}, got M={m}")
    if not 1 <= kd <= max(cutoff, 1):
        problems.append(f"dealias_cutoff K_d={kd} must lie in [1, N={cutoff}]")
    return problems


# --------------------------------------------------------------------------
# Transforms
# --------------------------------------------------------------------------

def _irfft_from_complex(c: np.ndarray, m: int) -> np.ndarray:
    n = c.shape[-1] - 1
    spec = np.zeros(c.shape[:-1] + (m // 2 + 1,), dtype=np.complex128)
    spec[..., : n + 1] = c * m
    return sfft.irfft(spec, n=m, axis=-1, workers=_FFT_WORKERS)


def _rfft_to_complex(samples: np.ndarray) -> np.ndarray:
    m = samples.shape[-1]
    return sfft.rfft(samples, axis=-1, workers=_FFT_WORKERS) / m


def to_physical(f: Field, g: GridSpec) -> np.ndarray:
    """Samples ``sum_k f_k e_k(2 pi j / M)`` for j = 0..M-1."""
    if f.cutoff > g.cutoff:
        raise ConfigurationError(f"field cutoff {f.cutoff} exceeds grid cutoff {g.cutoff}")
    return _irfft_from_complex(_to_complex(f.coeffs), g.physical_points)


def to_coefficients(samples, g: GridSpec) -> Field:
    """Coefficients of the zero-mean projection of grid samples (mean discarded)."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[-1] != g.physical_points:
        raise ConfigurationError(
            f"expected {g.physical_points} samples, got {samples.shape[-1]}"
        )
    if not np.all(np.isfinite(samples)):
        raise NumericalError("non-finite samples")
    return Field(_from_complex(_rfft_to_complex(samples), g.cutoff))


# --------------------------------------------------------------------------
# Linear operators
# --------------------------------------------------------------------------

def hilbert(f: Field) -> Field:
    """Hilbert transform: cos(kx) -> sin(kx), sin(kx) -> -cos(kx)."""
    return Field(_from_parts(-f.sin_part(), f.cos_part()))


def derivative(f: Field, order: int = 1) -> Field:
    if order < 0:
        raise ConfigurationError("derivative order must be non-negative")
    a, b = f.cos_part(), f.sin_part()
    kk = np.arange(1, f.cutoff + 1, dtype=np.float64)
    for _ in range(order % 4):
        # d/dx (a cos kx + b sin kx) = k (b cos kx - a sin kx)
        a, b = b, -a
    scale = kk ** order
    return Field(_from_parts(a * scale, b * scale))


def inv_sqrt_laplacian(f: Field) -> Field:
    """(-d^2/dx^2)^(-1/2): divide mode k by |k|."""
    return Field(f.coeffs / np.abs(f.k))


def velocity_from_vorticity(omega: Field) -> Field:
    """Velocity u with u_x = H(omega), i.e. u = -(-d^2/dx^2)^(-1/2) omega."""
    return -inv_sqrt_laplacian(omega)


def sobolev_norm(f: Field, m: int = 0) -> np.ndarray | float:
    """Homogeneous Sobolev norm ``sqrt(sum |k|^{2m} f_k^2)``."""
    return np.sqrt(sobolev_norm_sq(f, m))


def sobolev_norm_sq(f: Field, m: int = 0) -> np.ndarray | float:
    if not 0 <= m <= MAX_SOBOLEV_INDEX:
        raise ConfigurationError(f"Sobolev index must lie in [0, {MAX_SOBOLEV_INDEX}], got {m}")
    return _weighted_sq(f.coeffs, m)


def _weighted_sq(coeffs: np.ndarray, m: int):
    w = np.abs(wavenumbers(coeffs.shape[-1] // 2)).astype(np.float64) ** (2 * m)
    terms = w * coeffs * coeffs
    if m >= 4:
        # |k|^{2m} spans many decades; compensated summation keeps the low modes
        flat = terms.reshape(-1, terms.shape[-1])
        out = np.array([math.fsum(row) for row in flat]).reshape(terms.shape[:-1])
    else:
        out = terms.sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def inner(f: Field, g: Field) -> np.ndarray | float:
    """L2 inner product (orthonormal basis, so a coefficient dot product)."""
    _same_cutoff(f, g)
    out = np.sum(f.coeffs * g.coeffs, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def project(f: Field, n: int) -> Field:
    """Galerkin projection P_n: zero every mode with |k| > n (cutoff kept)."""
    if n < 0:
        raise ConfigurationError("projection cutoff must be non-negative")
    return Field(np.where(np.abs(f.k) <= n, f.coeffs, 0.0))


def resize(f: Field, cutoff: int) -> Field:
    """Change the storage cutoff: truncate or zero-pad."""
    n = f.cutoff
    if cutoff == n:
        return f
    if cutoff < n:
        return Field(f.coeffs[..., n - cutoff: n + cutoff])
    pad = np.zeros(f.batch_shape + (cutoff - n,))
    return Field(np.concatenate([pad, f.coeffs, pad], axis=-1))


# --------------------------------------------------------------------------
# Nonlinear operators
# --------------------------------------------------------------------------

def nonlinear_term_coeffs(coeffs: np.ndarray, a: float, g: GridSpec) -> np.ndarray:
    """Array-level version of :func:`nonlinear_term` (no Field wrapping)."""
    n = coeffs.shape[-1] // 2
    if n > g.cutoff:
        raise ConfigurationError(f"field cutoff {n} exceeds grid cutoff {g.cutoff}")
    c = _to_complex(coeffs)
    kk = np.arange(n + 1, dtype=np.float64)
    inv_k = np.zeros(n + 1)
    inv_k[1:] = 1.0 / kk[1:]
    stacked = np.stack([
        c,               # omega
        1j * kk * c,     # omega_x
        -inv_k * c,      # u
        -1j * c,         # u_x = H(omega), k > 0 half
    ])
    w, wx, u, ux = _irfft_from_complex(stacked, g.physical_points)
    prod = ux * w - a * (u * wx)
    out = _rfft_to_complex(prod)
    keep = min(g.dealias_cutoff, n)
    out[..., keep + 1:] = 0.0
    return _from_complex(out, n)


def nonlinear_term(omega: Field, a: float, g: GridSpec) -> Field:
    """Dealiased B_a(omega) = u_x omega - a u omega_x with u_x = H(omega).

    The right-hand side contribution of the nonlinearity; modes above the
    grid's dealias cutoff are removed and the mean is dropped.
    """
    return Field(nonlinear_term_coeffs(omega.coeffs, a, g))


def product(f: Field, g: Field) -> Field:
    """Alias-free product of two fields (zero-mean part), cutoff f.N + g.N."""
    n = f.cutoff + g.cutoff
    grid = GridSpec.for_cutoff(n, rule="none")
    pf = to_physical(f, grid)
    pg = to_physical(g, grid)
    return to_coefficients(pf * pg, grid)


def lp_norm(f: Field, p: float, oversample: int = 8) -> np.ndarray | float:
    """``(int |f|^p dx)^{1/p}`` by trapezoidal quadrature on a refined grid."""
    m = max(2 * f.cutoff + 2, oversample * 2 * f.cutoff)
    m += m % 2
    grid = GridSpec(f.cutoff, m, f.cutoff, "none")
    vals = np.abs(to_physical(f, grid)) ** p
    out = (2.0 * np.pi * vals.mean(axis=-1)) ** (1.0 / p)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------

def field_to_bytes(f: Field) -> bytes:
    """16-byte header (magic, version, N, reserved) + 2N little-endian float64."""
    if f.coeffs.ndim != 1:
        raise ConfigurationError("only unbatched fields can be serialized")
    return _HEADER.pack(FIELD_MAGIC, FIELD_VERSION, f.cutoff, 0) + f.coeffs.astype("<f8").tobytes()


def field_from_bytes(data: bytes) -> Field:
    if len(data) < _HEADER.size:
        raise ConfigurationError("truncated field header")
    magic, version, n, _ = _HEADER.unpack_from(data)
    if magic != FIELD_MAGIC:
        raise ConfigurationError(f"bad field magic {magic!r}")
    if version != FIELD_VERSION:
        raise ConfigurationError(f"unsupported field version {version}")
    body = data[_HEADER.size:]
    if len(body) != 16 * n:
        raise ConfigurationError(f"field body has {len(body)} bytes, expected {16 * n}")
    return Field(np.frombuffer(body, dtype="<f8").astype(np.float64))


def field_nbytes(cutoff: int) -> int:
    return _HEADER.size + 16 * cutoff
