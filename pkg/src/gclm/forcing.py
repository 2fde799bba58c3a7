"""
Additive forcing xi = sum_k b_k beta_k(t) e_k and its stochastic convolution.

Noise is counter based: the standard normals used at step ``n`` of trajectory
``index`` under master ``seed`` are a pure function of ``(seed, index, n)``.
They come from numpy's Philox4x64 bit generator keyed by ``(seed, index)``
with the step number placed in the third counter word, and are turned into
Gaussians by ``Generator.standard_normal`` (numpy's ziggurat). Sequences are
therefore stable for a fixed numpy release.

Draws always cover the whole forcing support ``|k| <= N_f`` regardless of the
solver cutoff, so runs at different Galerkin cutoffs share one noise path.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .spectral import Field, resize, wavenumbers

PROFILE_KINDS = ("single_band", "power_law", "explicit", "zero")


@dataclass(frozen=True, eq=False)
class ForcingSpec:
    """Mode amplitudes b_k (signed-index layout) plus the profile that made them."""

    b: np.ndarray
    profile: str = "explicit"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        b = np.array(self.b, dtype=np.float64, copy=True)
        if b.ndim != 1 or b.size < 2 or b.size % 2:
            raise ConfigurationError(f"b must be a 1-D array of even length, got shape {b.shape}")
        if not np.all(np.isfinite(b)):
            raise ConfigurationError("forcing amplitudes must be finite")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    @property
    def cutoff(self) -> int:
        return self.b.size // 2

    @property
    def B0(self) -> float:
        return sobolev_sum(self, 0)

    def is_zero(self) -> bool:
        return not np.any(self.b)

    def scaled(self, factor: float) -> "ForcingSpec":
        return ForcingSpec(self.b * factor, self.profile, dict(self.params))

    def amplitudes(self, cutoff: int) -> np.ndarray:
        """b_k resized to a solver cutoff (Galerkin projection of the forcing)."""
        return resize(Field(self.b), cutoff).coeffs


def b_profile(kind: str, params: dict | None = None, n_f: int | None = None,
              required: bool = False) -> ForcingSpec:
    """Build a forcing profile.

    Kinds: ``single_band`` (``beta``; b_{+-1} = beta), ``power_law``
    (``beta, q, K``; b_k = beta |k|^{-q} for |k| <= K), ``explicit``
    (``modes``: mapping k -> b_k) and ``zero``.
    """
    params = dict(params or {})
    if kind == "single_band":
        beta = float(params.get("beta", 0.1))
        n = n_f or 1
        b = np.zeros(2 * n)
        b[n - 1] = b[n] = beta
    elif kind == "power_law":
        try:
            beta, q, kmax = float(params["beta"]), float(params["q"]), int(params["K"])
        except KeyError as exc:
            raise ConfigurationError(f"power_law profile needs parameter {exc.args[0]!r}") from None
        if kmax < 1:
            raise ConfigurationError("power_law needs K >= 1")
        n = n_f or kmax
        if kmax > n:
            raise ConfigurationError(f"power_law K={kmax} exceeds forcing cutoff {n}")
        k = np.abs(wavenumbers(n)).astype(float)
        b = np.where(k <= kmax, beta * k ** (-q), 0.0)
    elif kind == "explicit":
        modes = {int(k): float(v) for k, v in dict(params.get("modes", {})).items()}
        if any(k == 0 for k in modes):
            raise ConfigurationError("forcing cannot act on the k=0 mode")
        n = n_f or max([abs(k) for k in modes] + [1])
        b = np.zeros(2 * n)
        for k, v in modes.items():
            if abs(k) > n:
                raise ConfigurationError(f"explicit mode {k} exceeds forcing cutoff {n}")
            b[k + n if k < 0 else k + n - 1] = v
    elif kind == "zero":
        b = np.zeros(2 * (n_f or 1))
    else:
        raise ConfigurationError(f"unknown forcing profile {kind!r}; expected one of {PROFILE_KINDS}")
    spec = ForcingSpec(b, kind, params)
    if required and spec.is_zero():
        raise ConfigurationError("forcing is required but the profile is identically zero")
    return spec


def sobolev_sum(spec: ForcingSpec, m: float = 0) -> float:
    """B_m = sum |k|^{2m} b_k^2."""
    k = np.abs(wavenumbers(spec.cutoff)).astype(np.float64)
    return float(np.sum(k ** (2 * m) * spec.b ** 2))


def check_smoothness(spec: ForcingSpec, m: int, tail_fraction: float = 0.05) -> list[str]:
    """Warn when B_{m+1} looks like a truncated divergent series.

    The test is heuristic: if the outermost forced shell carries more than
    ``tail_fraction`` of B_{m+1}, refining the forcing cutoff would keep
    increasing it.
    """
    k = np.abs(wavenumbers(spec.cutoff)).astype(np.float64)
    terms = k ** (2 * (m + 1)) * spec.b ** 2
    total = terms.sum()
    messages = []
    if total > 0:
        kmax = k[spec.b != 0].max()
        tail = terms[k == kmax].sum()
        if kmax > 1 and tail > tail_fraction * total:
            messages.append(
                f"B_{m + 1} is dominated by the outermost forced shell |k|={int(kmax)} "
                f"({tail / total:.0%}); the profile may not satisfy B_(m*) < inf for m*={m + 1}"
            )
    for msg in messages:
        warnings.warn(msg, stacklevel=2)
    return messages


# --------------------------------------------------------------------------
# Noise streams
# --------------------------------------------------------------------------

@dataclass
class NoiseStream:
    """Single-owner handle on a counter-based Gaussian stream."""

    seed: int
    index: int = 0
    counter: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        if self.index < 0 or self.counter < 0:
            raise ConfigurationError("stream index and counter must be non-negative")
        self._key = np.random.SeedSequence([int(self.seed), int(self.index)]).generate_state(2, np.uint64)

    def normals_at(self, counter: int, n: int) -> np.ndarray:
        """The n standard normals of block ``counter`` (does not advance)."""
        bg = np.random.Philox(key=self._key, counter=[0, 0, int(counter), 0])
        return np.random.Generator(bg).standard_normal(n)

    def draw(self, n: int) -> np.ndarray:
        out = self.normals_at(self.counter, n)
        self.counter += 1
        return out

    def fork(self, index: int) -> "NoiseStream":
        """Independent stream for another trajectory under the same seed."""
        return NoiseStream(self.seed, index, 0)

    def copy(self) -> "NoiseStream":
        return NoiseStream(self.seed, self.index, self.counter)

    def position(self) -> tuple[int, int, int]:
        return (self.seed, self.index, self.counter)


def standard_normals(spec: ForcingSpec, stream: NoiseStream) -> np.ndarray:
    """One block of standard normals over the forcing support (advances the stream)."""
    return stream.draw(2 * spec.cutoff)


def sample_increment(spec: ForcingSpec, dt: float, stream: NoiseStream) -> Field:
    """Brownian increment of xi over dt: mode k ~ N(0, b_k^2 dt)."""
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    zeta = standard_normals(spec, stream)
    return Field(spec.b * np.sqrt(dt) * zeta)


# --------------------------------------------------------------------------
# Ornstein-Uhlenbeck (stochastic heat equation) per mode
# --------------------------------------------------------------------------

def heat_decay(k: np.ndarray, nu: float, dt: float) -> np.ndarray:
    """exp(-nu k^2 dt), the heat semigroup multiplier."""
    return np.exp(-nu * np.asarray(k, dtype=np.float64) ** 2 * dt)


def ou_noise_std(k: np.ndarray, nu: float, dt: float) -> np.ndarray:
    """sqrt(int_0^dt exp(-2 nu k^2 s) ds); reduces to sqrt(dt) for nu = 0."""
    x = 2.0 * nu * np.asarray(k, dtype=np.float64) ** 2 * dt
    safe = np.where(x > 0, x, 1.0)
    return np.sqrt(np.where(x > 0, -np.expm1(-safe) / safe, 1.0) * dt)


def stationary_ou_variance(spec: ForcingSpec, nu: float) -> np.ndarray:
    """b_k^2 / (2 nu k^2), per mode."""
    k = wavenumbers(spec.cutoff).astype(np.float64)
    return spec.b ** 2 / (2.0 * nu * k ** 2)


def ou_mean_sobolev_sq(spec: ForcingSpec, nu: float, t: float, m: int = 0) -> float:
    """E||v(t)||^2_{H^m} = sum |k|^{2m} b_k^2 (1 - exp(-2 nu k^2 t)) / (2 nu k^2)."""
    k = np.abs(wavenumbers(spec.cutoff)).astype(np.float64)
    return float(np.sum(k ** (2 * m) * spec.b ** 2 * -np.expm1(-2 * nu * k ** 2 * t) / (2 * nu * k ** 2)))


@dataclass(frozen=True)
class OUState:
    """Stochastic convolution v(t) = int_0^t exp(nu (t-s) d_xx) dxi(s)."""

    v: Field
    t: float = 0.0

    @classmethod
    def initial(cls, cutoff: int) -> "OUState":
        return cls(Field.zeros(cutoff), 0.0)


def ou_exact_step(state: OUState, spec: ForcingSpec, nu: float, dt: float,
                  stream: NoiseStream) -> OUState:
    """Advance v by dt, exact in law for every dt.

    v_k <- exp(-nu k^2 dt) v_k + b_k sqrt((1 - exp(-2 nu k^2 dt)) / (2 nu k^2)) zeta_k
    """
    if nu <= 0:
        raise ConfigurationError(f"viscosity must be positive for the OU update, got {nu}")
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    n = state.v.cutoff
    k = wavenumbers(n)
    zeta = resize(Field(standard_normals(spec, stream)), n).coeffs
    b = spec.amplitudes(n)
    v = heat_decay(k, nu, dt) * state.v.coeffs + b * ou_noise_std(k, nu, dt) * zeta
    return OUState(Field(v), state.t + dt)
