"""Uniform periodic grids, sampled fields, and spectral derivatives.

Everything downstream (Floquet scans, the pseudo-spectral solver, the
verification battery) sits on top of the two small containers defined here:
a PeriodicGrid describing n equispaced nodes on [0, L), and a Field holding
complex samples on such a grid with an explicit realness flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PeriodicGrid:
    """n equispaced nodes x_j = j*length/n on a circle of circumference length."""

    n: int
    length: float

    def __post_init__(self):
        if self.n < 8:
            raise ValueError(f"need n >= 8 nodes, got {self.n}")
        if self.n % 2 != 0:
            raise ValueError(f"n must be even for an unambiguous Nyquist mode, got {self.n}")
        if not (self.length > 0.0 and np.isfinite(self.length)):
            raise ValueError(f"period length must be positive and finite, got {self.length}")

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def nodes(self) -> np.ndarray:
        x = np.arange(self.n) * (self.length / self.n)
        x.setflags(write=False)
        return x

    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers 2*pi*k/L in FFT ordering."""
        return _TWO_PI * np.fft.fftfreq(self.n, d=self.dx)


@dataclass(frozen=True, eq=False)
class Field:
    """Samples of a function on a PeriodicGrid.

    Values are stored complex. ``real=True`` asserts the imaginary parts are
    exactly zero; operations that preserve realness propagate the flag.
    """

    grid: PeriodicGrid
    values: np.ndarray
    real: bool = field(default=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} samples, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field samples must be finite")
        if self.real and np.any(v.imag != 0.0):
            raise ValueError("real flag set but imaginary parts are not exactly zero")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_samples(cls, grid: PeriodicGrid, values) -> "Field":
        """Build a Field, setting the realness flag when all imag parts vanish."""
        v = np.asarray(values, dtype=complex)
        return cls(grid, v, real=bool(np.all(v.imag == 0.0)))

    @classmethod
    def from_function(cls, grid: PeriodicGrid, f: Callable) -> "Field":
        return cls.from_samples(grid, np.asarray(f(grid.nodes), dtype=complex))

    @property
    def real_values(self) -> np.ndarray:
        if not self.real:
            raise ValueError("field is not flagged real")
        return self.values.real


def mean(f: Field) -> complex:
    """Grid average, i.e. the zeroth Fourier coefficient."""
    return complex(np.mean(f.values))


def spectral_derivative(f: Field, order: int = 1) -> Field:
    """order-th derivative by Fourier multiplier (i*2*pi*k/L)^order.

    For odd orders the Nyquist mode has no well-defined sign and is zeroed,
    which keeps derivatives of real fields real.
    """
    if order < 0:
        raise ValueError("derivative order must be >= 0")
    if order == 0:
        return f
    n = f.grid.n
    mult = (1j * f.grid.wavenumbers()) ** order
    if order % 2 == 1:
        mult[n // 2] = 0.0
    out = np.fft.ifft(mult * np.fft.fft(f.values))
    if f.real:
        return Field(f.grid, out.real.astype(complex), real=True)
    return Field(f.grid, out)


def spectral_antiderivative(f: Field) -> Field:
    """Zero-mean antiderivative of a zero-mean field (inverse of spectral_derivative).

    The mean of f is discarded; the returned field has zero mean.
    """
    n = f.grid.n
    k = f.grid.wavenumbers()
    c = np.fft.fft(f.values)
    inv = np.zeros(n, dtype=complex)
    nonzero = k != 0.0
    inv[nonzero] = c[nonzero] / (1j * k[nonzero])
    inv[n // 2] = 0.0
    out = np.fft.ifft(inv)
    if f.real:
        return Field(f.grid, out.real.astype(complex), real=True)
    return Field(f.grid, out)


def _interp_coefficients(f: Field):
    """Fourier coefficients and integer mode numbers with the Nyquist mode split.

    Splitting c_{n/2} evenly between +n/2 and -n/2 keeps the interpolant real
    for real samples and matching the samples at the nodes.
    """
    n = f.grid.n
    c = np.fft.fft(f.values) / n
    modes = np.fft.fftfreq(n, d=1.0 / n)  # integers
    coef = np.concatenate([c, [c[n // 2] / 2.0]])
    coef[n // 2] = c[n // 2] / 2.0
    m = np.concatenate([modes, [n / 2.0]])
    m[n // 2] = -n / 2.0
    return coef, m


def trig_interpolate(f: Field, x):
    """Evaluate the trigonometric interpolant of f at arbitrary points x.

    Exact for band-limited data; at the nodes it reproduces the samples to
    roundoff. Returns a scalar for scalar x, an array otherwise.
    """
    coef, m = _interp_coefficients(f)
    xa = np.asarray(x, dtype=float)
    scalar = xa.ndim == 0
    phase = np.exp((1j * _TWO_PI / f.grid.length) * np.outer(xa.ravel(), m))
    out = phase @ coef
    if f.real:
        out = out.real
    if scalar:
        return out.reshape(())[()]
    return out.reshape(xa.shape)


def trig_interpolant(f: Field, prune: float = 1e-15) -> Callable:
    """Return a fast callable evaluating the interpolant of f.

    Modes with |c_k| below prune * max|c| are dropped; for band-limited
    fields this leaves a handful of terms, which matters inside ODE loops.
    """
    coef, m = _interp_coefficients(f)
    amax = np.max(np.abs(coef))
    if amax > 0.0:
        keep = np.abs(coef) > prune * amax
        coef, m = coef[keep], m[keep]
    w = (1j * _TWO_PI / f.grid.length) * m
    is_real = f.real

    def evaluate(x):
        xa = np.asarray(x, dtype=float)
        if coef.size == 0:
            out = np.zeros(xa.shape, dtype=complex)
        else:
            out = np.exp(np.multiply.outer(xa, w)) @ coef
        if is_real:
            out = out.real
        if xa.ndim == 0:
            return out.reshape(())[()]
        return out

    return evaluate


# 4th-order central difference; h is halved internally by callers that need a
# truncation-order check.
def central_difference(g: Callable, x0: float, h: float | None = None):
    """(-g(x+2h) + 8g(x+h) - 8g(x-h) + g(x-2h)) / (12h).

    g may return scalars or arrays. Default h scales the cube root of machine
    epsilon by the magnitude of x0.
    """
    if h is None:
        h = np.cbrt(np.finfo(float).eps) * max(1.0, abs(x0))
    num = -np.asarray(g(x0 + 2 * h)) + 8 * np.asarray(g(x0 + h)) \
        - 8 * np.asarray(g(x0 - h)) + np.asarray(g(x0 - 2 * h))
    return num / (12.0 * h)


def central_difference_pair(g: Callable, x0: float, h: float):
    """Central differences at steps h and h/2, for truncation-decay checks."""
    return central_difference(g, x0, h), central_difference(g, x0, h / 2.0)
