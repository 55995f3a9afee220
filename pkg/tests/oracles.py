"""Independent oracles used across the test suite.

Every oracle here is computed by a method unrelated to the implementation it
checks: transfer matrices from piecewise-constant freezing instead of Magnus
steps, band edges from a dense Fourier eigenproblem instead of root finding
on the discriminant, ODE reference values from fixed-step RK4 instead of
closed forms.
"""

import cmath

import numpy as np


def slice_transfer_matrix(ufunc, period, energy, slices):
    """Monodromy of -psi'' + u psi = E psi by piecewise-constant freezing.

    The potential is held at its midpoint value on each of `slices` equal
    subintervals and the exact constant-coefficient propagator is multiplied
    up. Second-order accurate in 1/slices.
    """
    h = period / slices
    e = complex(energy)
    m = np.eye(2, dtype=complex)
    mids = (np.arange(slices) + 0.5) * h
    qs = np.asarray(ufunc(mids), dtype=complex) - e
    for q in qs:
        w = cmath.sqrt(q)
        if abs(w) < 1e-12:
            step = np.array([[1.0, h], [q * h, 1.0]], dtype=complex)
        else:
            ch = cmath.cosh(w * h)
            sh = cmath.sinh(w * h)
            step = np.array([[ch, sh / w], [w * sh, ch]], dtype=complex)
        m = step @ m
    return m


def dense_hill_edges(ufourier, period, antiperiodic, n_modes=60):
    """Periodic/antiperiodic eigenvalues of -d^2/dx^2 + u via a Fourier matrix.

    ufourier maps an integer m to the Fourier coefficient of e^{2 pi i m x/T}.
    Periodic eigenvalues are the band edges with Delta = +2, antiperiodic the
    ones with Delta = -2.
    """
    if antiperiodic:
        ks = np.arange(-n_modes, n_modes) + 0.5
    else:
        ks = np.arange(-n_modes, n_modes + 1).astype(float)
    dim = len(ks)
    h = np.zeros((dim, dim), dtype=complex)
    for i in range(dim):
        h[i, i] = (2.0 * np.pi * ks[i] / period) ** 2
        for j in range(dim):
            m = round(ks[i] - ks[j])
            if i != j or m != 0:
                h[i, j] += ufourier(m)
    if np.max(np.abs(h - h.conj().T)) > 1e-12:
        raise ValueError("potential coefficients are not Hermitian")
    return np.sort(np.linalg.eigvalsh(h))


def rk4(f, t0, y0, t1, steps):
    """Classical fixed-step RK4 from t0 to t1; y may be scalar or array."""
    h = (t1 - t0) / steps
    t, y = t0, y0
    for _ in range(steps):
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return y


def free_discriminant(energy, period=2.0 * np.pi):
    """Discriminant of the zero potential: 2 cos(T sqrt(E)), entire in E."""
    return 2.0 * cmath.cos(period * cmath.sqrt(complex(energy)))
