"""Genus-zero Baker-Akhiezer machinery for glued double points on the sphere.

A rational curve carries N pairs of marked points (R+_k, R-_k) glued by
weights tau_k. The wave function

    psi(lambda) = E(lambda) (1 + sum_j a_j / (lambda - R+_j)),
    E(lambda) = exp(sum_m lambda^m t_m),

is fixed by the residue conditions res_{R+_k} psi dlambda = tau_k psi(R-_k);
ungluing a pair (tau_k = 0) removes its pole. The conjugate 1-form
psi*(lambda) dlambda carries poles at R-_j, inverted exponentials, and
mirrored residue conditions with weight -tau_k. The induced potential is
u = 2 d_x chi1 with chi1 = sum_j a_j, and the pair (psi, psi*) builds a
Cauchy-type kernel omega(lambda, mu) = int_x^{sigma inf} psi(lambda, x')
psi*(mu, x') dx' that expresses derivatives of psi and u in the gluing
weights.

All derivative identities are verified with analytic differentiation of the
defining linear system as the primary route and finite differences as the
independent cross-check. Row equilibration keeps the linear systems well
scaled even when the exponential weights tau_k E-ratio overflow a double.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

from .grid import central_difference

COND_LIMIT = 1e12
MIN_SEPARATION = 1e-8
POLE_TOL = 1e-10
DIRECTION_TOL = 1e-8
# beyond this log-magnitude the row weight tau_k * E-ratio is handled in log form
_LOG_HUGE = 600.0


class SingularBASystem(RuntimeError):
    """The residue-condition linear system is numerically singular."""


class PoleAtMarkedPoint(ValueError):
    """Evaluation point coincides with a pole of the wave function."""


class NonConvergentDirection(ValueError):
    """Neither half-line gives a convergent kernel integral."""


class NotKdVSymmetric(ValueError):
    """Operation requires mirror-symmetric spectral data with odd times only."""


@dataclass(frozen=True)
class SpectralDataG0:
    """N glued double points (R+_k, R-_k) on the rational curve.

    All 2N marked points must be pairwise distinct (separation at least
    1e-8). With ``kdv_symmetric`` the pairs are exact mirrors (-kappa_k,
    kappa_k) with kappa_k real positive.
    """

    pairs: tuple[tuple[complex, complex], ...]
    kdv_symmetric: bool = False

    def __post_init__(self):
        pairs = tuple((complex(p), complex(m)) for p, m in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        points = [z for pair in pairs for z in pair]
        for i in range(len(points)):
            for j in range(i + 1, len(points)):
                if abs(points[i] - points[j]) < MIN_SEPARATION:
                    raise ValueError(
                        f"marked points {points[i]} and {points[j]} are closer "
                        f"than the minimum separation {MIN_SEPARATION}")
        if self.kdv_symmetric:
            for p, m in pairs:
                if p != -m or m.imag != 0.0 or m.real <= 0.0:
                    raise ValueError(
                        "mirror symmetry requires pairs (-kappa, kappa) with "
                        f"kappa real positive, got ({p}, {m})")

    @classmethod
    def kdv(cls, kappas: Sequence[float]) -> "SpectralDataG0":
        """Mirror-symmetric data (-kappa_k, kappa_k)."""
        return cls(tuple((complex(-k), complex(k)) for k in kappas), True)

    @property
    def n(self) -> int:
        return len(self.pairs)

    @property
    def r_plus(self) -> tuple[complex, ...]:
        return tuple(p for p, _ in self.pairs)

    @property
    def r_minus(self) -> tuple[complex, ...]:
        return tuple(m for _, m in self.pairs)


@dataclass(frozen=True)
class TimePoint:
    """Hierarchy times (t1=x, t2=y, t3, ...) and gluing weights tau_1..tau_N."""

    times: tuple[float, ...]
    taus: tuple[complex, ...] = ()

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if not times:
            raise ValueError("at least the spatial time t1 must be present")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "taus", tuple(complex(t) for t in self.taus))

    @property
    def x(self) -> float:
        return self.times[0]

    def with_time(self, index: int, value: float) -> "TimePoint":
        """Replace times[index] (0-based; index 0 is x). Extends with zeros."""
        times = list(self.times)
        while len(times) <= index:
            times.append(0.0)
        times[index] = float(value)
        return TimePoint(tuple(times), self.taus)

    def with_x(self, value: float) -> "TimePoint":
        return self.with_time(0, value)

    def with_tau(self, index: int, value: complex) -> "TimePoint":
        taus = list(self.taus)
        taus[index] = complex(value)
        return TimePoint(self.times, tuple(taus))


@dataclass(frozen=True)
class BAEvaluation:
    """Partial-fraction coefficients of psi at one time point."""

    a: tuple[complex, ...]
    chi1: complex
    condition_number: float


@dataclass(frozen=True)
class ConjugateBAEvaluation:
    """Partial-fraction coefficients of the conjugate form psi* dlambda."""

    b: tuple[complex, ...]
    condition_number: float


@dataclass(frozen=True)
class CBASample:
    """One evaluation of the Cauchy-type kernel, dmu factor stripped."""

    lambda_: complex
    mu: complex
    omega_over_dmu: complex
    convergence_direction: float  # +inf or -inf


def _phase(lam: complex, times: Sequence[float]) -> complex:
    """sum_m lambda^m t_m over the active times."""
    total = 0.0j
    power = 1.0 + 0.0j
    for t in times:
        power *= lam
        if t != 0.0:
            total += t * power
    return total


class _Assembled:
    """Row-equilibrated residue-condition systems at one time point.

    Both the direct system (coefficients a, Cauchy kernel 1/(R-_k - R+_j))
    and the conjugate one (coefficients b, kernel 1/(R+_k - R-_j)) share the
    row weights f_k = tau_k exp(d_k) with d_k the E-ratio exponent. Rows are
    scaled by 1/max(1, |f_k|), computed in log form when f_k overflows, so
    the equilibrated matrices stay finite for arbitrarily large |x|.
    """

    def __init__(self, data: SpectralDataG0, tp: TimePoint):
        n = data.n
        if len(tp.taus) != n:
            raise ValueError(f"expected {n} gluing weights, got {len(tp.taus)}")
        self.n = n
        self.r_plus = np.array(data.r_plus, dtype=complex)
        self.r_minus = np.array(data.r_minus, dtype=complex)
        self.d1 = self.r_minus - self.r_plus
        self.exponents = np.array(
            [_phase(m, tp.times) - _phase(p, tp.times) for p, m in data.pairs],
            dtype=complex)
        f_over_w = np.zeros(n, dtype=complex)
        inv_w = np.ones(n)
        for k, tau in enumerate(tp.taus):
            if tau == 0:
                continue
            log_mag = self.exponents[k].real + math.log(abs(tau))
            if log_mag <= _LOG_HUGE:
                f = tau * cmath.exp(self.exponents[k])
                w = max(1.0, abs(f))
                f_over_w[k] = f / w
                inv_w[k] = 1.0 / w
            else:
                f_over_w[k] = (tau / abs(tau)) * cmath.exp(1j * self.exponents[k].imag)
                inv_w[k] = math.exp(-log_mag) if log_mag < 745.0 else 0.0
        self.f_over_w = f_over_w
        self.inv_w = inv_w
        if n:
            m_direct = 1.0 / (self.r_minus[:, None] - self.r_plus[None, :])
            m_conj = 1.0 / (self.r_plus[:, None] - self.r_minus[None, :])
            self.mat_direct = np.diag(inv_w) - f_over_w[:, None] * m_direct
            self.mat_conj = np.diag(inv_w) + f_over_w[:, None] * m_conj
            with np.errstate(divide="ignore", invalid="ignore"):
                self.cond_direct = float(np.linalg.cond(self.mat_direct))
                self.cond_conj = float(np.linalg.cond(self.mat_conj))
        else:
            self.mat_direct = np.zeros((0, 0), dtype=complex)
            self.mat_conj = np.zeros((0, 0), dtype=complex)
            self.cond_direct = 1.0
            self.cond_conj = 1.0

    def _solve(self, mat: np.ndarray, cond: float, rhs_scaled: np.ndarray) -> np.ndarray:
        if self.n == 0:
            return np.zeros(0, dtype=complex)
        if not math.isfinite(cond) or cond > COND_LIMIT:
            raise SingularBASystem(
                f"residue-condition system has condition number {cond:.3e} "
                f"(limit {COND_LIMIT:.0e})")
        return np.linalg.solve(mat, rhs_scaled)

    def solve_direct(self, raw_rhs: np.ndarray | None = None) -> np.ndarray:
        """Solve A y = rhs; default rhs is the residue-condition one (y = a)."""
        rhs = self.f_over_w if raw_rhs is None else raw_rhs * self.inv_w
        return self._solve(self.mat_direct, self.cond_direct, rhs)

    def solve_conjugate(self, raw_rhs: np.ndarray | None = None) -> np.ndarray:
        rhs = -self.f_over_w if raw_rhs is None else raw_rhs * self.inv_w
        return self._solve(self.mat_conj, self.cond_conj, rhs)


def solve_ba(data: SpectralDataG0, tp: TimePoint) -> BAEvaluation:
    """Coefficients a_j of psi from the N residue conditions."""
    sysm = _Assembled(data, tp)
    a = sysm.solve_direct()
    return BAEvaluation(tuple(map(complex, a)), complex(np.sum(a)), sysm.cond_direct)


def solve_ba_conjugate(data: SpectralDataG0, tp: TimePoint) -> ConjugateBAEvaluation:
    """Coefficients b_j of the conjugate form from the mirrored conditions."""
    sysm = _Assembled(data, tp)
    b = sysm.solve_conjugate()
    return ConjugateBAEvaluation(tuple(map(complex, b)), sysm.cond_conj)


def _reduced(lam: complex, coeffs: np.ndarray, poles: np.ndarray) -> complex:
    """1 + sum_j coeffs_j/(lam - poles_j), guarding the poles."""
    for pole in poles:
        if abs(lam - pole) <= POLE_TOL * max(1.0, abs(pole)):
            raise PoleAtMarkedPoint(f"evaluation point {lam} sits at the pole {pole}")
    if len(poles) == 0:
        return 1.0 + 0.0j
    return complex(1.0 + np.sum(np.asarray(coeffs) / (lam - poles)))


def eval_psi_reduced(data: SpectralDataG0, tp: TimePoint, lam: complex) -> complex:
    """The rational factor psi(lambda) / E(lambda); finite for any |lambda|."""
    sysm = _Assembled(data, tp)
    return _reduced(complex(lam), sysm.solve_direct(), sysm.r_plus)


def eval_psi_star_reduced(data: SpectralDataG0, tp: TimePoint, lam: complex) -> complex:
    """The rational factor of psi*, i.e. psi*(lambda) * E(lambda)."""
    sysm = _Assembled(data, tp)
    return _reduced(complex(lam), sysm.solve_conjugate(), sysm.r_minus)


def eval_psi(data: SpectralDataG0, tp: TimePoint, lam: complex) -> complex:
    """psi(lambda) = E(lambda)(1 + sum_j a_j/(lambda - R+_j))."""
    lam = complex(lam)
    return cmath.exp(_phase(lam, tp.times)) * eval_psi_reduced(data, tp, lam)


def eval_psi_star(data: SpectralDataG0, tp: TimePoint, lam: complex) -> complex:
    """psi*(lambda) with the dlambda factor stripped."""
    lam = complex(lam)
    return cmath.exp(-_phase(lam, tp.times)) * eval_psi_star_reduced(data, tp, lam)


def potential_u(data: SpectralDataG0, tp: TimePoint) -> complex:
    """u = 2 d_x chi1, with d_x computed analytically.

    Differentiating the residue-condition system A a = r in x collapses to
    A a_x = d1 * a (elementwise), where d1_k = R-_k - R+_k; real for
    mirror-symmetric data with real weights.
    """
    sysm = _Assembled(data, tp)
    a = sysm.solve_direct()
    a_x = sysm.solve_direct(sysm.d1 * a)
    return complex(2.0 * np.sum(a_x))


# ---------------------------------------------------------------------------
# Cauchy-type kernel
# ---------------------------------------------------------------------------

def _pair_product(data: SpectralDataG0, tp: TimePoint, lam: complex,
                  mu: complex, x: float) -> complex:
    """psi(lambda, x) psi*(mu, x) with the exponentials combined first."""
    tpp = tp.with_x(x)
    sysm = _Assembled(data, tpp)
    red = _reduced(lam, sysm.solve_direct(), sysm.r_plus) \
        * _reduced(mu, sysm.solve_conjugate(), sysm.r_minus)
    return cmath.exp(_phase(lam, tpp.times) - _phase(mu, tpp.times)) * red


def cba_kernel(data: SpectralDataG0, tp: TimePoint, lam: complex,
               mu: complex) -> CBASample:
    """omega(lambda, mu) = int_x^{sigma inf} psi(lambda) psi*(mu) dx'.

    The half-line sigma is the one where Re(lambda - mu) makes the integrand
    decay; the quadrature stops at X_max where the exponential envelope is
    below 1e-12 of the leading scale and the remaining tail is added in
    closed form from the pure-exponential approximation there.
    """
    lam, mu = complex(lam), complex(mu)
    if any(t != 0.0 for t in tp.times[2:]):
        raise ValueError("kernel quadrature supports only t1 (and t2) active")
    gamma = (lam - mu).real
    if abs(gamma) < DIRECTION_TOL:
        raise NonConvergentDirection(
            f"Re(lambda - mu) = {gamma:.3e}; neither half-line converges")
    sigma = 1.0 if gamma < 0 else -1.0
    x0 = tp.times[0]
    rates = [abs((m - p).real) for p, m in data.pairs]
    settle = max((45.0 / r for r in rates if r > 1e-3), default=0.0)
    x_far = x0 + sigma * (45.0 / abs(gamma) + settle)

    def integrand(x: float) -> complex:
        return _pair_product(data, tp, lam, mu, x)

    re_part = quad(lambda s: integrand(s).real, x0, x_far,
                   limit=300, epsabs=1e-13, epsrel=1e-12)[0]
    im_part = quad(lambda s: integrand(s).imag, x0, x_far,
                   limit=300, epsabs=1e-13, epsrel=1e-12)[0]
    tail = integrand(x_far) / (mu - lam)
    omega = re_part + 1j * im_part + tail
    return CBASample(lam, mu, complex(omega), math.inf * sigma)


def verify_deromega(data: SpectralDataG0, tp: TimePoint, lam: complex,
                    mu: complex, h: float = 1e-3) -> float:
    """|d_x omega(lambda, mu) + psi(lambda, x) psi*(mu, x)| at tp."""
    x0 = tp.times[0]
    fd = central_difference(
        lambda xv: cba_kernel(data, tp.with_x(xv), lam, mu).omega_over_dmu, x0, h)
    product = eval_psi(data, tp, lam) * eval_psi_star(data, tp, mu)
    return float(abs(complex(fd) + product))


def verify_dpsi(data: SpectralDataG0, tp: TimePoint, k: int, lam: complex,
                h: float | None = None) -> float:
    """Residual of d_{tau_k} psi(lambda) = -omega(lambda, R+_k) psi(R-_k).

    The left side is a 4th-order finite difference in tau_k; the right side
    combines the kernel at mu = R+_k with psi at R-_k.
    """
    lam = complex(lam)
    tau_k = tp.taus[k]
    if h is None:
        h = 5e-3 * max(1.0, abs(tau_k))
    fd = central_difference(
        lambda tv: eval_psi(data, tp.with_tau(k, tv), lam), tau_k, h)
    r_plus_k, r_minus_k = data.pairs[k]
    omega = cba_kernel(data, tp, lam, r_plus_k).omega_over_dmu
    rhs = -omega * eval_psi(data, tp, r_minus_k)
    return float(abs(complex(fd) - rhs))


# ---------------------------------------------------------------------------
# Derivatives of u in the gluing weights
# ---------------------------------------------------------------------------

def _tauder1_rhs(data: SpectralDataG0, tp: TimePoint, k: int) -> complex:
    """2 d_x [psi(R-_k) psi*(R+_k)], fully analytic.

    The product strips to E-ratio_k times two pole-free rational factors, so
    its x-derivative needs only a, b and their analytically solved a_x, b_x.
    """
    sysm = _Assembled(data, tp)
    a = sysm.solve_direct()
    b = sysm.solve_conjugate()
    a_x = sysm.solve_direct(sysm.d1 * a)
    b_x = sysm.solve_conjugate(sysm.d1 * b)
    r_plus_k, r_minus_k = data.pairs[k]
    red_m = _reduced(r_minus_k, a, sysm.r_plus)
    red_p = _reduced(r_plus_k, b, sysm.r_minus)
    red_m_x = complex(np.sum(a_x / (r_minus_k - sysm.r_plus)))
    red_p_x = complex(np.sum(b_x / (r_plus_k - sysm.r_minus)))
    e_ratio = cmath.exp(sysm.exponents[k])
    return 2.0 * e_ratio * (sysm.d1[k] * red_m * red_p
                            + red_m_x * red_p + red_m * red_p_x)


def verify_tauder1(data: SpectralDataG0, tp: TimePoint, k: int,
                   x_samples: Sequence[float], h: float | None = None) -> float:
    """Max residual of du/dtau_k = 2 d_x [psi(R-_k) psi*(R+_k)] over x."""
    tau_k = tp.taus[k]
    if h is None:
        h = 1e-4 * max(1.0, abs(tau_k))
    worst = 0.0
    for x in x_samples:
        tpx = tp.with_x(float(x))
        fd = central_difference(
            lambda tv: potential_u(data, tpx.with_tau(k, tv)), tau_k, h)
        worst = max(worst, abs(complex(fd) - _tauder1_rhs(data, tpx, k)))
    return float(worst)


def tauder1_quotient(data: SpectralDataG0, tp: TimePoint, k: int,
                     lam: complex, h: float | None = None) -> complex:
    """(psi_xxtau - psi_ytau - u psi_tau) / psi at lambda.

    By the two-dimensional auxiliary problem this quotient equals du/dtau_k
    and is independent of lambda; x- and y-derivatives are analytic, the
    tau_k-derivative is a 4th-order stencil.
    """
    lam = complex(lam)
    tau_k = tp.taus[k]
    if h is None:
        h = 1e-4 * max(1.0, abs(tau_k))

    def parts(tau_value: complex) -> np.ndarray:
        tpp = tp.with_tau(k, tau_value)
        sysm = _Assembled(data, tpp)
        a = sysm.solve_direct()
        a_x = sysm.solve_direct(sysm.d1 * a)
        a_xx = sysm.solve_direct(2.0 * sysm.d1 * a_x - sysm.d1**2 * a)
        d2 = sysm.r_minus**2 - sysm.r_plus**2
        a_y = sysm.solve_direct(d2 * a)
        s0 = _reduced(lam, a, sysm.r_plus)
        denom = lam - sysm.r_plus
        s_x = complex(np.sum(a_x / denom))
        s_xx = complex(np.sum(a_xx / denom))
        s_y = complex(np.sum(a_y / denom))
        u = complex(2.0 * np.sum(a_x))
        psi = s0
        psi_xx = lam**2 * s0 + 2.0 * lam * s_x + s_xx
        psi_y = lam**2 * s0 + s_y
        return np.array([psi, psi_xx, psi_y, u], dtype=complex)

    base = parts(tau_k)
    stencil = [parts(tau_k + s * h) for s in (-2.0, -1.0, 1.0, 2.0)]
    fd = (stencil[0] - 8.0 * stencil[1] + 8.0 * stencil[2] - stencil[3]) / (12.0 * h)
    # the common factor E(lambda) is tau-independent and cancels in the quotient
    return complex((fd[1] - fd[2] - base[3] * fd[0]) / base[0])


def verify_deltau1(data: SpectralDataG0, tp: TimePoint, k: int,
                   lambda_samples: Sequence[complex],
                   h: float | None = None) -> float:
    """Max pairwise spread of the quotient over lambda: it must not depend on it."""
    values = [tauder1_quotient(data, tp, k, lam, h) for lam in lambda_samples]
    worst = 0.0
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            worst = max(worst, abs(values[i] - values[j]))
    return worst


@dataclass(frozen=True)
class CombinedFlowReport:
    """Chain-rule residual along a combined hierarchy/gluing path."""

    max_residual: float
    ungluing_times: tuple  # per pair: -alpha_k/beta_k, or None if never unglued


def verify_combined_flow(data: SpectralDataG0, c_coeffs: Sequence[float],
                         alphas: Sequence[float], betas: Sequence[float],
                         tau: float, x_samples: Sequence[float],
                         h: float = 1e-4) -> CombinedFlowReport:
    """Chain rule along t_m = c_m s (m >= 3), tau_k = alpha_k + beta_k s.

    Verifies d u-hat/ds = sum_m c_m du/dt_m + sum_k beta_k du/dtau_k at
    s = tau for each x, every partial an independent finite difference, and
    reports the ungluing time -alpha_k/beta_k each pair crosses.
    """
    c_coeffs = tuple(float(c) for c in c_coeffs)
    alphas = tuple(float(al) for al in alphas)
    betas = tuple(float(be) for be in betas)

    def path_point(x: float, s: float) -> TimePoint:
        times = (float(x), 0.0) + tuple(c * s for c in c_coeffs)
        taus = tuple(al + be * s for al, be in zip(alphas, betas))
        return TimePoint(times, taus)

    worst = 0.0
    for x in x_samples:
        along = central_difference(
            lambda s: potential_u(data, path_point(x, s)), tau, h)
        base = path_point(x, tau)
        total = 0.0j
        for m, c_m in enumerate(c_coeffs):
            if c_m == 0.0:
                continue
            slot = 2 + m
            partial = central_difference(
                lambda tv: potential_u(data, base.with_time(slot, tv)),
                base.times[slot], h)
            total += c_m * complex(partial)
        for k, beta_k in enumerate(betas):
            if beta_k == 0.0:
                continue
            partial = central_difference(
                lambda tv: potential_u(data, base.with_tau(k, tv)),
                base.taus[k], h)
            total += beta_k * complex(partial)
        worst = max(worst, abs(complex(along) - total))
    unglue = tuple(
        (-al / be if be != 0.0 else None) for al, be in zip(alphas, betas))
    return CombinedFlowReport(float(worst), unglue)


# ---------------------------------------------------------------------------
# Auxiliary-problem residuals
# ---------------------------------------------------------------------------

def _aux_bracket(data: SpectralDataG0, tp: TimePoint, lam: complex,
                 with_y: bool) -> complex:
    """E-scaled residual of the auxiliary problem at lambda.

    Returns E(lambda) * (-2 lam S_x - S_xx [+ S_y] + u (1 + S)); with the
    y-term this is -psi_xx + psi_y + u psi, without it the lambda^2 terms of
    -psi_xx + u psi + lam^2 psi cancel to the same bracket.
    """
    sysm = _Assembled(data, tp)
    a = sysm.solve_direct()
    a_x = sysm.solve_direct(sysm.d1 * a)
    a_xx = sysm.solve_direct(2.0 * sysm.d1 * a_x - sysm.d1**2 * a)
    s0 = _reduced(lam, a, sysm.r_plus)  # also guards the poles
    if sysm.n:
        denom = lam - sysm.r_plus
        s_x = complex(np.sum(a_x / denom))
        s_xx = complex(np.sum(a_xx / denom))
    else:
        s_x = s_xx = 0.0j
    u = complex(2.0 * np.sum(a_x))
    bracket = -2.0 * lam * s_x - s_xx + u * s0
    if with_y:
        d2 = sysm.r_minus**2 - sysm.r_plus**2
        a_y = sysm.solve_direct(d2 * a)
        bracket += complex(np.sum(a_y / (lam - sysm.r_plus))) if sysm.n else 0.0
    return cmath.exp(_phase(lam, tp.times)) * bracket


def kp_residual(data: SpectralDataG0, tp: TimePoint,
                lambda_samples: Sequence[complex], half_width: float = 0.5,
                grid_points: int = 5) -> float:
    """Max of |-psi_xx + psi_y + u psi| over lambda and an (x, y) grid."""
    if len(tp.times) < 2:
        raise ValueError("the two-dimensional problem needs t2 = y present")
    x0, y0 = tp.times[0], tp.times[1]
    worst = 0.0
    for x in np.linspace(x0 - half_width, x0 + half_width, grid_points):
        for y in np.linspace(y0 - half_width, y0 + half_width, grid_points):
            tpg = tp.with_time(0, x).with_time(1, y)
            for lam in lambda_samples:
                worst = max(worst, abs(_aux_bracket(data, tpg, complex(lam), True)))
    return float(worst)


def kdv_residual(data: SpectralDataG0, tp: TimePoint,
                 lambda_samples: Sequence[complex], half_width: float = 0.5,
                 grid_points: int = 5) -> float:
    """Max of |-psi_xx + u psi + lam^2 psi| over lambda and an x grid."""
    if not data.kdv_symmetric:
        raise NotKdVSymmetric("the one-dimensional problem needs mirror data")
    if any(t != 0.0 for t in tp.times[1::2]):
        raise NotKdVSymmetric("even hierarchy times must vanish for mirror data")
    x0 = tp.times[0]
    worst = 0.0
    for x in np.linspace(x0 - half_width, x0 + half_width, grid_points):
        tpg = tp.with_x(x)
        for lam in lambda_samples:
            worst = max(worst, abs(_aux_bracket(data, tpg, complex(lam), False)))
    return float(worst)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _complex_pair(z: complex) -> list[float]:
    return [z.real, z.imag]


def spectral_data_to_json(data: SpectralDataG0) -> str:
    payload = {
        "kdv_symmetric": data.kdv_symmetric,
        "pairs": [[_complex_pair(p), _complex_pair(m)] for p, m in data.pairs],
    }
    return json.dumps(payload, sort_keys=True)


def spectral_data_from_json(text: str) -> SpectralDataG0:
    payload = json.loads(text)
    pairs = tuple(
        (complex(p[0], p[1]), complex(m[0], m[1])) for p, m in payload["pairs"])
    return SpectralDataG0(pairs, bool(payload["kdv_symmetric"]))


def timepoint_to_json(tp: TimePoint) -> str:
    payload = {
        "times": list(tp.times),
        "taus": [_complex_pair(t) for t in tp.taus],
    }
    return json.dumps(payload, sort_keys=True)


def timepoint_from_json(text: str) -> TimePoint:
    payload = json.loads(text)
    return TimePoint(
        tuple(payload["times"]),
        tuple(complex(t[0], t[1]) for t in payload["taus"]))


def potential_grid_csv(data: SpectralDataG0, tp: TimePoint, k: int,
                       x_values: Sequence[float], tau_values: Sequence[float],
                       path) -> None:
    """CSV of u over the (x, tau_k) grid, other times and weights fixed."""
    lines = ["x,tau,u_re,u_im"]
    for x in x_values:
        for tau_value in tau_values:
            u = potential_u(data, tp.with_x(float(x)).with_tau(k, tau_value))
            lines.append("%.17g,%.17g,%.17g,%.17g"
                         % (float(x), float(tau_value), u.real, u.imag))
    Path(path).write_text("\n".join(lines) + "\n")
