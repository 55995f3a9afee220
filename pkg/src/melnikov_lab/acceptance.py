"""The package's seven headline verification checks.

Each ``criterion_*`` function runs a self-contained numerical experiment
with pinned tolerances and returns a :class:`CheckResult` whose sub-checks
carry the measured values.  The pytest acceptance suite asserts on these,
and the command-line ``verify-all`` scenario serializes them into its
report, so both front ends share one implementation.
"""

from __future__ import annotations

import cmath
import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .baker_akhiezer import (
    SpectralDataG0,
    TimePoint,
    eval_psi,
    eval_psi_star,
    potential_u,
    solve_ba,
    verify_combined_flow,
    verify_deltau1,
    verify_deromega,
    verify_dpsi,
    verify_tauder1,
    kp_residual,
)
from .floquet import PeriodicPotential, discriminant, find_band_edges
from .grid import Field, PeriodicGrid
from .soliton import (
    FlowSetting,
    SolitonState,
    annihilation_time,
    ba_psi,
    c_trajectory,
    potential,
    potential_x,
    potential_xxx,
    psi_kappa,
    psi_kappa_xx,
    residue_flow,
    residue_flow_calibration,
    residue_flow_dx,
    verify_1sol2,
    verify_melnikov_pde,
)
from .solver import SolverConfig, SourceSpec, evolve, evolve_prescribed_source, isospectrality_report

__all__ = ["CheckResult", "all_criteria", "CRITERIA"] + [
    f"criterion_{i}" for i in range(1, 8)
]


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one acceptance criterion."""

    name: str
    passed: bool
    elapsed_s: float
    subchecks: dict

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "elapsed_s": round(self.elapsed_s, 3),
            "subchecks": self.subchecks,
        }


def _sub(measured: float, tolerance: float, op: str = "<") -> dict:
    measured = float(measured)
    ok = measured < tolerance if op == "<" else measured > tolerance
    return {
        "measured": measured,
        "tolerance": float(tolerance),
        "comparator": op,
        "passed": bool(ok),
    }


def _finish(name: str, start: float, budget_s: float, subchecks: dict) -> CheckResult:
    elapsed = time.time() - start
    subchecks["runtime_s"] = _sub(elapsed, budget_s)
    return CheckResult(
        name=name,
        passed=all(s["passed"] for s in subchecks.values()),
        elapsed_s=elapsed,
        subchecks=subchecks,
    )


def criterion_1() -> CheckResult:
    """Free-operator Floquet exactness and closed free gaps."""
    start = time.time()
    pot = PeriodicPotential.zero(2.0 * math.pi, n=16)
    energies = np.linspace(-2.0, 4.0, 200)
    worst = 0.0
    for e in energies:
        exact = 2.0 * cmath.cos(2.0 * math.pi * cmath.sqrt(complex(e))).real
        worst = max(worst, abs(discriminant(pot, float(e)).delta.real - exact))
    report = find_band_edges(pot, 0.01, 4.4)
    double_points = [(n / 2.0) ** 2 for n in (1, 2, 3, 4)]
    worst_gap = 0.0
    for e in double_points:
        dist = min((abs(c - e) for c in report.closed_gaps), default=float("inf"))
        worst_gap = max(worst_gap, dist)
    subs = {
        "free_discriminant_error": _sub(worst, 1e-10),
        "closed_gap_location_error": _sub(worst_gap, 1e-6),
        "spurious_open_gaps": _sub(len(report.open_gaps), 1),
    }
    return _finish("free_operator_floquet", start, 10.0, subs)


def criterion_2() -> CheckResult:
    """One-soliton closed-form suite and the annihilation clock."""
    start = time.time()
    xs = np.linspace(-3.0, 3.0, 31)
    schrodinger = 0.0
    for kappa, c in ((1.0, 2.0), (1.3, 0.8)):
        s = SolitonState(kappa, c)
        for x in xs:
            r = psi_kappa_xx(s, x) - (potential(s, x) + kappa**2) * psi_kappa(s, x)
            schrodinger = max(schrodinger, abs(r))

    pde_1sol2 = max(
        verify_1sol2(SolitonState(1.0, 2.0), xs),
        verify_1sol2(SolitonState(1.4, 0.6), xs),
    )
    melnikov = verify_melnikov_pde(1.0, 0.5, (0.0, 0.2, 0.45), np.linspace(-2.0, 2.0, 9))

    t_star = annihilation_time(1.0, 0.5)
    exact_gap = abs(t_star - math.log(2.0))
    rk_gap = abs(t_star - _rk4_root(1.0, 0.5))

    # Capture: under the reversed flow, |c(t) - kappa^-3| decays like
    # e^{-kappa^3 t}; check the closed-form trajectory reaches 1e-10.
    setting = FlowSetting("melnikov_reversed", c0=0.5, kappa=1.0)
    t_late = math.log(abs(0.5 - 1.0) / 1e-10)
    capture = abs(c_trajectory(setting, t_late) - 1.0)
    subs = {
        "schrodinger_residual": _sub(schrodinger, 1e-10),
        "one_soliton_pde_residual": _sub(pde_1sol2, 1e-7),
        "melnikov_pde_residual": _sub(melnikov, 1e-6),
        "annihilation_time_vs_ln2": _sub(exact_gap, 1e-12),
        "annihilation_time_vs_rk4": _sub(rk_gap, 1e-8),
        "capture_decay": _sub(capture, 1.0000001e-10),
    }
    return _finish("soliton_closed_forms", start, 5.0, subs)


def _rk4_root(kappa: float, c0: float) -> float:
    """Root of c(t) = 0 for dc/dt = kappa^3 c - 1 by RK4 plus bisection."""

    def f(c: float) -> float:
        return kappa**3 * c - 1.0

    def advance(c: float, h: float) -> float:
        k1 = f(c)
        k2 = f(c + 0.5 * h * k1)
        k3 = f(c + 0.5 * h * k2)
        k4 = f(c + h * k3)
        return c + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    h = 1e-4
    t, c = 0.0, c0
    while c > 0.0:
        t_prev, c_prev = t, c
        c = advance(c, h)
        t += h
    lo, hi = t_prev, t
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        c_mid = c_prev
        # integrate from the bracket start to mid with fine fixed steps
        steps = 64
        dt = (mid - t_prev) / steps
        for _ in range(steps):
            c_mid = advance(c_mid, dt)
        if c_mid > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def criterion_3() -> CheckResult:
    """Residue-flow identity behind the hierarchy clock."""
    start = time.time()
    record = residue_flow_calibration()
    worst = 0.0
    count = 0
    for kappa, c in ((1.0, 2.0), (1.3, 0.8)):
        s = SolitonState(kappa, c)
        for x in np.linspace(-1.8, 1.8, 10):
            lhs = 2.0 * (-residue_flow_dx(s, x, radius=6.0))
            rhs_val = 0.25 * potential_xxx(s, x) - 1.5 * potential(s, x) * potential_x(s, x)
            worst = max(worst, abs(lhs - rhs_val))
            count += 1
    s = SolitonState(1.0, 2.0)
    vals = [residue_flow(s, 0.7, radius=r) for r in (4.0, 6.0, 9.0)]
    spread = max(abs(v - vals[0]) for v in vals)
    subs = {
        "identity_residual_20_points": _sub(worst, 1e-8),
        "radius_independence": _sub(spread, 1e-10),
        "calibration_recorded": _sub(0.0 if record["sign"] in (-1.0, 1.0) else 1.0, 0.5),
    }
    return _finish("residue_flow_identity", start, 5.0, subs)


def criterion_4() -> CheckResult:
    """Genus-zero engine against closed forms and its derivative formulas."""
    start = time.time()
    data1 = SpectralDataG0.kdv([1.0])
    sol = SolitonState(1.0, 2.0)

    closed = 0.0
    for x in np.linspace(-2.0, 2.0, 9):
        tp = TimePoint((float(x),), (-2.0,))
        closed = max(closed, abs(potential_u(data1, tp) - potential(sol, x)))
        for lam in (0.7 + 0.3j, 1.7, 2.4 - 1.1j):
            closed = max(closed, abs(eval_psi(data1, tp, lam) - ba_psi(sol, lam, x)))
            closed = max(
                closed, abs(eval_psi_star(data1, tp, lam) - eval_psi(data1, tp, -lam))
            )

    tp1 = TimePoint((0.3,), (-2.0,))
    xs = np.linspace(-1.0, 1.0, 5)
    tauder = verify_tauder1(data1, tp1, 0, xs)
    data2 = SpectralDataG0(pairs=((-1.0, 1.1), (-0.8 + 0.3j, 1.3 - 0.2j)))
    tp2 = TimePoint((0.2,), (0.7, -0.4 + 0.2j))
    tauder2 = max(verify_tauder1(data2, tp2, k, xs) for k in (0, 1))

    dpsi = verify_dpsi(data1, tp1, 0, 1.9)
    derom = verify_deromega(data1, tp1, 2.1, 0.6)
    kp_data = SpectralDataG0(pairs=((-1.0, 1.3),))
    kp = kp_residual(kp_data, TimePoint((0.1, 0.05), (1.0,)), (2.0, 3.0 + 1.0j))
    deltau = verify_deltau1(data1, tp1, 0, (1.6, 2.2 + 0.5j, 3.1, -2.6 + 0.1j))

    alphas, betas, tau = (2.0,), (1.0,), -2.0
    flow = verify_combined_flow(data1, (), alphas, betas, tau, xs)
    unglue_err = abs(flow.ungluing_times[0] - (-alphas[0] / betas[0]))
    subs = {
        "n1_closed_forms": _sub(closed, 1e-12),
        "tauder1_n1": _sub(tauder, 1e-6),
        "tauder1_n2": _sub(tauder2, 1e-6),
        "dpsi_residual": _sub(dpsi, 1e-6),
        "deromega_residual": _sub(derom, 1e-7),
        "kp_residual": _sub(kp, 1e-6),
        "deltau1_lambda_independence": _sub(deltau, 1e-6),
        "combined_flow_residual": _sub(flow.max_residual, 1e-6),
        "ungluing_time_error": _sub(unglue_err, 1e-10),
    }
    return _finish("ba_genus_zero_engine", start, 60.0, subs)


def criterion_5() -> CheckResult:
    """Prescribed-source solver run against the exact annihilation segment."""
    start = time.time()
    grid = PeriodicGrid(n=2048, length=80.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cfg = SolverConfig(grid=grid, dt=1e-4, t_end=0.5 * math.log(2.0), snapshot_every=500)
    rep = evolve_prescribed_source(1.0, 0.5, cfg)

    conv_grid = PeriodicGrid(n=1024, length=80.0)
    errs = []
    for dt in (1e-2, 5e-3):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            c = SolverConfig(grid=conv_grid, dt=dt, t_end=0.4, snapshot_every=10**9)
        errs.append(evolve_prescribed_source(1.0, 0.5, c).exact_error)
    ratio = errs[0] / errs[1]
    subs = {
        "max_error_vs_exact": _sub(rep.exact_error, 1e-4),
        "dt_convergence_ratio": _sub(ratio, 10.0, op=">"),
        "dt_convergence_ratio_bounded": _sub(ratio, 30.0),
    }
    return _finish("prescribed_source_solver", start, 180.0, subs)


#: Probe energies for the spectral-conservation experiment: spread across
#: the first bands and gaps of the cosine potential, away from band edges.
CONSERVATION_PROBES = (-0.5, 0.05, 0.6, 0.8, 1.44, 1.96, 3.0, 3.6)


def criterion_6() -> CheckResult:
    """Almost-isospectrality of the self-consistently sourced flow."""
    start = time.time()
    grid = PeriodicGrid(n=64, length=2.0 * math.pi)
    u0 = Field.from_samples(grid, 0.2 * np.cos(grid.nodes))
    cfg = SolverConfig(grid=grid, dt=2e-4, t_end=0.5, snapshot_every=500)
    spec = SourceSpec(entries=((0.25, 0.05),), refresh_every=1)
    rep = evolve(u0, spec, cfg)
    summ = isospectrality_report(rep, CONSERVATION_PROBES)
    moved = float(np.max(np.abs(rep.final.real_values - u0.real_values)))

    base = evolve(u0, SourceSpec(), cfg)
    base_summ = isospectrality_report(base, CONSERVATION_PROBES)

    pot0 = PeriodicPotential(u0)
    pot_shift = PeriodicPotential(Field.from_samples(grid, u0.real_values + 0.01))
    control = max(
        abs(discriminant(pot_shift, e).delta - discriminant(pot0, e).delta)
        for e in CONSERVATION_PROBES
    )
    subs = {
        "sourced_delta_drift": _sub(summ.max_delta_drift, 1e-5),
        "potential_moved": _sub(moved, 1e-2, op=">"),
        "mean_drift": _sub(summ.mean_drift, 1e-12),
        "control_shift_delta_change": _sub(control, 1e-3, op=">"),
        "pure_kdv_baseline_drift": _sub(base_summ.max_delta_drift, 1e-6),
    }
    return _finish("spectral_conservation", start, 600.0, subs)


def criterion_7() -> CheckResult:
    """Deletion at tau = 0 and ungluing roots along a linear tau path."""
    start = time.time()
    two = SpectralDataG0.kdv([1.0, 1.6])
    one = SpectralDataG0.kdv([1.0])
    deletion = 0.0
    for x in (-0.7, 0.4, 1.1):
        tp_two = TimePoint((float(x),), (-2.0, 0.0))
        tp_one = TimePoint((float(x),), (-2.0,))
        a_two = solve_ba(two, tp_two).a
        a_one = solve_ba(one, tp_one).a
        deletion = max(deletion, abs(a_two[1]))
        deletion = max(deletion, abs(a_two[0] - a_one[0]))

    # Bisection roots of a_k along tau_k(sigma) = alpha_k + beta_k sigma.
    worst_a = 0.0
    worst_root = 0.0
    for data, k, taus, alpha, beta in (
        (one, 0, None, 2.0, 1.0),
        (two, 1, (-2.0, None), 1.5, -0.5),
    ):
        expected = -alpha / beta

        def a_k(sigma: float) -> float:
            full = [alpha + beta * sigma if t is None else t for t in (taus or (None,))]
            tp = TimePoint((0.25,), tuple(full))
            return solve_ba(data, tp).a[k].real

        lo, hi = expected - 1.3, expected + 1.1
        flo = a_k(lo)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = a_k(mid)
            if fm == 0.0:
                lo = hi = mid
                break
            if (fm > 0.0) == (flo > 0.0):
                lo, flo = mid, fm
            else:
                hi = mid
        root = 0.5 * (lo + hi)
        full = [alpha + beta * root if t is None else t for t in (taus or (None,))]
        a_root = solve_ba(data, TimePoint((0.25,), tuple(full))).a[k]
        worst_a = max(worst_a, abs(a_root))
        worst_root = max(worst_root, abs(root - expected))
    subs = {
        "deletion_equivalence": _sub(deletion, 1e-12),
        "pole_coefficient_at_root": _sub(worst_a, 1e-10),
        "root_location_error": _sub(worst_root, 1e-9),
    }
    return _finish("double_point_structure", start, 10.0, subs)


CRITERIA = (
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
)


def all_criteria() -> list[CheckResult]:
    return [fn() for fn in CRITERIA]
