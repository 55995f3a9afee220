import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from melnikov_lab.grid import central_difference
from melnikov_lab.soliton import (
    ContourTooSmall,
    FlowSetting,
    NotInAnnihilationRegime,
    PoleAtDivisor,
    SingularPoint,
    SolitonState,
    annihilation_time,
    ba_psi,
    c_trajectory,
    chi,
    chi_x,
    peak_position,
    potential,
    potential_dc,
    potential_x,
    potential_xxx,
    psi_kappa,
    psi_kappa_xx,
    psi_squared_x,
    residue_flow,
    residue_flow_calibration,
    residue_flow_dx,
    trajectory_csv,
    verify_1sol2,
    verify_melnikov_pde,
    verify_standard_pde,
    windowed_sup,
)

from oracles import rk4

STATE = SolitonState(1.0, 2.0)


class TestClosedForms:
    def test_potential_peak_value(self):
        assert potential(STATE, 0.0) == pytest.approx(-2.0, abs=1e-14)

    def test_potential_sech_identity(self):
        s = SolitonState(1.3, 0.7)
        x0 = peak_position(s)
        xs = np.linspace(-6.0, 6.0, 41)
        sech_form = -2.0 * s.kappa**2 / np.cosh(s.kappa * (xs - x0)) ** 2
        assert np.max(np.abs(potential(s, xs) - sech_form)) < 1e-12

    def test_vacuum(self):
        s = SolitonState(1.0, 0.0)
        assert potential(s, 3.7) == 0.0
        assert chi(s, 3.7) == 0.0
        # psi falls back to the free exponential
        assert psi_kappa(s, 0.5) == pytest.approx(np.exp(0.5), rel=1e-14)

    def test_singular_profile(self):
        s = SolitonState(1.0, -2.0)
        with pytest.raises(SingularPoint):
            potential(s, 0.0)
        # away from the singular point the profile exists
        assert np.isfinite(potential(s, 2.0))

    def test_chi_values(self):
        assert chi(STATE, 0.0) == pytest.approx(-1.0, abs=1e-15)
        assert abs(chi(STATE, 40.0) + 2.0) < 1e-10  # chi -> -2 kappa

    def test_psi_kappa_value(self):
        assert psi_kappa(STATE, 0.0) == pytest.approx(0.5, abs=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.5, 2.0), st.floats(0.05, 3.0), st.floats(-5.0, 5.0))
    def test_schroedinger_residual(self, kappa, c, x):
        s = SolitonState(kappa, c)
        res = -psi_kappa_xx(s, x) + potential(s, x) * psi_kappa(s, x) \
            + kappa**2 * psi_kappa(s, x)
        assert abs(res) < 1e-10 * max(1.0, kappa**3)

    def test_schroedinger_residual_50_points(self):
        xs = np.linspace(-10.0, 10.0, 50)
        res = -psi_kappa_xx(STATE, xs) + potential(STATE, xs) * psi_kappa(STATE, xs) \
            + psi_kappa(STATE, xs)
        assert np.max(np.abs(res)) < 1e-10

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.5, 2.0), st.floats(0.05, 3.0), st.floats(-4.0, 4.0))
    def test_u_is_twice_chi_x(self, kappa, c, x):
        s = SolitonState(kappa, c)
        fd = central_difference(lambda xx: chi(s, xx), x, 1e-3)
        assert abs(potential(s, x) - 2.0 * fd) < 1e-8
        assert abs(potential(s, x) - 2.0 * chi_x(s, x)) < 1e-12

    def test_analytic_x_derivatives_against_fd(self):
        s = SolitonState(0.8, 1.5)
        for x in (-2.0, 0.3, 1.7):
            fd1 = central_difference(lambda xx: potential(s, xx), x, 1e-3)
            assert abs(fd1 - potential_x(s, x)) < 1e-8
            fd3 = central_difference(lambda xx: potential_xxx(s, xx), x, 1e-3)
            fd_dc = central_difference(
                lambda cc: potential(SolitonState(s.kappa, cc), x), s.c, 1e-5)
            assert abs(fd_dc - potential_dc(s, x)) < 1e-8
            assert np.isfinite(fd3)

    def test_hierarchy_clock_identity(self):
        # (1/4)u_xxx - (3/2)u u_x = 2 k^3 c du/dc, exact for the family
        s = SolitonState(1.2, 0.9)
        xs = np.linspace(-5.0, 5.0, 33)
        lhs = 0.25 * potential_xxx(s, xs) - 1.5 * potential(s, xs) * potential_x(s, xs)
        rhs = 2.0 * s.kappa**3 * s.c * potential_dc(s, xs)
        assert np.max(np.abs(lhs - rhs)) < 1e-10 * np.max(np.abs(lhs) + 1.0)


class TestBaPsi:
    def test_collapses_to_psi_kappa(self):
        for x in (-1.0, 0.0, 2.3):
            assert abs(ba_psi(STATE, 1.0, x) - psi_kappa(STATE, x)) < 1e-13

    def test_vacuum_exponential(self):
        s = SolitonState(1.0, 0.0)
        lam = 1.7 + 0.4j
        assert abs(ba_psi(s, lam, 0.9) - np.exp(lam * 0.9)) < 1e-13

    def test_pole_raises(self):
        with pytest.raises(PoleAtDivisor):
            ba_psi(STATE, -1.0, 0.0)

    def test_residue_at_pole_richardson(self):
        # res_{lam=-k} psi = lim (lam+k) psi(lam) = -c psi_kappa
        x = 0.3
        target = -STATE.c * psi_kappa(STATE, x)
        vals = []
        for eps in (1e-3, 5e-4, 2.5e-4):
            lam = -STATE.kappa + eps
            vals.append((lam + STATE.kappa) * ba_psi(STATE, lam, x))
        # the function (lam+k) psi is linear in eps near the pole, so two
        # Richardson steps on halved eps cancel the linear and quadratic terms
        r1 = 2.0 * vals[1] - vals[0]
        r2 = 2.0 * vals[2] - vals[1]
        extrap = (4.0 * r2 - r1) / 3.0
        assert abs(extrap - target) < 1e-10


class TestFlows:
    def test_standard_doubling(self):
        flow = FlowSetting("standard_kdv", 1.0, 1.0)
        assert c_trajectory(flow, np.log(2.0)) == pytest.approx(2.0, rel=1e-12)

    def test_melnikov_fixed_point(self):
        flow = FlowSetting("melnikov", 1.0, 1.0)  # c0 = kappa^-3
        ts = np.linspace(0.0, 2.0, 9)
        assert np.max(np.abs(c_trajectory(flow, ts) - 1.0)) < 1e-14

    def test_melnikov_against_rk4(self):
        flow = FlowSetting("melnikov", 0.5, 1.0)
        oracle = rk4(lambda t, c: c - 1.0, 0.0, 0.5, 0.3, 3000)
        assert abs(c_trajectory(flow, 0.3) - oracle) < 1e-10
        assert c_trajectory(flow, 0.3) == pytest.approx(1.0 - 0.5 * np.exp(0.3), rel=1e-13)

    def test_flow_ode_consistency(self):
        flow = FlowSetting("melnikov", 0.5, 1.3)
        rate = flow.kappa**3
        for t in (0.0, 0.2, 0.45):
            fd = central_difference(lambda tt: c_trajectory(flow, tt), t, 1e-4)
            assert abs(fd - (rate * c_trajectory(flow, t) - 1.0)) < 1e-10

    def test_capture_decay(self):
        flow = FlowSetting("melnikov_reversed", 2.5, 1.1)
        fixed = flow.kappa**-3
        for t in (0.5, 1.0, 3.0):
            expect = abs(flow.c0 - fixed) * np.exp(-flow.kappa**3 * t)
            assert abs(abs(c_trajectory(flow, t) - fixed) - expect) < 1e-10

    def test_creation_needs_reversed_flow(self):
        dt = 1e-3
        forward = FlowSetting("melnikov", 0.0, 1.0)
        reversed_ = FlowSetting("melnikov_reversed", 0.0, 1.0)
        assert c_trajectory(forward, dt) < 0.0
        assert c_trajectory(reversed_, dt) > 0.0

    def test_invalid_kind(self):
        with pytest.raises(ValueError):
            FlowSetting("backward", 1.0, 1.0)


class TestAnnihilation:
    def test_ln2(self):
        assert annihilation_time(1.0, 0.5) == pytest.approx(np.log(2.0), abs=1e-12)

    def test_kappa_two(self):
        assert annihilation_time(2.0, 1.0 / 16.0) == pytest.approx(np.log(2.0) / 8.0, abs=1e-12)

    def test_against_rk4_root_bracketing(self):
        def c_at(t):
            return rk4(lambda tt, c: c - 1.0, 0.0, 0.5, t, 4000)

        t_star = brentq(c_at, 0.5, 0.9, xtol=1e-12)
        assert abs(annihilation_time(1.0, 0.5) - t_star) < 1e-8

    def test_trajectory_vanishes_at_t_star(self):
        t_star = annihilation_time(1.3, 0.3)
        flow = FlowSetting("melnikov", 0.3, 1.3)
        assert abs(c_trajectory(flow, t_star)) < 1e-12

    def test_small_c0_small_t_star(self):
        t_star = annihilation_time(1.0, 1e-8)
        assert 0.0 < t_star < 2e-8

    def test_regime_validation(self):
        for bad in (0.0, -0.5, 1.0, 2.0):
            with pytest.raises(NotInAnnihilationRegime):
                annihilation_time(1.0, bad)

    def test_windowed_sup_vanishes_near_annihilation(self):
        # With c pinned far below 2 kappa e^{-2 kappa * 20} the peak has left
        # [-20, 20] and the windowed amplitude collapses.
        tail = windowed_sup(SolitonState(1.0, 1e-21))
        assert tail < 1e-2
        assert windowed_sup(SolitonState(1.0, 1e-19)) > tail

    def test_windowed_sup_sees_interior_peak(self):
        assert windowed_sup(SolitonState(1.0, 2.0)) == pytest.approx(2.0, rel=1e-6)


class TestPdeResiduals:
    def test_1sol2_peak(self):
        xs = np.linspace(-10.0, 10.0, 101)
        assert verify_1sol2(STATE, xs) < 1e-7

    def test_1sol2_far_soliton(self):
        xs = np.linspace(-10.0, 10.0, 101)
        assert verify_1sol2(SolitonState(1.0, 0.01), xs) < 1e-7

    def test_1sol2_step_halving(self):
        xs = np.linspace(-3.0, 3.0, 31)
        r_h = verify_1sol2(STATE, xs, h=0.2)
        r_h2 = verify_1sol2(STATE, xs, h=0.1)
        assert r_h2 < r_h / 8.0  # >= 3rd-order decay of the stencil error

    def test_melnikov_pde(self):
        xs = np.linspace(-10.0, 10.0, 50)
        assert verify_melnikov_pde(1.0, 0.5, [0.0, 0.2, 0.4], xs) < 1e-6

    def test_melnikov_pde_stationary(self):
        xs = np.linspace(-8.0, 8.0, 40)
        assert verify_melnikov_pde(1.0, 1.0, [0.0, 0.5, 1.0], xs) < 1e-12

    def test_standard_pde(self):
        xs = np.linspace(-10.0, 10.0, 50)
        assert verify_standard_pde(1.0, 0.5, [0.0, 0.2, 0.4], xs) < 1e-6


class TestResidueFlow:
    def test_vacuum_zero(self):
        assert abs(residue_flow(SolitonState(1.0, 0.0), 0.0, 5.0)) < 1e-13

    def test_calibration_record(self):
        record = residue_flow_calibration()
        assert record["sign"] in (-1, 1)
        assert record["residual"] < 1e-8

    def test_identity_at_non_calibration_points(self):
        worst = 0.0
        for kappa, c in ((1.0, 2.0), (1.3, 0.8)):
            s = SolitonState(kappa, c)
            radius = 5.0 * kappa
            for x in np.linspace(-1.8, 1.8, 10):
                lhs = 2.0 * (-residue_flow_dx(s, float(x), radius))
                rhs = 0.25 * float(potential_xxx(s, x)) \
                    - 1.5 * float(potential(s, x)) * float(potential_x(s, x))
                worst = max(worst, abs(lhs - rhs))
        assert worst < 1e-8

    def test_derivative_consistent_with_fd(self):
        s = SolitonState(1.0, 1.5)
        fd = central_difference(lambda x: residue_flow(s, x, 6.0), 0.4, 1e-3)
        assert abs(fd - residue_flow_dx(s, 0.4, 6.0)) < 1e-8

    def test_radius_independence(self):
        s = STATE
        a = residue_flow(s, 0.7, 5.0)
        b = residue_flow(s, 0.7, 10.0)
        assert abs(a - b) < 1e-10

    def test_contour_too_small(self):
        with pytest.raises(ContourTooSmall):
            residue_flow(STATE, 0.0, 2.0)


class TestTrajectoryCsv:
    def test_columns_and_monotone_c(self, tmp_path):
        flow = FlowSetting("melnikov", 0.5, 1.0)
        ts = np.linspace(0.0, 0.6, 7)
        path = tmp_path / "traj.csv"
        trajectory_csv(flow, ts, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "t,c,x0,sup_abs_u"
        assert len(lines) == 8
        cs = [float(line.split(",")[1]) for line in lines[1:]]
        assert all(b < a for a, b in zip(cs, cs[1:]))  # c decays toward 0
        sups = [float(line.split(",")[3]) for line in lines[1:]]
        assert sups[0] == pytest.approx(2.0, rel=1e-6)  # peak inside window
