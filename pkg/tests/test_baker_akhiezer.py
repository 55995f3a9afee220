import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from melnikov_lab.baker_akhiezer import (
    CBASample,
    NonConvergentDirection,
    NotKdVSymmetric,
    PoleAtMarkedPoint,
    SingularBASystem,
    SpectralDataG0,
    TimePoint,
    cba_kernel,
    eval_psi,
    eval_psi_reduced,
    eval_psi_star,
    kdv_residual,
    kp_residual,
    potential_grid_csv,
    potential_u,
    solve_ba,
    solve_ba_conjugate,
    spectral_data_from_json,
    spectral_data_to_json,
    tauder1_quotient,
    timepoint_from_json,
    timepoint_to_json,
    verify_combined_flow,
    verify_deltau1,
    verify_deromega,
    verify_dpsi,
    verify_tauder1,
)
from melnikov_lab.grid import central_difference
from melnikov_lab.soliton import SolitonState, ba_psi, chi, potential, psi_kappa, psi_squared_x

KDV1 = SpectralDataG0.kdv([1.0])
TP1 = TimePoint((0.0,), (-2.0,))  # the kappa=1, c=2 profile
SOL1 = SolitonState(1.0, 2.0)


def limit_toward(f, center, eps0=1e-3, direction=1.0):
    """Two-step Richardson limit of f along center + direction * eps."""
    vals = [f(center + direction * eps0 / 2**i) for i in range(3)]
    r1 = 2.0 * vals[1] - vals[0]
    r2 = 2.0 * vals[2] - vals[1]
    return (4.0 * r2 - r1) / 3.0


class TestSpectralData:
    def test_kdv_builder(self):
        data = SpectralDataG0.kdv([1.0, 1.5])
        assert data.n == 2
        assert data.r_plus == (-1.0, -1.5)
        assert data.r_minus == (1.0, 1.5)
        assert data.kdv_symmetric

    def test_distinctness_enforced(self):
        with pytest.raises(ValueError):
            SpectralDataG0((((-1.0 + 0j), 1.0 + 0j), ((-1.0 + 5e-9j), 2.0 + 0j)))

    def test_mirror_flag_enforced(self):
        with pytest.raises(ValueError):
            SpectralDataG0(((-1.0 + 0j, 1.1 + 0j),), kdv_symmetric=True)

    def test_json_round_trip(self):
        data = SpectralDataG0(((-1.0 + 0j, 1.3 + 0j), (-0.6 + 0.2j, 0.9 + 0j)))
        text = spectral_data_to_json(data)
        payload = json.loads(text)
        assert payload["pairs"][1][0] == [-0.6, 0.2]  # complex as [re, im]
        assert spectral_data_from_json(text) == data

    def test_timepoint_json_round_trip(self):
        tp = TimePoint((0.1, 0.0, 0.3), (-2.0, 0.5 + 0.25j))
        text = timepoint_to_json(tp)
        assert json.loads(text)["taus"][1] == [0.5, 0.25]
        assert timepoint_from_json(text) == tp

    def test_timepoint_needs_x(self):
        with pytest.raises(ValueError):
            TimePoint((), ())


class TestSolveBA:
    def test_vacuum_zero_weights(self):
        ev = solve_ba(KDV1, TimePoint((0.7,), (0.0,)))
        assert ev.a == (0.0,)
        assert ev.chi1 == 0.0

    def test_vacuum_empty_data(self):
        data = SpectralDataG0(())
        assert solve_ba(data, TimePoint((0.3,), ())).a == ()
        lam = 1.2 + 0.4j
        assert abs(eval_psi(data, TimePoint((0.3,), ()), lam)
                   - np.exp(lam * 0.3)) < 1e-13

    def test_one_pair_reduces_to_chi(self):
        for x in (-1.0, 0.0, 0.4, 2.0):
            ev = solve_ba(KDV1, TP1.with_x(x))
            assert abs(ev.a[0] - chi(SOL1, x)) < 1e-13
        assert abs(solve_ba(KDV1, TP1).a[0] + 1.0) < 1e-13

    def test_residue_conditions_two_pairs(self):
        data = SpectralDataG0(((-1.0 + 0j, 1.0 + 0j), (-1.5 + 0j, 1.5 + 0j)))
        tp = TimePoint((0.1,), (-2.0, -3.0))
        for k, (r_plus, r_minus) in enumerate(data.pairs):
            res = limit_toward(
                lambda lam: (lam - r_plus) * eval_psi(data, tp, lam), r_plus,
                eps0=2.5e-4)
            target = tp.taus[k] * eval_psi(data, tp, r_minus)
            assert abs(res - target) < 1e-9

    def test_conjugate_residue_conditions(self):
        data = SpectralDataG0(((-1.0 + 0j, 1.0 + 0j), (-1.5 + 0j, 1.5 + 0j)))
        tp = TimePoint((0.1,), (-2.0, -3.0))
        for k, (r_plus, r_minus) in enumerate(data.pairs):
            res = limit_toward(
                lambda lam: (lam - r_minus) * eval_psi_star(data, tp, lam), r_minus,
                eps0=2.5e-4)
            target = -tp.taus[k] * eval_psi_star(data, tp, r_plus)
            assert abs(res - target) < 1e-9

    def test_singular_system(self):
        # at tau = 2 kappa the 1x1 residue condition degenerates exactly
        with pytest.raises(SingularBASystem):
            solve_ba(KDV1, TimePoint((0.0,), (2.0,)))

    def test_weight_count_mismatch(self):
        with pytest.raises(ValueError):
            solve_ba(KDV1, TimePoint((0.0,), ()))

    def test_condition_number_reported(self):
        ev = solve_ba(KDV1, TP1)
        assert 1.0 <= ev.condition_number < 1e3

    def test_deletion_equivalence(self):
        both = SpectralDataG0.kdv([1.0, 1.5])
        tp = TimePoint((0.3,), (-2.0, 0.0))
        ev = solve_ba(both, tp)
        assert abs(ev.a[1]) < 1e-12
        only = solve_ba(KDV1, TimePoint((0.3,), (-2.0,)))
        assert abs(ev.a[0] - only.a[0]) < 1e-12
        u_both = potential_u(both, tp)
        u_only = potential_u(KDV1, TimePoint((0.3,), (-2.0,)))
        assert abs(u_both - u_only) < 1e-12

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.6, 1.4), st.floats(0.2, 1.0), st.floats(-3.0, -0.3),
           st.floats(-3.0, -0.3), st.floats(-1.0, 1.0))
    def test_permutation_invariance(self, kappa1, gap, tau1, tau2, x):
        kappa2 = kappa1 + gap
        data = SpectralDataG0.kdv([kappa1, kappa2])
        flipped = SpectralDataG0.kdv([kappa2, kappa1])
        tp = TimePoint((x,), (tau1, tau2))
        tp_flip = TimePoint((x,), (tau2, tau1))
        ev = solve_ba(data, tp)
        ev_flip = solve_ba(flipped, tp_flip)
        assert abs(ev.a[0] - ev_flip.a[1]) < 1e-12
        assert abs(ev.a[1] - ev_flip.a[0]) < 1e-12
        assert abs(potential_u(data, tp) - potential_u(flipped, tp_flip)) < 1e-12


class TestEvalPsi:
    def test_pole_raises(self):
        with pytest.raises(PoleAtMarkedPoint):
            eval_psi(KDV1, TP1, -1.0)
        with pytest.raises(PoleAtMarkedPoint):
            eval_psi_star(KDV1, TP1, 1.0)

    def test_normalization_at_large_lambda(self):
        # rational factor of psi tends to 1; evaluated E-stripped so the
        # exponential prefactor cannot overflow
        assert eval_psi_reduced(KDV1, TimePoint((0.0,), (0.0,)), 1e4) == 1.0
        val = eval_psi_reduced(KDV1, TP1.with_x(-5.0), 1e4)
        assert abs(val - 1.0) < 1e-6

    def test_matches_soliton_bound_state(self):
        for x in (-1.5, 0.0, 0.7):
            got = eval_psi(KDV1, TP1.with_x(x), 1.0)
            assert abs(got - psi_kappa(SOL1, x)) < 1e-12

    def test_matches_soliton_wave_function(self):
        for lam in (2.0, 0.5 + 0.5j, -3.0 + 0.2j):
            for x in (-0.8, 0.4):
                got = eval_psi(KDV1, TP1.with_x(x), lam)
                assert abs(got - ba_psi(SOL1, lam, x)) < 1e-12

    def test_conjugate_is_reflection_on_mirror_data(self):
        data = SpectralDataG0.kdv([1.0, 1.5])
        tp = TimePoint((0.4,), (-2.0, -3.0))
        rng = np.random.default_rng(7)
        count = 0
        while count < 20:
            lam = complex(1.5 * rng.standard_normal(), 1.5 * rng.standard_normal())
            if min(abs(lam - p) for p in (-1, 1, -1.5, 1.5)) < 0.3:
                continue
            assert abs(eval_psi_star(data, tp, lam) - eval_psi(data, tp, -lam)) < 1e-10
            count += 1

    def test_conjugate_reflection_against_soliton(self):
        lam = 1.8 - 0.6j
        for x in (-0.5, 0.9):
            got = eval_psi_star(KDV1, TP1.with_x(x), lam)
            assert abs(got - ba_psi(SOL1, -lam, x)) < 1e-12

    def test_conjugate_vacuum(self):
        ev = solve_ba_conjugate(KDV1, TimePoint((0.5,), (0.0,)))
        assert ev.b == (0.0,)
        lam = 0.7 + 0.2j
        got = eval_psi_star(KDV1, TimePoint((0.5,), (0.0,)), lam)
        assert abs(got - np.exp(-lam * 0.5)) < 1e-13


class TestPotentialU:
    def test_matches_soliton_potential(self):
        for x in np.linspace(-3.0, 3.0, 13):
            u = potential_u(KDV1, TP1.with_x(float(x)))
            assert abs(u - potential(SOL1, float(x))) < 1e-12
            assert abs(u.imag) < 1e-13

    def test_vacuum(self):
        assert potential_u(KDV1, TimePoint((0.3,), (0.0,))) == 0.0

    def test_analytic_derivative_against_fd(self):
        data = SpectralDataG0.kdv([1.0, 1.5])
        tp = TimePoint((0.0,), (-2.0, -3.0))
        for x in (-0.7, 0.2, 1.1):
            fd = central_difference(
                lambda xv: solve_ba(data, tp.with_x(xv)).chi1, x, 1e-3)
            u = potential_u(data, tp.with_x(x))
            assert abs(2.0 * complex(fd) - u) < 1e-8

    def test_two_soliton_profile_is_real(self):
        data = SpectralDataG0.kdv([1.0, 1.5])
        tp = TimePoint((0.0,), (-2.0, -3.0))
        for x in np.linspace(-2.0, 2.0, 9):
            u = potential_u(data, tp.with_x(float(x)))
            assert abs(u.imag) < 1e-12
            assert u.real < 1e-12  # attractive profile


class TestCBAKernel:
    def test_vacuum_closed_form_origin(self):
        tp = TimePoint((0.0,), (0.0,))
        lam, mu = 0.3, 1.1  # decays toward +inf
        sample = cba_kernel(KDV1, tp, lam, mu)
        assert sample.convergence_direction == math.inf
        assert abs(sample.omega_over_dmu - 1.0 / (mu - lam)) < 1e-12

    def test_vacuum_closed_form_other_direction(self):
        tp = TimePoint((0.4,), (0.0,))
        lam, mu = 1.1 + 0.3j, 0.3  # decays toward -inf
        sample = cba_kernel(KDV1, tp, lam, mu)
        assert sample.convergence_direction == -math.inf
        expect = np.exp((lam - mu) * 0.4) / (mu - lam)
        assert abs(sample.omega_over_dmu - expect) < 1e-12

    def test_nonconvergent_direction(self):
        with pytest.raises(NonConvergentDirection):
            cba_kernel(KDV1, TimePoint((0.0,), (0.0,)), 2.0, 2.0 + 0.5j)

    def test_higher_times_rejected(self):
        with pytest.raises(ValueError):
            cba_kernel(KDV1, TimePoint((0.0, 0.0, 0.1), (0.0,)), 0.3, 1.1)

    def test_diagonal_pole_structure(self):
        lam = 1.6 + 0.0j
        mu = lam + 1e-3
        sample = cba_kernel(KDV1, TP1, lam, mu)
        assert abs(sample.omega_over_dmu) > 500.0
        assert abs(sample.omega_over_dmu - 1.0 / (mu - lam)) < 10.0

    def test_deromega_identity(self):
        residual = verify_deromega(KDV1, TP1.with_x(0.2), 2.0, 0.4)
        assert residual < 1e-7


class TestDpsi:
    def test_one_soliton(self):
        assert verify_dpsi(KDV1, TP1.with_x(0.2), 0, 2.0) < 1e-6

    def test_vacuum_perturbation(self):
        assert verify_dpsi(KDV1, TimePoint((0.1,), (0.0,)), 0, 1.5) < 1e-6

    def test_step_halving_decay(self):
        coarse = verify_dpsi(KDV1, TP1.with_x(0.2), 0, 2.0, h=0.2)
        fine = verify_dpsi(KDV1, TP1.with_x(0.2), 0, 2.0, h=0.1)
        assert fine < coarse / 8.0


class TestTauder1:
    def test_one_soliton(self):
        xs = np.linspace(-2.0, 2.0, 7)
        assert verify_tauder1(KDV1, TP1, 0, xs) < 1e-6

    def test_rhs_matches_soliton_closed_form(self):
        from melnikov_lab.baker_akhiezer import _tauder1_rhs
        for x in (-1.0, 0.3, 1.2):
            rhs = _tauder1_rhs(KDV1, TP1.with_x(x), 0)
            assert abs(rhs - 2.0 * psi_squared_x(SOL1, x)) < 1e-10

    def test_generic_complex_pairs(self):
        data = SpectralDataG0(((-1.0 + 0j, 1.1 + 0j), (-0.8 + 0.3j, 1.3 - 0.2j)))
        tp = TimePoint((0.0,), (0.7, -0.4 + 0.2j))
        assert verify_tauder1(data, tp, 0, (-0.5, 0.4)) < 1e-6
        assert verify_tauder1(data, tp, 1, (-0.5, 0.4)) < 1e-6

    def test_unglued_point(self):
        data = SpectralDataG0.kdv([1.0, 1.5])
        tp = TimePoint((0.2,), (-2.0, 0.0))
        assert verify_tauder1(data, tp, 1, (-0.3, 0.5)) < 1e-6


class TestDeltau1:
    def test_lambda_independence_one_pair(self):
        tp = TP1.with_x(0.3)
        assert verify_deltau1(KDV1, tp, 0, (2.0, 1.7 + 0.4j, 3.2)) < 1e-6

    def test_quotient_equals_fd_derivative(self):
        tp = TP1.with_x(0.3)
        q = tauder1_quotient(KDV1, tp, 0, 2.0)
        fd = central_difference(
            lambda tv: potential_u(KDV1, tp.with_tau(0, tv)), -2.0, 1e-4)
        assert abs(q - complex(fd)) < 1e-6

    def test_lambda_independence_two_pairs(self):
        data = SpectralDataG0.kdv([1.0, 1.5])
        tp = TimePoint((0.1,), (-2.0, -3.0))
        assert verify_deltau1(data, tp, 1, (2.2, 0.5 + 1.1j, -2.6)) < 1e-6


class TestCombinedFlow:
    def test_pure_hierarchy_path(self):
        report = verify_combined_flow(
            KDV1, c_coeffs=(1.0,), alphas=(-2.0,), betas=(0.0,),
            tau=0.3, x_samples=(-1.0, 0.5))
        assert report.max_residual < 1e-6
        assert report.ungluing_times == (None,)

    def test_pure_source_path_and_ungluing(self):
        report = verify_combined_flow(
            KDV1, c_coeffs=(), alphas=(-2.0,), betas=(1.0,),
            tau=0.5, x_samples=(-0.6, 0.8))
        assert report.max_residual < 1e-6
        assert report.ungluing_times == (2.0,)
        # at the reported time the pair is unglued and the potential vanishes
        at_unglue = TimePoint((0.8, 0.0), (0.0,))
        assert abs(solve_ba(KDV1, at_unglue).a[0]) < 1e-12
        assert abs(potential_u(KDV1, at_unglue)) < 1e-10

    def test_mixed_path(self):
        report = verify_combined_flow(
            KDV1, c_coeffs=(0.4,), alphas=(-2.0,), betas=(0.3,),
            tau=0.2, x_samples=(0.1,))
        assert report.max_residual < 1e-6


class TestAuxiliaryProblems:
    def test_kp_vacuum_exact(self):
        tp = TimePoint((0.1, 0.05), (0.0,))
        assert kp_residual(KDV1, tp, (2.0, 3.0 + 1.0j)) < 1e-12

    def test_kp_single_nonsymmetric_pair(self):
        data = SpectralDataG0(((-1.0 + 0j, 1.3 + 0j),))
        tp = TimePoint((0.1, 0.05), (1.0,))
        assert kp_residual(data, tp, (2.0, 3.0 + 1.0j)) < 1e-6

    def test_kp_two_pairs(self):
        data = SpectralDataG0(((-1.0 + 0j, 1.3 + 0j), (-0.6 + 0.2j, 0.9 + 0j)))
        tp = TimePoint((0.1, 0.05), (1.0, 0.5 + 0.3j))
        assert kp_residual(data, tp, (2.2,)) < 1e-6

    def test_kp_needs_second_time(self):
        with pytest.raises(ValueError):
            kp_residual(KDV1, TimePoint((0.1,), (0.0,)), (2.0,))

    def test_kdv_one_soliton(self):
        assert kdv_residual(KDV1, TP1.with_x(0.55), (2.0, 0.5j)) < 1e-10

    def test_kdv_two_soliton(self):
        data = SpectralDataG0.kdv([1.0, 1.5])
        tp = TimePoint((0.0,), (-2.0, -3.0))
        assert kdv_residual(data, tp, (2.3, 0.4 + 0.9j)) < 1e-6

    def test_kdv_vacuum_exact(self):
        assert kdv_residual(KDV1, TimePoint((0.2,), (0.0,)), (2.0,)) < 1e-12

    def test_kdv_requires_mirror_data(self):
        data = SpectralDataG0(((-1.0 + 0j, 1.3 + 0j),))
        with pytest.raises(NotKdVSymmetric):
            kdv_residual(data, TimePoint((0.1,), (1.0,)), (2.0,))

    def test_kdv_rejects_even_times(self):
        with pytest.raises(NotKdVSymmetric):
            kdv_residual(KDV1, TimePoint((0.1, 0.2), (-2.0,)), (2.0,))


class TestGridCsv:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "u_grid.csv"
        potential_grid_csv(KDV1, TP1, 0, (-1.0, 0.0, 1.0), (-2.0, -1.0), path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "x,tau,u_re,u_im"
        assert len(lines) == 7
        first = [float(v) for v in lines[1].split(",")]
        expect = potential_u(KDV1, TP1.with_x(-1.0).with_tau(0, -2.0))
        assert first[:2] == [-1.0, -2.0]
        assert abs(first[2] - expect.real) < 1e-15
        assert abs(first[3]) < 1e-12
