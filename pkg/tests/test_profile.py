"""Profile construction, Hugoniot endpoints, rescaling, and the text cache."""

import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from evanskit.errors import NoConnection, NoEndpoint
from evanskit.profile import (
    burgers_profile,
    hugoniot_endpoint,
    load_profile,
    rescale_and_compare,
    save_profile,
    solve_relaxation_profile,
    solve_viscous_profile,
)


@pytest.fixture(scope="module")
def burgers_solved(burgers):
    return solve_viscous_profile(burgers, np.array([1.0]), eps=1.0)


@pytest.fixture(scope="module")
def gnl_profile(gnl2x2):
    return solve_viscous_profile(gnl2x2, np.array([0.1, 0.0]))


@pytest.fixture(scope="module")
def jinxin_profile(jinxin):
    return solve_relaxation_profile(jinxin, np.array([0.1]))


class TestBurgersProfile:
    def test_odd_center(self):
        prof = burgers_profile(1.0)
        assert prof.u_at(0.0)[0] == pytest.approx(0.0, abs=1e-14)

    def test_center_slope(self):
        prof = burgers_profile(1.0)
        assert prof.du_at(0.0)[0] == pytest.approx(-0.5, abs=1e-12)

    def test_tail_bound(self):
        prof = burgers_profile(0.2, L=60.0)
        # tanh tail: |u(50) + 0.2| < 0.4 exp(-0.2*50/2) * ... (loose factor 2)
        assert abs(prof.u_at(50.0)[0] + 0.2) < 0.2 * np.exp(-0.2 * 50 / 2) * 2

    def test_exact_profile_equation(self):
        # etabar' = (etabar^2 - 1)/2 pointwise after rescaling
        prof = burgers_profile(0.5)
        eta = prof.u[:, 0] / 0.5
        deta = prof.du[:, 0] / 0.5 / 0.5   # d/dx~ with x~ = eps x
        resid = np.abs(deta - 0.5 * (eta**2 - 1.0))
        assert np.max(resid) < 1e-10


class TestHugoniot:
    def test_burgers_symmetry(self, burgers):
        up = hugoniot_endpoint(burgers, np.array([1.0]), 1.0)
        assert up[0] == pytest.approx(-1.0, abs=1e-12)

    def test_gnl2x2(self, gnl2x2):
        up = hugoniot_endpoint(gnl2x2, np.array([0.1, 0.0]), 0.1)
        assert np.allclose(up, [-0.1, 0.2], atol=1e-12)

    def test_flux_match_and_amplitude(self, gnl2x2):
        um = np.array([0.07, 0.01])
        up = hugoniot_endpoint(gnl2x2, um, 0.07)
        assert np.linalg.norm(gnl2x2.flux(up) - gnl2x2.flux(um)) < 1e-12
        # principal amplitude |l_p (u+ - u-)|/2 = eps within 1e-10
        assert abs(0.5 * abs(up[0] - um[0]) - 0.07) < 1e-10

    def test_domain_guard(self, gnl2x2):
        with pytest.raises(NoEndpoint):
            hugoniot_endpoint(gnl2x2, np.array([0.1, 0.0]), 10.0 * gnl2x2.radius)


class TestViscousSolve:
    def test_burgers_matches_closed_form(self, burgers_solved):
        prof = burgers_solved
        exact = -np.tanh(prof.x / 2.0)
        assert np.max(np.abs(prof.u[:, 0] - exact)) < 1e-8

    def test_gnl2x2_principal_component(self, gnl_profile):
        prof = gnl_profile
        exact = -0.1 * np.tanh(0.05 * prof.x)
        assert np.max(np.abs(prof.u[:, 0] - exact)) < 1e-7

    def test_reversed_endpoints_rejected(self, gnl2x2):
        with pytest.raises(NoConnection):
            solve_viscous_profile(gnl2x2, np.array([-0.1, 0.0]))

    def test_centering(self, gnl_profile):
        mid = 0.5 * (gnl_profile.u_minus + gnl_profile.u_plus)
        assert abs(gnl_profile.lp_minus @ (gnl_profile.u_at(0.0) - mid)) < 1e-10

    def test_monotone_principal(self, gnl_profile):
        eta = gnl_profile.u @ gnl_profile.lp_minus
        assert np.all(np.diff(eta) < 0)

    def test_endpoint_flux_consistency(self, gnl_profile, gnl2x2):
        d = gnl2x2.flux(gnl_profile.u_plus) - gnl2x2.flux(gnl_profile.u_minus)
        assert np.linalg.norm(d) < 1e-10

    def test_tail_fit_quality(self, gnl_profile):
        assert gnl_profile.tail_r2 > 0.99
        assert gnl_profile.theta_hat > 0

    def test_ode_residual(self, burgers_solved, burgers):
        assert burgers_solved.ode_residual < 1e-8
        # independent check: spline re-differentiation of stored values
        spl = CubicSpline(burgers_solved.x, burgers_solved.u[:, 0])
        xs = np.linspace(-5, 5, 101)
        rhs = 0.5 * (spl(xs) ** 2 - 1.0)
        assert np.max(np.abs(spl(xs, 1) - rhs)) < 1e-7


class TestRelaxationSolve:
    def test_jinxin_components(self, jinxin_profile):
        prof = jinxin_profile
        assert np.max(np.abs(prof.u[:, 0] + 0.1 * np.tanh(0.05 * prof.x))) < 1e-7
        assert np.max(np.abs(prof.v[:, 0] - 0.005)) < 1e-10

    def test_flux_conserved_along_orbit(self, jinxin_profile, jinxin):
        vals = np.array([jinxin.f_tilde(prof_u, prof_v)[0]
                         for prof_u, prof_v in zip(jinxin_profile.u, jinxin_profile.v)])
        assert np.max(np.abs(vals - vals[0])) < 1e-10

    def test_small_amplitude_v_variation(self, jinxin):
        prof = solve_relaxation_profile(jinxin, np.array([0.02]))
        assert np.ptp(prof.v[:, 0]) < 1e-10

    def test_reversed_endpoints_rejected(self, jinxin):
        with pytest.raises(NoConnection):
            solve_relaxation_profile(jinxin, np.array([-0.1]))


class TestRescaleAndCompare:
    def test_burgers_scale_invariance(self):
        for eps in (0.3, 1.0):
            prof = burgers_profile(eps)
            _, rep = rescale_and_compare(prof, 1.0, 1.0)
            assert rep["sup_eta_error"] < 1e-10

    def test_gnl2x2_state_error_order_one(self, gnl2x2):
        errs = {}
        for eps in (0.1, 0.05):
            prof = solve_viscous_profile(gnl2x2, np.array([eps, 0.0]))
            _, rep = rescale_and_compare(prof, 1.0, 1.0)
            errs[eps] = rep["sup_state_error"]
            assert rep["sup_eta_error"] < 1e-8   # principal coordinate is exact
        assert 1.6 < errs[0.1] / errs[0.05] < 2.4

    def test_jinxin_principal_speed(self, jinxin_profile):
        _, rep = rescale_and_compare(jinxin_profile, 1.0, 1.0)
        # a_p = f'(u) = u here, so the rescaled speed tracks etabar
        assert rep["sup_ap_error"] < 0.5 * jinxin_profile.eps
        assert rep["theta_hat"] > 0.5

    def test_rest_points_near_unity(self, gnl_profile):
        _, rep = rescale_and_compare(gnl_profile, 1.0, 1.0)
        assert abs(rep["eta_minus"] - 1.0) < 0.05 * 1.0
        assert abs(rep["eta_plus"] + 1.0) < 0.05


class TestCache:
    def test_roundtrip(self, jinxin_profile, jinxin, tmp_path):
        path = tmp_path / "jinxin.profile.txt"
        save_profile(jinxin_profile, path)
        back = load_profile(path, jinxin)
        assert np.array_equal(back.x, jinxin_profile.x)
        assert np.array_equal(back.u, jinxin_profile.u)
        assert np.array_equal(back.v, jinxin_profile.v)
        assert np.array_equal(back.u_plus, jinxin_profile.u_plus)
        assert back.eps == jinxin_profile.eps

    def test_viscous_roundtrip(self, gnl_profile, gnl2x2, tmp_path):
        path = tmp_path / "gnl.profile.txt"
        save_profile(gnl_profile, path)
        back = load_profile(path, gnl2x2)
        assert np.array_equal(back.u, gnl_profile.u)
        assert back.v is None
        xs = np.linspace(-3, 3, 7)
        assert np.allclose(back.u_at(xs), gnl_profile.u_at(xs), atol=1e-14)
