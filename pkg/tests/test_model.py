"""System-level checks: decompositions, hypotheses, scalar constants."""

import numpy as np
import pytest

from evanskit import registry
from evanskit.errors import NotStrictlyHyperbolic, SingularRelaxation
from evanskit.model import (
    characteristic_decomposition,
    chapman_enskog_viscosity,
    check_hypotheses_relaxation,
    check_hypotheses_viscous,
    genuine_nonlinearity_and_diffusion,
)

from conftest import fd_jacobian


class TestCharacteristicDecomposition:
    def test_diagonal(self):
        dec = characteristic_decomposition(np.diag([-1.0, 0.0, 2.0]))
        assert np.allclose(dec.a, [-1.0, 0.0, 2.0])
        assert np.allclose(dec.left, np.eye(3), atol=1e-12)
        assert np.allclose(dec.right, np.eye(3), atol=1e-12)
        assert dec.p == 1

    def test_lower_triangular_2x2(self):
        # [[0,0],[1,1]]: eigenvalues 0,1; r(0) = (1,-1), l(0) = (1,0)
        dec = characteristic_decomposition(np.array([[0.0, 0.0], [1.0, 1.0]]))
        assert np.allclose(dec.a, [0.0, 1.0])
        assert np.allclose(dec.right[:, 0], [1.0, -1.0])
        assert np.allclose(dec.left[0], [1.0, 0.0])
        assert abs(dec.left[0] @ dec.right[:, 0] - 1.0) < 1e-12
        assert dec.p == 0

    def test_random_symmetric_residuals(self):
        rng = np.random.default_rng(3)
        A = rng.standard_normal((5, 5))
        A = A + A.T
        dec = characteristic_decomposition(A)
        for j in range(5):
            res = np.linalg.norm(A @ dec.right[:, j] - dec.a[j] * dec.right[:, j])
            assert res / np.linalg.norm(A, 2) < 1e-10
        assert np.max(np.abs(dec.left @ dec.right - np.eye(5))) < 1e-10

    def test_binormalization_and_residual_property(self):
        # validated against the dense eigensolver on 200 random matrices
        rng = np.random.default_rng(11)
        count = 0
        while count < 200:
            A = rng.standard_normal((4, 4))
            A = A + A.T + np.diag([0.0, 2.0, 4.0, 6.0])
            try:
                dec = characteristic_decomposition(A)
            except NotStrictlyHyperbolic:
                continue
            count += 1
            scale = np.linalg.norm(A, 2)
            assert np.max(np.abs(dec.left @ dec.right - np.eye(4))) < 1e-10
            for j in range(4):
                res = np.linalg.norm(A @ dec.right[:, j] - dec.a[j] * dec.right[:, j])
                assert res / scale < 1e-10

    def test_coalescing_rejected(self):
        with pytest.raises(NotStrictlyHyperbolic):
            characteristic_decomposition(np.diag([1.0, 1.0 + 1e-12]))
        with pytest.raises(NotStrictlyHyperbolic):
            characteristic_decomposition(np.array([[0.0, -1.0], [1.0, 0.0]]))


class TestViscousHypotheses:
    def test_burgers_all_pass(self, burgers):
        rep = check_hypotheses_viscous(burgers)
        assert rep.all_passed
        assert rep["H4_genuine_nonlinearity"].coefficient == pytest.approx(1.0)

    def test_gnl2x2(self, gnl2x2):
        rep = check_hypotheses_viscous(gnl2x2)
        assert rep.all_passed
        dec = characteristic_decomposition(gnl2x2.jacobian(np.zeros(2)))
        assert np.allclose(dec.a, [0.0, 1.0])
        assert rep["H4_genuine_nonlinearity"].coefficient == pytest.approx(1.0)

    def test_swap_flux_fails_h4(self):
        rep = check_hypotheses_viscous(registry.swap2x2_system())
        h4 = rep["H4_genuine_nonlinearity"]
        assert not h4.passed
        assert h4.witness is not None
        assert sorted(np.round(np.real(h4.witness)).tolist()) == [-1, 1]


class TestRelaxationHypotheses:
    def test_jinxin_passes(self, jinxin):
        rep = check_hypotheses_relaxation(jinxin)
        assert rep.all_passed
        w = np.linalg.eigvals(jinxin.full_jacobian(np.zeros(1), np.zeros(1)))
        assert np.allclose(sorted(w.real), [-1.0, 1.0])
        assert rep["subcharacteristic"].margin == pytest.approx(1.0, abs=0.2)
        assert rep["H4_genuine_nonlinearity"].coefficient == pytest.approx(1.0, abs=1e-6)

    def test_supersonic_drift_fails_subcharacteristic(self):
        sys = registry.jinxin_system(drift=1.5)
        rep = check_hypotheses_relaxation(sys)
        sub = rep["subcharacteristic"]
        assert not sub.passed
        # margin at the base state is 1 - 1.5^2 = -1.25
        beta0 = float(chapman_enskog_viscosity(sys, np.zeros(1))[0, 0])
        assert beta0 == pytest.approx(1.0 - 2.25)

    def test_positive_qv_fails_equilibrium_stability(self):
        rep = check_hypotheses_relaxation(registry.unstable_relaxation_system())
        assert not rep["equilibrium_stability"].passed


class TestScalarConstants:
    def test_burgers(self, burgers):
        Lam, beta = genuine_nonlinearity_and_diffusion(burgers, np.zeros(1))
        assert Lam == pytest.approx(1.0)
        assert beta == pytest.approx(1.0)

    def test_gnl2x2(self, gnl2x2):
        Lam, beta = genuine_nonlinearity_and_diffusion(gnl2x2, np.zeros(2))
        assert Lam == pytest.approx(1.0)
        assert beta == pytest.approx(1.0)

    def test_jinxin(self, jinxin):
        Lam, beta = genuine_nonlinearity_and_diffusion(jinxin, np.zeros(1))
        assert Lam == pytest.approx(1.0, abs=1e-6)
        assert beta == pytest.approx(1.0)


class TestChapmanEnskog:
    def test_jinxin_at_zero(self, jinxin):
        assert chapman_enskog_viscosity(jinxin, np.zeros(1))[0, 0] == pytest.approx(1.0)

    def test_jinxin_at_general_state(self, jinxin):
        # closed form a^2 - f'(u)^2 = 1 - 0.09
        got = chapman_enskog_viscosity(jinxin, np.array([0.3]))[0, 0]
        assert got == pytest.approx(0.91, abs=1e-12)

    def test_singular_qv(self, jinxin):
        import dataclasses

        sysbad = dataclasses.replace(jinxin, qv=lambda u, v: np.zeros((1, 1)))
        with pytest.raises(SingularRelaxation):
            chapman_enskog_viscosity(sysbad, np.zeros(1))

    def test_positivity_inside_subcharacteristic_region(self, jinxin):
        # |f'(u)| = |u| < a = 1 on the sampled range
        for u in np.linspace(-0.9, 0.9, 19):
            assert chapman_enskog_viscosity(jinxin, np.array([u]))[0, 0] > 0

    def test_vstar_jacobian_consistency(self, jinxin):
        # ||q_u + q_v v*_u|| at sampled u, with v*_u cross-checked by FD
        for u in (np.array([0.0]), np.array([0.2]), np.array([-0.35])):
            vu = jinxin.v_star_jacobian(u)
            v = jinxin.v_star(u)
            resid = np.linalg.norm(jinxin.qu(u, v) + jinxin.qv(u, v) @ vu)
            assert resid < 1e-8
            vu_fd = fd_jacobian(jinxin.v_star, u)
            assert np.linalg.norm(vu - vu_fd) < 1e-8
