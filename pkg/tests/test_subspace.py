"""Asymptotic frames, analytic continuation, and mode expansions."""

import numpy as np
import pytest
import scipy.linalg as sla

from evanskit.errors import BranchCrossing, DegenerateMode, SplittingFailure
from evanskit.subspace import (
    continue_frame_along_path,
    spectral_projector,
    stable_unstable_frames,
    transverse_mode_expansions,
)


def burgers_plus(lam):
    return np.array([[0.0, 1.0], [lam, -1.0]], dtype=complex)


class TestFrames:
    def test_diagonal_stable(self):
        fr = stable_unstable_frames(np.diag([-2.0, -1.0, 3.0]), "stable")
        assert fr.k == 2
        # span{e1, e2}: no component along e3
        assert np.max(np.abs(fr.V[2, :])) < 1e-12

    def test_burgers_stable_direction(self):
        fr = stable_unstable_frames(burgers_plus(1.0), "stable")
        mu = (-1 - np.sqrt(5)) / 2
        v = np.array([1.0, mu])
        v = v / np.linalg.norm(v)
        overlap = abs(np.vdot(v, fr.V[:, 0]))
        assert overlap == pytest.approx(1.0, abs=1e-12)

    def test_defective_full_space(self):
        fr = stable_unstable_frames(np.array([[-1.0, 1.0], [0.0, -1.0]]), "stable")
        assert fr.k == 2
        assert np.linalg.matrix_rank(fr.V) == 2

    def test_axis_guard(self):
        with pytest.raises(SplittingFailure):
            stable_unstable_frames(np.diag([0.0, 1.0]), "stable")

    def test_projector(self):
        M = np.diag([-2.0, -1.0, 3.0]).astype(complex)
        P = spectral_projector(M, "stable")
        assert np.allclose(P @ P, P, atol=1e-12)
        assert np.allclose(P @ np.array([1, 0, 0]), [1, 0, 0], atol=1e-12)
        assert np.allclose(P @ np.array([0, 0, 1]), 0, atol=1e-12)


class TestContinuation:
    def test_constant_matrix_path(self):
        M = np.array([[-1.0, 0.3], [0.0, 2.0]], dtype=complex)
        fr = stable_unstable_frames(M, "stable", matfun=lambda z: M, lam=0.0)
        out = continue_frame_along_path(fr, [1.0, 2.0, 3.0])
        assert np.max(np.abs(out.V - fr.V)) < 1e-12

    def test_semicircle_matches_direct(self):
        fr = stable_unstable_frames(burgers_plus(1.0), "stable",
                                    matfun=burgers_plus, lam=1.0)
        path = [np.exp(1j * t) for t in np.linspace(0, np.pi / 2, 12)[1:]]
        out = continue_frame_along_path(fr, path)
        direct = stable_unstable_frames(burgers_plus(1j), "stable")
        ang = sla.subspace_angles(out.V, direct.V)
        assert np.max(ang) < 1e-8

    def test_loop_monodromy_identity(self):
        # branch point of sqrt(1 + 4 lam) at lam = -1/4; the loop avoids it
        fr = stable_unstable_frames(burgers_plus(1.5), "stable",
                                    matfun=burgers_plus, lam=1.5)
        loop = [1.0 + 0.5 * np.exp(2j * np.pi * t)
                for t in np.linspace(0, 1, 25)[1:]]
        out = continue_frame_along_path(fr, loop)
        ang = sla.subspace_angles(out.V, fr.V)
        assert np.max(ang) < 1e-8
        # orientation: change of basis has positive real part
        c = np.vdot(fr.V[:, 0], out.V[:, 0]) / np.vdot(fr.V[:, 0], fr.V[:, 0])
        assert c.real > 0.9

    def test_projector_transport_derivative(self):
        lam0, h = 1.0 + 0.2j, 1e-4
        fr = stable_unstable_frames(burgers_plus(lam0), "stable",
                                    matfun=burgers_plus, lam=lam0)
        plus = continue_frame_along_path(fr, [lam0 + h])
        minus = continue_frame_along_path(fr, [lam0 - h])
        dV = (plus.V - minus.V) / (2 * h)
        dP = (spectral_projector(burgers_plus(lam0 + h), "stable")
              - spectral_projector(burgers_plus(lam0 - h), "stable")) / (2 * h)
        assert np.max(np.abs(dV - dP @ fr.V)) < 1e-6

    def test_branch_crossing_detected(self):
        fr = stable_unstable_frames(burgers_plus(1.0), "stable",
                                    matfun=burgers_plus, lam=1.0)
        # the straight path to -1/2 passes through the branch point -1/4
        with pytest.raises((BranchCrossing, SplittingFailure)):
            continue_frame_along_path(fr, [-0.5 + 0j])


class TestModeExpansions:
    def test_exact_roots(self):
        modes = transverse_mode_expansions(3.0, 4.0)
        mus = sorted(m["mu"].real for m in modes)
        assert mus == pytest.approx([-1.0, 4.0])

    def test_slow_root_small_lambda(self):
        modes = transverse_mode_expansions(-1.0, 0.01)
        slow = next(m for m in modes if m["class"] == "slow")
        assert slow["mu"].real == pytest.approx((-1 + np.sqrt(1.04)) / 2, abs=1e-12)
        assert slow["mu"].real == pytest.approx(-0.01 / -1.0, abs=2e-4)

    def test_degenerate_speed(self):
        with pytest.raises(DegenerateMode):
            transverse_mode_expansions(0.0, 0.1)

    def test_characteristic_residual(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            a = rng.uniform(0.5, 3.0) * rng.choice([-1, 1])
            lam = complex(rng.uniform(-0.2, 1.0), rng.uniform(-1, 1))
            for m in transverse_mode_expansions(a, lam):
                mu = m["mu"]
                assert abs(mu**2 - a * mu - lam) < 1e-12

    def test_eigenvector_relations(self):
        # L and R are genuine left/right eigenvectors of [[0,1],[lam,a]],
        # binormalized within each mode
        a, lam = 1.7, 0.3 + 0.4j
        A = np.array([[0, 1], [lam, a]], dtype=complex)
        for m in transverse_mode_expansions(a, lam):
            mu, L, R = m["mu"], m["L"], m["R"]
            assert np.max(np.abs(A @ R - mu * R)) < 1e-12
            assert np.max(np.abs(L @ A - mu * L)) < 1e-12
            assert abs(L @ R - 1.0) < 1e-12

    def test_expansion_accuracy_constant(self):
        # |mu_slow + lam/a| <= K |lam|^2 with K stable over random speeds
        rng = np.random.default_rng(9)
        Ks = []
        for _ in range(100):
            a = rng.uniform(0.5, 3.0) * rng.choice([-1, 1])
            lam = 0.1 * np.exp(1j * rng.uniform(0, 2 * np.pi))
            slow = next(m for m in transverse_mode_expansions(a, lam)
                        if m["class"] == "slow")
            Ks.append(abs(slow["mu"] - (-lam / a)) / abs(lam) ** 2)
        Ks = np.array(Ks)
        # leading constant 1/|a|^3 <= 8 plus the next-order tail at |lam|=0.1
        assert np.max(Ks) < 16.0

    def test_conjugation_symmetry_frames(self):
        lam = 0.4 + 0.9j
        fr = stable_unstable_frames(burgers_plus(lam), "stable")
        fr_conj = stable_unstable_frames(burgers_plus(np.conj(lam)), "stable")
        ang = sla.subspace_angles(np.conj(fr_conj.V), fr.V)
        assert np.max(ang) < 1e-10

    def test_general_B_slow_expansion(self):
        # slow mu = -lam/a + beta lam^2/a^3 with beta = l B r
        l = np.array([1.0, 0.0])
        r = np.array([1.0, -1.0])
        B = np.diag([2.0, 1.0])
        modes = transverse_mode_expansions(
            1.5, 0.05, context={"kind": "general", "l": l, "r": r, "B": B})
        slow = modes[0]
        beta = l @ B @ r
        assert slow["mu"] == pytest.approx(-0.05 / 1.5 + beta * 0.05**2 / 1.5**3)

    def test_general_B_characteristic_residual(self):
        # det(mu^2 B - mu A - lam I) vanishes to expansion order for the
        # slow root of a diagonalizable pair (scalar reduction along l, r)
        a = 1.2
        l = np.array([1.0, 0.0])
        r = np.array([1.0, -0.5])
        B = np.diag([1.0, 2.0])
        A = np.array([[a, 0.0], [0.7, -2.0]])
        lam = 1e-3 + 5e-4j
        modes = transverse_mode_expansions(
            a, lam, context={"kind": "general", "l": l, "r": r, "B": B})
        mu = modes[0]["mu"]
        # scalar characteristic function along the (l, r) mode pair
        beta = l @ B @ r
        resid = abs(mu**2 * beta - mu * a - lam)
        assert resid < 1e-8
