"""Assembly of the linearized eigenvalue problem as first-order systems
W' = A(x, lambda) W for each formulation, with asymptotic limits and decay
metadata."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    NotParabolic,
    SingularA,
    SingularViscosity,
    SplittingFailure,
    WrongFormulation,
)
from .profile import burgers_profile


@dataclass
class EigenvalueSystem:
    """First-order coefficient map A(x, lambda) with asymptotic limits.

    `decay` holds (C1, C2) with ||A(x,.) - A_pm(.)|| <= C1 exp(-|x|/C2)
    certified on the profile grid at lambda = 1.
    """

    N: int
    A: Callable[[float, complex], np.ndarray]
    A_limit: Callable[[int, complex], np.ndarray]
    formulation: str
    L: float
    profile: object = None
    system: object = None
    decay: tuple = (0.0, 1.0)
    params: dict = field(default_factory=dict)

    def __call__(self, x, lam):
        return self.A(x, lam)


@dataclass
class SpectralPoint:
    """A frequency with optional regime tag and rescaling record."""

    lam: complex
    regime: Optional[str] = None
    lam_rescaled: Optional[complex] = None


def _measure_decay(Afun, Alim, L, x):
    d_plus = Alim(+1, 1.0)
    d_minus = Alim(-1, 1.0)
    norms = np.array([
        np.linalg.norm(Afun(xi, 1.0) - (d_plus if xi > 0 else d_minus), 2)
        for xi in x
    ])
    outer = np.abs(x) > L / 3.0
    keep = outer & (norms > 1e-13)
    if np.count_nonzero(keep) < 5:
        return float(max(norms.max(), 1e-13)), L
    A = np.vstack([np.ones(keep.sum()), -np.abs(x[keep])]).T
    coef, *_ = np.linalg.lstsq(A, np.log(norms[keep]), rcond=None)
    rate = max(coef[1], 1e-12)
    C2 = 1.0 / (0.9 * rate)
    C1 = 1.25 * float(np.max(norms * np.exp(np.abs(x) / C2)))
    return C1, C2


def _grid(profile, m=201):
    return np.linspace(-profile.L, profile.L, m)


def assemble_identity_viscous(profile, sys, integrated=True):
    """Integrated form [[0, I], [lam I, Df(u(x))]] for identity viscosity, or
    the flux-variable first-order form of the unintegrated equations."""
    if not sys.identity_viscosity():
        raise WrongFormulation("identity-viscous assembly requires B == I")
    n = sys.n
    N = 2 * n
    Iu = np.eye(n)
    up, um = profile.u_plus, profile.u_minus

    if integrated:
        def A(x, lam):
            M = np.zeros((N, N), dtype=complex)
            M[:n, n:] = Iu
            M[n:, :n] = lam * Iu
            M[n:, n:] = sys.jacobian(profile.u_at(x))
            return M

        def A_limit(side, lam):
            M = np.zeros((N, N), dtype=complex)
            M[:n, n:] = Iu
            M[n:, :n] = lam * Iu
            M[n:, n:] = sys.jacobian(up if side > 0 else um)
            return M

        tag = "integrated-identity-viscous"
    else:
        # W = (w, y), y := w' - A_eps w, so w' = A_eps w + y, y' = lam w
        def A(x, lam):
            M = np.zeros((N, N), dtype=complex)
            M[:n, :n] = sys.jacobian(profile.u_at(x))
            M[:n, n:] = Iu
            M[n:, :n] = lam * Iu
            return M

        def A_limit(side, lam):
            M = np.zeros((N, N), dtype=complex)
            M[:n, :n] = sys.jacobian(up if side > 0 else um)
            M[:n, n:] = Iu
            M[n:, :n] = lam * Iu
            return M

        tag = "unintegrated-viscous"

    es = EigenvalueSystem(N=N, A=A, A_limit=A_limit, formulation=tag,
                          L=profile.L, profile=profile, system=sys)
    es.decay = _measure_decay(A, A_limit, profile.L, _grid(profile))
    return es


def _a_eps(sys, u, du):
    """A_eps v = Df v - (DB v) u' for the general viscous linearization."""
    n = sys.n
    A = np.array(sys.jacobian(u), dtype=float)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        A[:, j] -= sys.dviscosity(u, e) @ du
    return A


def assemble_general_viscous(profile, sys):
    """Integrated form [[0, I], [lam B^-1, B^-1 A_eps]] for general strictly
    parabolic viscosity."""
    n = sys.n
    N = 2 * n
    Iu = np.eye(n)

    def blocks(u, du):
        B = sys.viscosity(u)
        if abs(np.linalg.det(B)) < 1e-12:
            raise SingularViscosity(f"B singular at u={u}")
        Binv = np.linalg.inv(B)
        return Binv, Binv @ _a_eps(sys, u, du)

    def A(x, lam):
        Binv, BinvA = blocks(profile.u_at(x), profile.du_at(x))
        M = np.zeros((N, N), dtype=complex)
        M[:n, n:] = Iu
        M[n:, :n] = lam * Binv
        M[n:, n:] = BinvA
        return M

    def A_limit(side, lam):
        u = profile.u_plus if side > 0 else profile.u_minus
        Binv, BinvA = blocks(u, np.zeros(n))
        M = np.zeros((N, N), dtype=complex)
        M[:n, n:] = Iu
        M[n:, :n] = lam * Binv
        M[n:, n:] = BinvA
        return M

    es = EigenvalueSystem(N=N, A=A, A_limit=A_limit,
                          formulation="integrated-general-viscous",
                          L=profile.L, profile=profile, system=sys)
    es.decay = _measure_decay(A, A_limit, profile.L, _grid(profile))
    return es


def balanced_flux_blocks(sys, u, v):
    """(Etil, E), (Htil, H), (Ftil, F) built from the full flux Jacobian:
    rows (-I,0), (q_u,q_v), (0,-I) applied to A^-1."""
    n, r = sys.n, sys.r
    Afull = sys.full_jacobian(u, v)
    det = np.linalg.det(Afull)
    if abs(det) < 1e-12 * max(1.0, np.linalg.norm(Afull)) ** (n + r):
        raise SingularA(f"det A = {det:.3g} at (u, v) = ({u}, {v})")
    Ainv = np.linalg.inv(Afull)
    top = -Ainv[:n, :]
    qrow = np.hstack([np.atleast_2d(sys.qu(u, v)), np.atleast_2d(sys.qv(u, v))]) @ Ainv
    bot = -Ainv[n:, :]
    return ((top[:, :n], top[:, n:]),
            (qrow[:, :n], qrow[:, n:]),
            (bot[:, :n], bot[:, n:]))


def _balanced_matrix(sys, u, v, lam):
    (Etil, E), (Htil, H), (Ftil, F) = balanced_flux_blocks(sys, u, v)
    n, r = sys.n, sys.r
    M = np.zeros((n + r, n + r), dtype=complex)
    M[:n, :n] = lam * Etil
    M[:n, n:] = E
    M[n:, :n] = lam * Htil + lam**2 * Ftil
    M[n:, n:] = H + lam * F
    return M


def assemble_relaxation_balanced_flux(profile, sys):
    """Balanced flux form diag(lam^-1 I, I)(Q - lam I) A^-1 diag(lam I, I),
    evaluated through its polynomial-in-lambda block representation, which is
    entrywise analytic including the removable singularity at lambda = 0."""
    n, r = sys.n, sys.r
    N = n + r

    def A(x, lam):
        return _balanced_matrix(sys, profile.u_at(x), profile.v_at(x), lam)

    def A_limit(side, lam):
        if side > 0:
            return _balanced_matrix(sys, profile.u_plus, profile.v_plus, lam)
        return _balanced_matrix(sys, profile.u_minus, profile.v_minus, lam)

    es = EigenvalueSystem(N=N, A=A, A_limit=A_limit,
                          formulation="balanced-flux-relaxation",
                          L=profile.L, profile=profile, system=sys)
    es.decay = _measure_decay(A, A_limit, profile.L, _grid(profile))
    return es


def balanced_flux_definition_line(sys, u, v, lam):
    """Direct evaluation of diag(lam^-1, 1)(Q - lam)(A)^-1 diag(lam, 1);
    requires lam != 0.  Used to cross-check the block representation."""
    n, r = sys.n, sys.r
    Afull = sys.full_jacobian(u, v)
    Q = np.zeros((n + r, n + r))
    Q[n:, :n] = np.atleast_2d(sys.qu(u, v))
    Q[n:, n:] = np.atleast_2d(sys.qv(u, v))
    D1 = np.diag(np.concatenate([np.full(n, 1.0 / lam), np.ones(r)]).astype(complex))
    D2 = np.diag(np.concatenate([np.full(n, lam), np.ones(r)]).astype(complex))
    return D1 @ (Q - lam * np.eye(n + r)) @ np.linalg.inv(Afull) @ D2


def balanced_flux_second_display(sys, u, v, lam):
    """The simplified display [[I,0],[q_u,q_v]] A^-1 diag(lam I, I), which
    drops the -lam shift; kept only to document that it differs from the
    definition line."""
    n, r = sys.n, sys.r
    Afull = sys.full_jacobian(u, v)
    Lft = np.zeros((n + r, n + r))
    Lft[:n, :n] = np.eye(n)
    Lft[n:, :n] = np.atleast_2d(sys.qu(u, v))
    Lft[n:, n:] = np.atleast_2d(sys.qv(u, v))
    D2 = np.diag(np.concatenate([np.full(n, lam), np.ones(r)]).astype(complex))
    return Lft @ np.linalg.inv(Afull) @ D2


def multid_symbol(model, u1, xi1, xi2):
    """P(i xi) = i xi1 A1 + i xi2 A2 + xi1^2 B11 + xi1 xi2 (B12+B21) + xi2^2 B22."""
    A1 = np.diag([u1, model.a])
    A2 = np.array([[0.0, 1.0], [1.0, 0.0]])
    return (1j * xi1 * A1 + 1j * xi2 * A2 + xi1**2 * model.B11
            + xi1 * xi2 * (model.B12 + model.B21) + xi2**2 * model.B22)


def multid_parabolicity_margin(model, nangles=180):
    """min over directions of the smallest eigenvalue of the symmetric part of
    the viscosity quadratic form, normalized by |xi|^2."""
    worst = np.inf
    for phi in np.linspace(0.0, np.pi, nangles, endpoint=False):
        x1, x2 = np.cos(phi), np.sin(phi)
        Q = x1**2 * model.B11 + x1 * x2 * (model.B12 + model.B21) + x2**2 * model.B22
        worst = min(worst, np.min(np.linalg.eigvalsh(0.5 * (Q + Q.T))))
    return float(worst)


def multid_symbol_positivity(model, u1, xi_grid, theta=None):
    """Check Re P(i xi) >= theta |xi|^2 diag(1, 0) over a xi grid; returns the
    minimum eigenvalue margin (negative means failure)."""
    if theta is None:
        theta = 0.5 * multid_parabolicity_margin(model)
    worst = np.inf
    W = np.diag([1.0, 0.0])
    for xi1, xi2 in xi_grid:
        P = multid_symbol(model, u1, xi1, xi2)
        ReP = 0.5 * (P + P.conj().T)
        M = ReP - theta * (xi1**2 + xi2**2) * W
        worst = min(worst, float(np.min(np.linalg.eigvalsh(M))))
    return worst, theta


def assemble_multid_model(eps, xi2, a=1.0, B11=None, B12=None, B21=None,
                          B22=None, L=None, npts=1601):
    """Integrated first-order form of the coupled Burgers/linear-degenerate
    model at fixed transverse frequency xi2.  N = 4."""
    from .registry import MultidModel

    model = MultidModel(a=float(a), B11=B11, B12=B12, B21=B21, B22=B22)
    if abs(model.B11[0, 0] - 1.0) > 1e-12:
        raise NotParabolic("normalization B11[0,0] = 1 required")
    if multid_parabolicity_margin(model) <= 0:
        raise NotParabolic("viscosity quadratic form is not uniformly positive")
    prof = burgers_profile(eps, L=L, npts=npts)
    B11i = np.linalg.inv(model.B11)
    A2 = np.array([[0.0, 1.0], [1.0, 0.0]])
    cross = model.B12 + model.B21
    I2 = np.eye(2)

    def _mat(u1, lam):
        A1 = np.diag([u1, model.a])
        M = np.zeros((4, 4), dtype=complex)
        M[:2, 2:] = I2
        M[2:, :2] = B11i @ (lam * I2 + 1j * xi2 * A2 + xi2**2 * model.B22)
        M[2:, 2:] = B11i @ (A1 + 1j * xi2 * cross)
        return M

    def A(x, lam):
        return _mat(prof.u_at(x)[0], lam)

    def A_limit(side, lam):
        return _mat(prof.u_plus[0] if side > 0 else prof.u_minus[0], lam)

    es = EigenvalueSystem(N=4, A=A, A_limit=A_limit, formulation="multid-model",
                          L=prof.L, profile=prof, system=model,
                          params={"xi2": float(xi2), "eps": float(eps)})
    es.decay = _measure_decay(A, A_limit, prof.L, _grid(prof))
    return es


def asymptotic_matrix(es, side, lam):
    """A_pm(lambda) at the requested side (+1 or -1)."""
    return es.A_limit(side, lam)


def check_consistent_splitting(es, lam, axis_tol=1e-9):
    """(k_plus, k_minus): stable dimension of A_+ and unstable of A_-.

    Raises SplittingFailure when an eigenvalue sits within tolerance of the
    imaginary axis or the dimensions are inconsistent.
    """
    wp = np.linalg.eigvals(es.A_limit(+1, lam))
    wm = np.linalg.eigvals(es.A_limit(-1, lam))
    for w in (wp, wm):
        scale = max(np.max(np.abs(w)), 1.0)
        j = int(np.argmin(np.abs(w.real)))
        if abs(w[j].real) < axis_tol * scale:
            raise SplittingFailure(
                f"eigenvalue {w[j]:.6g} within tolerance of the imaginary axis",
                eigenvalue=w[j])
    k_plus = int(np.sum(wp.real < 0))
    k_minus = int(np.sum(wm.real > 0))
    if k_plus + (es.N - int(np.sum(wm.real < 0))) != es.N:
        raise SplittingFailure("stable/unstable dimensions disagree")
    return k_plus, k_minus


def cauchy_riemann_residual(es, x, lam, h=1e-5):
    """Relative magnitude of the d/d(conj lambda) finite difference of A."""
    fa = (es.A(x, lam + h) - es.A(x, lam - h)) / (2 * h)
    fb = (es.A(x, lam + 1j * h) - es.A(x, lam - 1j * h)) / (2 * h)
    resid = 0.5 * (fa + 1j * fb)
    scale = max(np.max(np.abs(fa)), 1e-12)
    return float(np.max(np.abs(resid)) / scale)


def translational_residual(profile, sys, npts=2001):
    """Discrete L2 residual of the unintegrated linearized operator applied
    to u'.  The flux variable y = B w' - A_eps w vanishes identically for
    w = u', so the residual measures d/dx of the computed y."""
    x = np.linspace(-profile.L, profile.L, npts)
    u = profile.u_at(x)
    du = profile.du_at(x)
    from scipy.interpolate import CubicSpline

    ddu = CubicSpline(profile.x, profile.du, axis=0)(x, 1)
    m = len(x)
    y = np.empty((m, sys.n))
    for i in range(m):
        y[i] = sys.viscosity(u[i]) @ ddu[i] - _a_eps(sys, u[i], du[i]) @ du[i]
    dy = CubicSpline(x, y, axis=0)(x, 1)
    h = x[1] - x[0]
    return float(np.sqrt(np.sum(np.linalg.norm(dy, axis=1) ** 2) * h))
