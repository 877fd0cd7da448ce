"""System definitions, structural hypothesis checks, and the scalar constants
(genuine nonlinearity, effective diffusion, Chapman-Enskog viscosity) that
drive the small-amplitude reduction."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .errors import (
    DegenerateField,
    NonDissipative,
    NotStrictlyHyperbolic,
    SingularRelaxation,
)

# Relative eigenvalue-gap floor below which a spectrum is treated as coalescing.
SIMPLICITY_TOL = 1e-7


@dataclass(frozen=True)
class ViscousSystem:
    """Viscous conservation law u_t + f(u)_x = (B(u) u_x)_x near a base state.

    Derivatives are supplied, not differenced: `jacobian` is Df, `hessian`
    the bilinear action D2f(u)(v, w), `dviscosity` the directional derivative
    DB(u)(v) as an n x n matrix.
    """

    name: str
    n: int
    flux: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    viscosity: Callable[[np.ndarray], np.ndarray]
    dviscosity: Callable[[np.ndarray, np.ndarray], np.ndarray]
    base_state: np.ndarray
    radius: float = 1.0

    @property
    def kind(self):
        return "viscous"

    def identity_viscosity(self, rtol=1e-13):
        B0 = self.viscosity(self.base_state)
        return np.allclose(B0, np.eye(self.n), atol=rtol, rtol=0)


@dataclass(frozen=True)
class RelaxationSystem:
    """Relaxation system (u, v)_t + (f~, g~)_x = (0, q) with equilibrium v*(u).

    All first Jacobians are supplied; the reduced (equilibrium) flux is
    f(u) = f~(u, v*(u)) and its Jacobian is assembled by the chain rule.
    """

    name: str
    n: int
    r: int
    f_tilde: Callable
    g_tilde: Callable
    q: Callable
    fu: Callable
    fv: Callable
    gu: Callable
    gv: Callable
    qu: Callable
    qv: Callable
    v_star: Callable
    base_state: tuple
    radius: float = 1.0

    @property
    def kind(self):
        return "relaxation"

    def full_jacobian(self, u, v):
        """Flux Jacobian of the full (n+r)-system."""
        top = np.hstack([np.atleast_2d(self.fu(u, v)), np.atleast_2d(self.fv(u, v))])
        bot = np.hstack([np.atleast_2d(self.gu(u, v)), np.atleast_2d(self.gv(u, v))])
        return np.vstack([top, bot])

    def v_star_jacobian(self, u):
        """dv*/du = -qv^{-1} qu from implicit differentiation of q(u, v*(u)) = 0."""
        v = self.v_star(u)
        Qv = np.atleast_2d(self.qv(u, v))
        Qu = np.atleast_2d(self.qu(u, v))
        if abs(np.linalg.det(Qv)) < 1e-14 * max(1.0, np.linalg.norm(Qv)) ** self.r:
            raise SingularRelaxation(f"q_v singular at u={u}")
        return -np.linalg.solve(Qv, Qu)

    def reduced_flux(self, u):
        return np.atleast_1d(self.f_tilde(u, self.v_star(u)))

    def reduced_jacobian(self, u):
        """Df of the equilibrium flux f(u) = f~(u, v*(u))."""
        v = self.v_star(u)
        return np.atleast_2d(self.fu(u, v)) + np.atleast_2d(self.fv(u, v)) @ self.v_star_jacobian(u)


@dataclass
class SpectralDecomposition:
    """Sorted, binormalized eigendecomposition of a strictly hyperbolic matrix.

    Gauge: left rows have unit 2-norm with largest-magnitude entry positive;
    right columns satisfy l_j . r_k = delta_jk.  `p` is the 0-based index of
    the smallest-magnitude eigenvalue.
    """

    a: np.ndarray          # eigenvalues, ascending
    left: np.ndarray       # rows l_j
    right: np.ndarray      # columns r_j
    p: int

    @property
    def lp(self):
        return self.left[self.p]

    @property
    def rp(self):
        return self.right[:, self.p]


@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    margin: float
    witness: Optional[object] = None


@dataclass
class HypothesisReport:
    system: str
    checks: dict = field(default_factory=dict)

    def add(self, name, passed, margin, witness=None):
        self.checks[name] = HypothesisCheck(name, bool(passed), float(margin), witness)

    def __getitem__(self, name):
        return self.checks[name]

    @property
    def all_passed(self):
        return all(c.passed for c in self.checks.values())

    def as_dict(self):
        return {
            k: {"passed": c.passed, "margin": c.margin,
                "witness": None if c.witness is None else np.asarray(c.witness).tolist()}
            for k, c in self.checks.items()
        }


def _fix_sign(vec):
    """Flip so the largest-magnitude entry is positive; deterministic gauge."""
    i = int(np.argmax(np.abs(vec)))
    return -vec if vec[i] < 0 else vec


def characteristic_decomposition(A, ref=None):
    """Real simple eigendecomposition with binormalized left/right vectors.

    `ref` (a previous decomposition) aligns eigenvector signs along a smooth
    family; without it the unit-norm/positive-entry gauge applies.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    scale = max(np.linalg.norm(A, 2), 1e-30)
    w, vl, vr = sla.eig(A, left=True, right=True)
    if np.max(np.abs(w.imag)) > SIMPLICITY_TOL * scale:
        raise NotStrictlyHyperbolic(
            f"complex eigenvalue {w[np.argmax(np.abs(w.imag))]:.6g} in spectrum")
    a = w.real
    order = np.argsort(a)
    a = a[order]
    gaps = np.diff(a)
    if n > 1 and np.min(gaps) < SIMPLICITY_TOL * scale:
        j = int(np.argmin(gaps))
        raise NotStrictlyHyperbolic(
            f"eigenvalues {a[j]:.6g} and {a[j+1]:.6g} closer than tolerance")
    R = vr[:, order].real.copy()
    Lt = vl[:, order].real.copy()   # columns are left eigenvectors
    left = np.zeros((n, n))
    right = np.zeros((n, n))
    for j in range(n):
        l = Lt[:, j] / np.linalg.norm(Lt[:, j])
        l = _fix_sign(l)
        r = R[:, j]
        r = r / (l @ r)
        left[j] = l
        right[:, j] = r
    if ref is not None:
        for j in range(n):
            if ref.left[j] @ left[j] < 0:
                left[j] = -left[j]
                right[:, j] = -right[:, j]
    p = int(np.argmin(np.abs(a)))
    return SpectralDecomposition(a=a, left=left, right=right, p=p)


def _symbol_margin_viscous(A, B, xi_grid):
    """theta with Re sigma(-i A xi - B xi^2) <= -theta xi^2 over the grid."""
    worst = np.inf
    for xi in xi_grid:
        M = -1j * xi * A - xi**2 * B
        mu = np.max(np.linalg.eigvals(M).real)
        worst = min(worst, -mu / xi**2)
    return worst


def _xi_grid(lo=1e-2, hi=1e2, per_decade=64):
    ndec = int(np.log10(hi / lo))
    return np.logspace(np.log10(lo), np.log10(hi), per_decade * ndec + 1)


def _neighborhood_samples(u0, radius, n, count=4):
    rng = np.random.default_rng(7)
    pts = [np.asarray(u0, dtype=float)]
    for _ in range(count):
        d = rng.standard_normal(n)
        pts.append(u0 + 0.5 * radius * d / np.linalg.norm(d))
    return pts


def check_hypotheses_viscous(sys):
    """Evaluate H1-H4 at the base state and on a neighborhood sample.

    Failures are reported with margins and witnesses, never raised.
    """
    rep = HypothesisReport(system=sys.name)
    u0 = np.asarray(sys.base_state, dtype=float)
    samples = _neighborhood_samples(u0, sys.radius, sys.n)

    # H1: Re sigma(B) > 0
    margins = [np.min(np.linalg.eigvals(sys.viscosity(u)).real) for u in samples]
    m = float(np.min(margins))
    rep.add("H1_parabolicity", m > 0, max(m, 0.0),
            witness=None if m > 0 else samples[int(np.argmin(margins))])

    # H2: sigma(Df) real and simple
    h2_ok, h2_margin, witness = True, np.inf, None
    for u in samples:
        A = sys.jacobian(u)
        scale = max(np.linalg.norm(A, 2), 1e-30)
        w = np.linalg.eigvals(A)
        im = np.max(np.abs(w.imag)) / scale
        sr = np.sort(w.real)
        gap = np.min(np.diff(sr)) / scale if sys.n > 1 else np.inf
        if im > SIMPLICITY_TOL or gap < SIMPLICITY_TOL:
            h2_ok, witness = False, w
        h2_margin = min(h2_margin, gap)
    rep.add("H2_strict_hyperbolicity", h2_ok,
            h2_margin if np.isfinite(h2_margin) else 1.0, witness)

    # H3: Re sigma(-i Df xi - B xi^2) <= -theta xi^2, sampled on a log grid
    theta = min(_symbol_margin_viscous(sys.jacobian(u), sys.viscosity(u), _xi_grid())
                for u in samples)
    rep.add("H3_dissipativity", theta > 0, max(theta, 0.0))

    # H4: a_p(u0) ~ 0 simple, genuinely nonlinear
    try:
        dec = characteristic_decomposition(sys.jacobian(u0))
        scale = max(np.max(np.abs(dec.a)), 1e-30)
        near_zero = abs(dec.a[dec.p]) <= 1e-6 * scale
        Lam = float(dec.lp @ sys.hessian(u0, dec.rp, dec.rp))
        ok = near_zero and abs(Lam) > 1e-8
        rep.add("H4_genuine_nonlinearity", ok, abs(Lam) if near_zero else 0.0,
                witness=None if ok else dec.a)
        rep.checks["H4_genuine_nonlinearity"].coefficient = Lam
    except NotStrictlyHyperbolic as exc:
        rep.add("H4_genuine_nonlinearity", False, 0.0, witness=str(exc))
    return rep


def _symbol_margin_relaxation(sys, u, v, xi_grid):
    """theta with Re sigma(-i xi A_full + Q) <= -theta xi^2/(1+xi^2)."""
    Afull = sys.full_jacobian(u, v)
    n, r = sys.n, sys.r
    Q = np.zeros((n + r, n + r))
    Q[n:, :n] = np.atleast_2d(sys.qu(u, v))
    Q[n:, n:] = np.atleast_2d(sys.qv(u, v))
    worst = np.inf
    for xi in xi_grid:
        M = -1j * xi * Afull + Q
        mu = np.max(np.linalg.eigvals(M).real)
        worst = min(worst, -mu * (1 + xi**2) / xi**2)
    return worst


def check_hypotheses_relaxation(sys):
    """Relaxation analogs of H1-H4 plus equilibrium and subcharacteristic checks."""
    rep = HypothesisReport(system=sys.name)
    u0, v0 = (np.asarray(z, dtype=float) for z in sys.base_state)
    u_samples = _neighborhood_samples(u0, sys.radius, sys.n)

    # equilibrium manifold consistency and stability of q_v
    eq_resid = max(np.linalg.norm(np.atleast_1d(sys.q(u, sys.v_star(u)))) for u in u_samples)
    rep.add("equilibrium_manifold", eq_resid < 1e-10, eq_resid)
    qv_margin = min(-np.max(np.linalg.eigvals(np.atleast_2d(sys.qv(u, sys.v_star(u)))).real)
                    for u in u_samples)
    rep.add("equilibrium_stability", qv_margin > 0, max(qv_margin, 0.0),
            witness=None if qv_margin > 0 else u0)
    v0_resid = float(np.linalg.norm(v0 - np.atleast_1d(sys.v_star(u0))))
    rep.add("base_on_manifold", v0_resid < 1e-10, v0_resid)

    # H1: full flux Jacobian real, semisimple, bounded from zero
    h1_ok, zero_margin, real_margin, witness = True, np.inf, 0.0, None
    for u in u_samples:
        w = np.linalg.eigvals(sys.full_jacobian(u, sys.v_star(u)))
        scale = max(np.max(np.abs(w)), 1e-30)
        im = np.max(np.abs(w.imag)) / scale
        zm = np.min(np.abs(w.real)) if im < 1e-8 else 0.0
        if im > 1e-8 or zm <= 0:
            h1_ok, witness = False, w
        zero_margin = min(zero_margin, zm)
        real_margin = max(real_margin, im)
    rep.add("H1_full_hyperbolicity", h1_ok, zero_margin, witness)

    # H2: reduced flux strictly hyperbolic
    try:
        for u in u_samples:
            characteristic_decomposition(sys.reduced_jacobian(u))
        rep.add("H2_equilibrium_hyperbolicity", True, 1.0)
    except NotStrictlyHyperbolic as exc:
        rep.add("H2_equilibrium_hyperbolicity", False, 0.0, witness=str(exc))

    # H3: dissipativity of the full symbol, sampled
    try:
        theta = min(_symbol_margin_relaxation(sys, u, sys.v_star(u), _xi_grid())
                    for u in u_samples)
    except Exception:
        theta = -1.0
    rep.add("H3_dissipativity", theta > 0, max(theta, 0.0))

    # subcharacteristic condition via positivity of the principal
    # Chapman-Enskog diffusion on the sample
    try:
        betas = []
        for u in u_samples:
            dec = characteristic_decomposition(sys.reduced_jacobian(u))
            Bstar = chapman_enskog_viscosity(sys, u)
            betas.append(float(dec.lp @ Bstar @ dec.rp))
        beta_min = min(betas)
        rep.add("subcharacteristic", beta_min > 0, beta_min,
                witness=None if beta_min > 0 else u_samples[int(np.argmin(betas))])
    except (NotStrictlyHyperbolic, SingularRelaxation) as exc:
        rep.add("subcharacteristic", False, 0.0, witness=str(exc))

    # H4 for the equilibrium system
    try:
        dec = characteristic_decomposition(sys.reduced_jacobian(u0))
        scale = max(np.max(np.abs(dec.a)), 1e-30)
        near_zero = abs(dec.a[dec.p]) <= 1e-6 * scale
        Lam = float(dec.lp @ _reduced_hessian_action(sys, u0, dec.rp))
        ok = near_zero and abs(Lam) > 1e-8
        rep.add("H4_genuine_nonlinearity", ok, abs(Lam) if near_zero else 0.0,
                witness=None if ok else dec.a)
        rep.checks["H4_genuine_nonlinearity"].coefficient = float(Lam)
    except NotStrictlyHyperbolic as exc:
        rep.add("H4_genuine_nonlinearity", False, 0.0, witness=str(exc))
    return rep


def _reduced_hessian_action(sys, u, v, h=1e-5):
    """D2f(u)(v, v) of the equilibrium flux by central differencing of the
    exact reduced Jacobian along v (first Jacobians are supplied, the second
    derivative is not part of the relaxation contract)."""
    scale = max(np.linalg.norm(u), 1.0)
    step = h * scale
    Jp = sys.reduced_jacobian(u + step * v)
    Jm = sys.reduced_jacobian(u - step * v)
    return ((Jp - Jm) / (2 * step)) @ v


def genuine_nonlinearity_and_diffusion(sys, u):
    """(Lambda, beta) of the principal field at state u.

    Lambda = l_p . D2f(r_p, r_p); beta = l_p B r_p (viscous) or
    l_p B* r_p (relaxation).
    """
    u = np.asarray(u, dtype=float)
    if sys.kind == "viscous":
        dec = characteristic_decomposition(sys.jacobian(u))
        Lam = float(dec.lp @ sys.hessian(u, dec.rp, dec.rp))
        beta = float(dec.lp @ sys.viscosity(u) @ dec.rp)
    else:
        dec = characteristic_decomposition(sys.reduced_jacobian(u))
        Lam = float(dec.lp @ _reduced_hessian_action(sys, u, dec.rp))
        beta = float(dec.lp @ chapman_enskog_viscosity(sys, u) @ dec.rp)
    if abs(Lam) < 1e-8:
        raise DegenerateField(f"|Lambda| = {abs(Lam):.3g} below tolerance")
    if beta <= 0:
        raise NonDissipative(f"beta = {beta:.3g} <= 0")
    return Lam, beta


def chapman_enskog_viscosity(sys, u):
    """Effective viscosity B*(u) = -f~_v q_v^{-1} (g_u - v*_u f_u).

    g(u) = g~(u, v*(u)), f(u) = f~(u, v*(u)), v*_u = -q_v^{-1} q_u; all
    Jacobians of the composites assembled by the chain rule.
    """
    u = np.asarray(u, dtype=float)
    v = np.atleast_1d(sys.v_star(u))
    Qv = np.atleast_2d(sys.qv(u, v))
    if abs(np.linalg.det(Qv)) < 1e-14 * max(1.0, np.linalg.norm(Qv)) ** sys.r:
        raise SingularRelaxation(f"q_v singular at u={u}")
    vu = sys.v_star_jacobian(u)
    Fu = np.atleast_2d(sys.fu(u, v)) + np.atleast_2d(sys.fv(u, v)) @ vu
    Gu = np.atleast_2d(sys.gu(u, v)) + np.atleast_2d(sys.gv(u, v)) @ vu
    Fv = np.atleast_2d(sys.fv(u, v))
    return -Fv @ np.linalg.solve(Qv, Gu - vu @ Fu)
