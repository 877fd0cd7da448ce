"""Shock profile construction: exact Burgers profiles, boundary-value solves
for viscous and relaxation systems, rescaling into Burgers coordinates, and a
portable text cache."""

import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_bvp
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .errors import NoConnection, NoEndpoint
from .model import characteristic_decomposition, genuine_nonlinearity_and_diffusion


@dataclass
class ShockProfile:
    """Discretized stationary profile with endpoint states and decay metadata.

    `eps` is the amplitude parameter of the rescaling: half the jump of the
    principal coordinate l_p(u_-).(u_+ - u_-); for the Burgers family
    -eps*tanh(eps*x/2) it coincides with the tanh coefficient.
    """

    system: object
    kind: str                    # "viscous" | "relaxation"
    x: np.ndarray
    u: np.ndarray                # (m, n)
    du: np.ndarray               # (m, n)
    u_minus: np.ndarray
    u_plus: np.ndarray
    eps: float
    L: float
    theta_hat: float = 0.0
    tail_r2: float = 0.0
    ode_residual: float = 0.0
    lp_minus: np.ndarray = None  # left principal eigenvector at u_-
    v: Optional[np.ndarray] = None     # (m, r) for relaxation
    dv: Optional[np.ndarray] = None
    v_minus: Optional[np.ndarray] = None
    v_plus: Optional[np.ndarray] = None
    _uspl: object = field(default=None, repr=False)
    _vspl: object = field(default=None, repr=False)

    def __post_init__(self):
        if self._uspl is None:
            self._uspl = CubicHermiteSpline(self.x, self.u, self.du, axis=0)
        if self.v is not None and self._vspl is None:
            dv = self.dv if self.dv is not None else CubicSpline(self.x, self.v, axis=0)(self.x, 1)
            self.dv = dv
            self._vspl = CubicHermiteSpline(self.x, self.v, dv, axis=0)

    @property
    def n(self):
        return self.u.shape[1]

    @property
    def r(self):
        return 0 if self.v is None else self.v.shape[1]

    @property
    def mid(self):
        return 0.5 * (self.u_minus + self.u_plus)

    def u_at(self, x):
        return self._uspl(x)

    def du_at(self, x):
        return self._uspl(x, 1)

    def v_at(self, x):
        return self._vspl(x)

    def dv_at(self, x):
        return self._vspl(x, 1)

    def eta(self, x):
        """Principal coordinate l_p(u_-).(u(x) - (u_- + u_+)/2)."""
        return (self.u_at(x) - self.mid) @ self.lp_minus


@dataclass
class RescaledProfile:
    xtil: np.ndarray
    eta: np.ndarray       # eta/eps on the rescaled grid, decreasing
    eps: float
    eta_minus: float      # rest-point proxies in rescaled units
    eta_plus: float


def _tail_fit(x, u, u_minus, u_plus):
    """Fit log||u - u_pm|| ~ c - theta |x| on the outer half of each side."""
    rates, r2s = [], []
    for side in (-1, 1):
        target = u_minus if side < 0 else u_plus
        mask = (side * x) > 0.5 * np.max(np.abs(x))
        d = np.linalg.norm(u[mask] - target, axis=1)
        keep = d > 1e-13
        if np.count_nonzero(keep) < 5:
            continue
        ax = np.abs(x[mask][keep])
        ly = np.log(d[keep])
        A = np.vstack([np.ones_like(ax), -ax]).T
        coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
        pred = A @ coef
        ss_res = np.sum((ly - pred) ** 2)
        ss_tot = np.sum((ly - np.mean(ly)) ** 2)
        rates.append(coef[1])
        r2s.append(1.0 - ss_res / max(ss_tot, 1e-300))
    if not rates:
        return 0.0, 0.0
    return float(np.mean(rates)), float(np.min(r2s))


def principal_amplitude(sys_dec_lp, u_minus, u_plus):
    return 0.5 * abs(float(sys_dec_lp @ (u_plus - u_minus)))


def burgers_profile(eps, L=None, npts=1601):
    """Exact Burgers profile -eps*tanh(eps*x/2) sampled on [-L, L]."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if L is None:
        L = 16.0 / eps
    x = np.linspace(-L, L, npts)
    u = -eps * np.tanh(eps * x / 2.0)
    du = -(eps**2 / 2.0) / np.cosh(eps * x / 2.0) ** 2
    from .registry import burgers_system

    sys = burgers_system()
    theta, r2 = _tail_fit(x, u[:, None], np.array([eps]), np.array([-eps]))
    prof = ShockProfile(
        system=sys, kind="viscous", x=x, u=u[:, None], du=du[:, None],
        u_minus=np.array([eps]), u_plus=np.array([-eps]), eps=float(eps),
        L=float(L), theta_hat=theta, tail_r2=r2, ode_residual=0.0,
        lp_minus=np.array([1.0]),
    )
    return prof


def _reduced_or_full_jacobian(sys, u):
    return sys.jacobian(u) if sys.kind == "viscous" else sys.reduced_jacobian(u)


def _flux(sys, u):
    return np.atleast_1d(sys.flux(u)) if sys.kind == "viscous" else sys.reduced_flux(u)


def hugoniot_endpoint(sys, u_minus, eps):
    """Opposite endpoint u_+ with f(u_+) = f(u_-) by Newton iteration.

    `eps` sizes the initial guess along the principal direction and the
    domain guard; for the relaxation case f is the equilibrium flux.
    """
    u_minus = np.asarray(u_minus, dtype=float)
    u0 = np.asarray(sys.base_state[0] if sys.kind == "relaxation" else sys.base_state,
                    dtype=float)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if eps > sys.radius:
        raise NoEndpoint(f"eps={eps} exceeds neighborhood radius {sys.radius}")
    dec0 = characteristic_decomposition(_reduced_or_full_jacobian(sys, u0))
    Lam, _ = genuine_nonlinearity_and_diffusion(sys, u0)
    f_minus = _flux(sys, u_minus)
    # the opposite root sits at u_- - (2 a_p(u_-)/Lam) r_p to leading order
    dec_m = characteristic_decomposition(_reduced_or_full_jacobian(sys, u_minus))
    direction = np.sign(Lam * dec_m.a[dec_m.p]) or 1.0
    u = u_minus - 2.0 * eps * direction * dec0.right[:, dec0.p]
    for _ in range(60):
        res = _flux(sys, u) - f_minus
        if np.linalg.norm(res) < 1e-14 * max(1.0, np.linalg.norm(f_minus)):
            break
        J = _reduced_or_full_jacobian(sys, u)
        try:
            step = np.linalg.solve(J, res)
        except np.linalg.LinAlgError:
            raise NoEndpoint("singular Jacobian during Newton solve")
        u = u - step
        if np.linalg.norm(u - u0) > 4.0 * sys.radius:
            raise NoEndpoint("Newton iterate left the neighborhood")
    else:
        raise NoEndpoint("Newton did not converge")
    if np.linalg.norm(u - u_minus) < 0.1 * eps:
        raise NoEndpoint("Newton converged back to u_-")
    return u


def _projection_rows(J, side, tol=1e-9):
    """Left-eigenvector rows of J for Re(mu) < -tol (side=-1, decaying
    directions at -inf) or Re(mu) > tol (side=+1, growing at +inf)."""
    w, vl = np.linalg.eig(J.T)
    rows = []
    for j in range(len(w)):
        if (side < 0 and w[j].real < -tol) or (side > 0 and w[j].real > tol):
            rows.append(vl[:, j].real / np.linalg.norm(vl[:, j].real))
    if rows:
        return np.array(rows)
    return np.zeros((0, J.shape[0]))


def _lax_check(sys, u_minus, u_plus):
    dm = characteristic_decomposition(_reduced_or_full_jacobian(sys, u_minus))
    dp = characteristic_decomposition(_reduced_or_full_jacobian(sys, u_plus))
    if not (dm.a[dm.p] > 0 > dp.a[dp.p]):
        raise NoConnection(
            f"Lax condition fails: a_p(u-)={dm.a[dm.p]:.3g}, a_p(u+)={dp.a[dp.p]:.3g}")
    return dm, dp


def _two_interval_bvp(F, w_minus, w_plus, extra_left, extra_right, phase_row,
                      phase_value, L, tol, guess, max_nodes=100000):
    """Solve w' = F(w) on [-L, L] as a doubled system on t in [0, 1] with
    continuity at the interior point, projection conditions at the ends, an
    interior phase condition and optional algebraic pinning at the left end.

    extra_left(w) / extra_right(w) return residual vectors evaluated at
    w(-L) / w(+L).  phase_row . (w(0) - phase_value) = 0 fixes translation.
    """
    N = len(w_minus)

    def fun(t, Y):
        wl, wr = Y[:N], Y[N:]
        dl = np.empty_like(wl)
        dr = np.empty_like(wr)
        for k in range(Y.shape[1]):
            dl[:, k] = -L * F(wl[:, k])
            dr[:, k] = L * F(wr[:, k])
        return np.vstack([dl, dr])

    def bc(Ya, Yb):
        wl0, wr0 = Ya[:N], Ya[N:]
        wl1, wr1 = Yb[:N], Yb[N:]
        conds = [wl0 - wr0,
                 np.atleast_1d(phase_row @ (wr0 - phase_value)),
                 extra_left(wl1),
                 extra_right(wr1)]
        return np.concatenate([np.atleast_1d(c) for c in conds])

    t = guess[0]
    Y0 = guess[1]
    res = solve_bvp(fun, bc, t, Y0, tol=tol, max_nodes=max_nodes, verbose=0)
    if not res.success:
        raise NoConnection(f"BVP solver failed: {res.message}")
    return res


def _emit_profile(sys, kind, res, F, L, npts, u_minus, u_plus, lp_minus,
                  n, v_minus=None, v_plus=None):
    x = np.linspace(-L, L, npts)
    t = np.abs(x) / L
    N = len(u_minus) + (0 if v_minus is None else len(v_minus))
    W = np.empty((npts, N))
    dW = np.empty((npts, N))
    Y = res.sol(t)
    dY = res.sol(t, 1)
    neg = x <= 0
    W[neg] = Y[:N, neg].T
    W[~neg] = Y[N:, ~neg].T
    dW[neg] = -dY[:N, neg].T / L
    dW[~neg] = dY[N:, ~neg].T / L
    resid = max(np.linalg.norm(dW[i] - F(W[i])) for i in range(0, npts, max(1, npts // 400)))
    u, du = W[:, :n], dW[:, :n]
    theta, r2 = _tail_fit(x, u, u_minus, u_plus)
    eps = principal_amplitude(lp_minus, u_minus, u_plus)
    v = dv = None
    if v_minus is not None:
        v, dv = W[:, n:], dW[:, n:]
    return ShockProfile(
        system=sys, kind=kind, x=x, u=u, du=du, u_minus=u_minus, u_plus=u_plus,
        eps=eps, L=float(L), theta_hat=theta, tail_r2=r2, ode_residual=float(resid),
        lp_minus=lp_minus, v=v, dv=dv, v_minus=v_minus, v_plus=v_plus,
    )


def solve_viscous_profile(sys, u_minus, eps=None, L=None, tol=1e-10, npts=1601):
    """Connecting orbit of B(u) u' = f(u) - f(u_-), centered so the principal
    coordinate vanishes at x = 0."""
    u_minus = np.asarray(u_minus, dtype=float)
    dec_m = characteristic_decomposition(sys.jacobian(u_minus))
    eps_guess = eps if eps is not None else abs(dec_m.a[dec_m.p])
    u_plus = hugoniot_endpoint(sys, u_minus, eps_guess)
    dm, _ = _lax_check(sys, u_minus, u_plus)
    lp_minus = dm.left[dm.p]
    eps_eff = principal_amplitude(lp_minus, u_minus, u_plus)
    Lam, beta = genuine_nonlinearity_and_diffusion(sys, np.asarray(sys.base_state, float))
    if L is None:
        L = 16.0 * beta / (abs(Lam) * eps_eff)

    f_minus = np.atleast_1d(sys.flux(u_minus))

    def F(u):
        return np.linalg.solve(sys.viscosity(u), np.atleast_1d(sys.flux(u)) - f_minus)

    Jm = np.linalg.solve(sys.viscosity(u_minus), sys.jacobian(u_minus))
    Jp = np.linalg.solve(sys.viscosity(u_plus), sys.jacobian(u_plus))
    rows_m = _projection_rows(Jm, side=-1)
    rows_p = _projection_rows(Jp, side=+1)

    def extra_left(w):
        return rows_m @ (w - u_minus)

    def extra_right(w):
        return rows_p @ (w - u_plus)

    mid = 0.5 * (u_minus + u_plus)
    kappa = abs(Lam) * eps_eff / (2.0 * beta)
    tmesh = np.linspace(0, 1, 201)
    xl, xr = -L * tmesh, L * tmesh
    half = 0.5 * (u_minus - u_plus)
    Y0 = np.vstack([(mid[None, :] + np.tanh(kappa * xl)[:, None] * -half[None, :]).T,
                    (mid[None, :] + np.tanh(kappa * xr)[:, None] * -half[None, :]).T])
    res = _two_interval_bvp(F, u_minus, u_plus, extra_left, extra_right,
                            lp_minus, mid, L, tol, (tmesh, Y0))
    return _emit_profile(sys, "viscous", res, F, L, npts, u_minus, u_plus,
                         lp_minus, sys.n)


def solve_relaxation_profile(sys, u_minus, eps=None, L=None, tol=1e-10, npts=1601):
    """Connecting orbit of the relaxation profile ODE in conservative form:
    f~(u, v) is constant along the orbit and g~(u, v)' = q(u, v)."""
    u_minus = np.asarray(u_minus, dtype=float)
    v_minus = np.atleast_1d(sys.v_star(u_minus))
    dec_m = characteristic_decomposition(sys.reduced_jacobian(u_minus))
    eps_guess = eps if eps is not None else abs(dec_m.a[dec_m.p])
    u_plus = hugoniot_endpoint(sys, u_minus, eps_guess)
    v_plus = np.atleast_1d(sys.v_star(u_plus))
    dm, _ = _lax_check(sys, u_minus, u_plus)
    lp_minus = dm.left[dm.p]
    eps_eff = principal_amplitude(lp_minus, u_minus, u_plus)
    u0 = np.asarray(sys.base_state[0], dtype=float)
    Lam, beta = genuine_nonlinearity_and_diffusion(sys, u0)
    if L is None:
        L = 16.0 * beta / (abs(Lam) * eps_eff)

    n, r = sys.n, sys.r
    w_minus = np.concatenate([u_minus, v_minus])
    w_plus = np.concatenate([u_plus, v_plus])
    ftil_minus = np.atleast_1d(sys.f_tilde(u_minus, v_minus))

    def F(w):
        u, v = w[:n], w[n:]
        rhs = np.concatenate([np.zeros(n), np.atleast_1d(sys.q(u, v))])
        return np.linalg.solve(sys.full_jacobian(u, v), rhs)

    def profile_jac(w):
        u, v = w[:n], w[n:]
        Q = np.zeros((n + r, n + r))
        Q[n:, :n] = np.atleast_2d(sys.qu(u, v))
        Q[n:, n:] = np.atleast_2d(sys.qv(u, v))
        return np.linalg.solve(sys.full_jacobian(u, v), Q)

    rows_m = _projection_rows(profile_jac(w_minus), side=-1, tol=1e-8)
    rows_p = _projection_rows(profile_jac(w_plus), side=+1, tol=1e-8)

    def extra_left(w):
        pin = np.atleast_1d(sys.f_tilde(w[:n], w[n:])) - ftil_minus
        return np.concatenate([pin, rows_m @ (w - w_minus)])

    def extra_right(w):
        return rows_p @ (w - w_plus)

    mid = 0.5 * (w_minus + w_plus)
    phase_row = np.concatenate([lp_minus, np.zeros(r)])
    kappa = abs(Lam) * eps_eff / (2.0 * beta)
    tmesh = np.linspace(0, 1, 201)
    half = 0.5 * (w_minus - w_plus)
    Y0 = np.vstack([(mid[None, :] + np.tanh(kappa * (-L * tmesh))[:, None] * -half[None, :]).T,
                    (mid[None, :] + np.tanh(kappa * (L * tmesh))[:, None] * -half[None, :]).T])
    res = _two_interval_bvp(F, w_minus, w_plus, extra_left, extra_right,
                            phase_row, mid, L, tol, (tmesh, Y0))
    return _emit_profile(sys, "relaxation", res, F, L, npts, u_minus, u_plus,
                         lp_minus, n, v_minus=v_minus, v_plus=v_plus)


def solve_profile(sys, u_minus, **kw):
    if sys.kind == "viscous":
        return solve_viscous_profile(sys, u_minus, **kw)
    return solve_relaxation_profile(sys, u_minus, **kw)


def principal_speed_along(profile, x):
    """a_p(u(x)) tracked continuously along the profile."""
    sys = profile.system
    jac = (sys.jacobian if sys.kind == "viscous" else sys.reduced_jacobian)
    out = np.empty(len(x))
    ref = None
    for i, xi in enumerate(x):
        dec = characteristic_decomposition(jac(profile.u_at(xi)), ref=ref)
        out[i] = dec.a[dec.p]
        ref = dec
    return out


def rescale_and_compare(profile, Lam, beta):
    """Rescale to Burgers coordinates and measure convergence to the exact
    profile: sup|eta - etabar|, fitted tail rate, and the principal
    characteristic error sup|a_p/eps - etabar|."""
    eps = profile.eps
    scale = abs(Lam) * eps / beta
    xtil = profile.x * scale
    eta = profile.eta(profile.x) / eps
    flip = eta[0] < eta[-1]
    if flip:
        eta = -eta
    etabar = -np.tanh(xtil / 2.0)
    sup_err = float(np.max(np.abs(eta - etabar)))

    # full-state deviation from the Burgers-line embedding along the secant
    # direction; measures the O(eps) bowing of the connecting orbit
    sec = (profile.u_minus - profile.u_plus) / (2.0 * eps)
    if flip:
        sec = -sec
    state_err = (profile.u - profile.mid) / eps - etabar[:, None] * sec[None, :]
    sup_state = float(np.max(np.linalg.norm(state_err, axis=1)))

    # tail rate of (eta - eta_pm) - (etabar - etabar_pm) in rescaled units
    eta_minus, eta_plus = eta[0], eta[-1]
    theta_hat = profile.theta_hat * beta / (abs(Lam) * eps)

    sub = np.linspace(-profile.L, profile.L, 241)
    ap = principal_speed_along(profile, sub) / eps
    if eta[0] < 0:
        ap = -ap
    ap_err = float(np.max(np.abs(ap - (-np.tanh(sub * scale / 2.0)))))

    report = {
        "sup_eta_error": sup_err,
        "sup_state_error": sup_state,
        "theta_hat": float(theta_hat),
        "sup_ap_error": ap_err,
        "eta_minus": float(eta_minus),
        "eta_plus": float(eta_plus),
    }
    rescaled = RescaledProfile(xtil=xtil, eta=eta, eps=eps,
                               eta_minus=float(eta_minus), eta_plus=float(eta_plus))
    return rescaled, report


def save_profile(profile, path):
    """Portable text cache: header (name, eps, L, grid size, n, r), then rows
    x u_1..u_n [v_1..v_r] du_1..du_n."""
    name = getattr(profile.system, "name", "unknown")
    m = len(profile.x)
    pack = lambda a: ",".join(f"{z:.17g}" for z in np.atleast_1d(a))
    ends = f"uminus={pack(profile.u_minus)} uplus={pack(profile.u_plus)}"
    if profile.v is not None:
        ends += f" vminus={pack(profile.v_minus)} vplus={pack(profile.v_plus)}"
    with io.open(path, "w") as fh:
        fh.write(f"{name} eps={profile.eps:.17g} L={profile.L:.17g} "
                 f"m={m} n={profile.n} r={profile.r} {ends}\n")
        for i in range(m):
            row = [profile.x[i], *profile.u[i]]
            if profile.v is not None:
                row.extend(profile.v[i])
            row.extend(profile.du[i])
            fh.write(" ".join(f"{z:.17g}" for z in row) + "\n")


def load_profile(path, system):
    """Rebuild a profile from the text cache; dv is re-differenced from v."""
    with io.open(path) as fh:
        header = fh.readline().split()
        name = header[0]
        kv = dict(tok.split("=") for tok in header[1:])
        m, n, r = int(kv["m"]), int(kv["n"]), int(kv["r"])
        data = np.loadtxt(fh)
    if data.shape != (m, 1 + 2 * n + r):
        raise ValueError(f"cache shape mismatch in {path}")
    x = data[:, 0]
    u = data[:, 1:1 + n]
    v = data[:, 1 + n:1 + n + r] if r else None
    du = data[:, 1 + n + r:]
    unpack = lambda s: np.array([float(t) for t in s.split(",")])
    u_minus = unpack(kv["uminus"]) if "uminus" in kv else u[0].copy()
    u_plus = unpack(kv["uplus"]) if "uplus" in kv else u[-1].copy()
    v_minus = unpack(kv["vminus"]) if "vminus" in kv else (None if v is None else v[0].copy())
    v_plus = unpack(kv["vplus"]) if "vplus" in kv else (None if v is None else v[-1].copy())
    dec = characteristic_decomposition(
        system.jacobian(u_minus) if system.kind == "viscous"
        else system.reduced_jacobian(u_minus))
    lp = dec.left[dec.p]
    theta, r2 = _tail_fit(x, u, u_minus, u_plus)
    return ShockProfile(
        system=system, kind=system.kind, x=x, u=u, du=du,
        u_minus=u_minus, u_plus=u_plus,
        eps=float(kv["eps"]), L=float(kv["L"]), theta_hat=theta, tail_r2=r2,
        ode_residual=0.0, lp_minus=lp, v=v, v_minus=v_minus, v_plus=v_plus,
    )
