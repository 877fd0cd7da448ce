"""Executable form of the slow/fast reduction: block bases for the eigenvalue
systems, derivative-killing normalization, approximate block-diagonalization
with measured certificates, the invariant-graph (tracking) reduction, and the
three-regime normal forms."""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.integrate import cumulative_trapezoid, solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import linear_sum_assignment

from .errors import (
    CertificateFailure,
    DegenerateMode,
    ExpansionDomainExceeded,
    GapTooSmall,
    NoContraction,
    WrongFormulation,
)
from .evalsys import balanced_flux_blocks
from .model import characteristic_decomposition, genuine_nonlinearity_and_diffusion

BLOCK_ORDER = ("nu-", "rho-", "p", "rho+", "nu+")


@dataclass
class BlockBasis:
    """Row/column matrices of the mode decomposition on a grid, partitioned
    into (nu-, rho-, principal, rho+, nu+) by asymptotic behavior."""

    x: np.ndarray
    lam: complex
    L: np.ndarray          # (m, N, N): rows
    R: np.ndarray          # (m, N, N): columns
    dL: np.ndarray
    dR: np.ndarray
    blocks: dict           # name -> slice
    mu: dict               # name -> (m, k) mode eigenvalues (transverse blocks)
    ap: np.ndarray         # principal speed along the grid
    es: object = None
    profile: object = None
    normalized: bool = False

    @property
    def N(self):
        return self.L.shape[1]


@dataclass
class ReducedSystem:
    """Block-diagonal part M, scaled coupling Theta with the transformed
    coefficient equal to M + delta*Theta, envelope delta(x) = |eta'|, and the
    measured certificate constants."""

    basis: BlockBasis
    M: np.ndarray          # (m, N, N), block diagonal
    Theta: np.ndarray      # (m, N, N)
    delta: np.ndarray      # (m,)
    certificates: dict = field(default_factory=dict)

    @property
    def blocks(self):
        return self.basis.blocks

    def block(self, name):
        s = self.blocks[name]
        return self.M[:, s, s]

    def coefficient(self):
        return self.M + self.delta[:, None, None] * self.Theta


@dataclass
class RegimeSegment:
    tag: str
    lo: float
    hi: float
    lam_scale: float       # lam_rescaled = lam / lam_scale
    x_scale: float         # x_rescaled = x * x_scale
    z_scale: float         # z_rescaled = z / z_scale

    @property
    def lo_rescaled(self):
        return self.lo / self.lam_scale

    @property
    def hi_rescaled(self):
        return self.hi / self.lam_scale

    def rescale_lam(self, lam):
        return lam / self.lam_scale

    def unscale_lam(self, lam_tilde):
        return lam_tilde * self.lam_scale


class _FrozenState:
    """Profile shim pinned to one endpoint state; used to evaluate basis and
    coefficient data exactly at x = +-infinity, where delta vanishes."""

    def __init__(self, profile, side):
        self.system = profile.system
        self.lp_minus = profile.lp_minus
        self.eps = profile.eps
        self.L = profile.L
        self._u = profile.u_plus if side > 0 else profile.u_minus
        self._v = None
        if profile.v is not None:
            self._v = profile.v_plus if side > 0 else profile.v_minus
        self.x = np.array([-1.0, 0.0, 1.0])

    def u_at(self, x):
        return np.broadcast_to(self._u, np.shape(x) + self._u.shape).copy() \
            if np.ndim(x) else self._u.copy()

    def du_at(self, x):
        return np.zeros(np.shape(x) + self._u.shape) if np.ndim(x) \
            else np.zeros_like(self._u)

    def v_at(self, x):
        return self._v.copy()

    def dv_at(self, x):
        return np.zeros_like(self._v)


# ---------------------------------------------------------------------------
# basis construction

def _identity_mode_data(sys, profile, x, lam):
    """Analytic mode vectors and x-derivatives for B == I.

    Transverse eigenvectors come from the quadratic-formula roots; the
    principal two-dimensional block is spanned by (r_p, 0) and (0, r_p),
    which is exactly invariant.  Everything is differentiated through the
    profile by the chain rule (no finite differences of eigenvectors).
    """
    n = sys.n
    u = profile.u_at(x)
    du = profile.du_at(x)
    u0 = np.asarray(sys.base_state, dtype=float)
    ref = characteristic_decomposition(sys.jacobian(u0))
    dec = characteristic_decomposition(sys.jacobian(u), ref=ref)
    dA = np.column_stack([sys.hessian(u, np.eye(n)[:, j], du) for j in range(n)])
    a, Lrows, Rcols, p = dec.a, dec.left, dec.right, dec.p

    da = np.array([Lrows[j] @ dA @ Rcols[:, j] for j in range(n)])
    dl = np.zeros((n, n))
    dr = np.zeros((n, n))
    for j in range(n):
        raw_l = np.zeros(n)
        raw_r = np.zeros(n)
        for k in range(n):
            if k == j:
                continue
            raw_l += (Lrows[j] @ dA @ Rcols[:, k]) / (a[j] - a[k]) * Lrows[k]
            raw_r += (Lrows[k] @ dA @ Rcols[:, j]) / (a[j] - a[k]) * Rcols[:, k]
        cl = -(Lrows[j] @ raw_l)          # keep ||l_j|| = 1
        dl[j] = raw_l + cl * Lrows[j]
        dr[:, j] = raw_r - (dl[j] @ Rcols[:, j]) * Rcols[:, j]   # keep l_j r_j = 1

    guard = min((a[j] ** 2 / 4.0 for j in range(n) if j != p), default=np.inf)
    if abs(lam) > 0.6 * guard:
        raise ExpansionDomainExceeded(
            f"|lam|={abs(lam):.3g} too large for transverse branch separation")

    modes = {name: [] for name in BLOCK_ORDER}
    mus = {name: [] for name in BLOCK_ORDER}
    for j in range(n):
        if j == p:
            continue
        aj = a[j]
        if abs(aj) < 1e-8:
            raise DegenerateMode(f"transverse speed a_{j} = {aj:.3g} ~ 0")
        s = np.sqrt(aj * aj + 4.0 * lam + 0j)
        sgn = 1.0 if aj > 0 else -1.0
        for cls in ("fast", "slow"):
            mu = 0.5 * (aj + sgn * s) if cls == "fast" else 0.5 * (aj - sgn * s)
            dmu = (0.5 * (1.0 + sgn * aj / s) if cls == "fast"
                   else 0.5 * (1.0 - sgn * aj / s)) * da[j]
            den = lam + mu * mu
            Lv = np.concatenate([lam / den * Lrows[j], mu / den * Lrows[j]])
            Rv = np.concatenate([Rcols[:, j], mu * Rcols[:, j]])
            dden = 2.0 * mu * dmu
            dLv = np.concatenate([
                lam * (dl[j] / den - Lrows[j] * dden / den**2),
                dmu * Lrows[j] / den + mu * (dl[j] / den - Lrows[j] * dden / den**2),
            ])
            dRv = np.concatenate([dr[:, j], dmu * Rcols[:, j] + mu * dr[:, j]])
            name = ("nu+" if aj > 0 else "nu-") if cls == "fast" \
                else ("rho-" if aj > 0 else "rho+")
            modes[name].append((Lv, Rv, dLv, dRv))
            mus[name].append(mu)

    z = np.zeros(n)
    lp, rp = Lrows[p], Rcols[:, p]
    dlp, drp = dl[p], dr[:, p]
    modes["p"] = [
        (np.concatenate([lp, z]), np.concatenate([rp, z]),
         np.concatenate([dlp, z]), np.concatenate([drp, z])),
        (np.concatenate([z, lp]), np.concatenate([z, rp]),
         np.concatenate([z, dlp]), np.concatenate([z, drp])),
    ]
    mus["p"] = [np.nan, np.nan]
    return modes, mus, a[p]


def _pointwise_general_modes(es, profile, x, lam, ref_dec):
    """Numerically exact mode decomposition of A(x, lam) for the general
    viscous and balanced-flux formulations, gauged pointwise against smooth
    leading-order predictions."""
    sys = es.system
    N = es.N
    M = es.A(x, lam)
    u = profile.u_at(x)

    if es.formulation == "integrated-general-viscous":
        from .evalsys import _a_eps

        n = sys.n
        du = profile.du_at(x)
        Aeps = _a_eps(sys, u, du)
        B = sys.viscosity(u)
        dec = characteristic_decomposition(Aeps, ref=ref_dec[0])
        gdec = characteristic_decomposition(np.linalg.solve(B, Aeps), ref=ref_dec[1])
        a, p = dec.a, dec.p
        gam, kp = gdec.a, gdec.p
        preds, pvecs = [], []
        for j in range(n):
            if j != p:
                preds.append(("rho-" if a[j] > 0 else "rho+", -lam / a[j]))
                pvecs.append(np.concatenate([dec.right[:, j], np.zeros(n)]))
        for j in range(n):
            if j != kp:
                preds.append(("nu+" if gam[j] > 0 else "nu-", gam[j] + 0j))
                pvecs.append(np.concatenate([gdec.right[:, j],
                                             gam[j] * gdec.right[:, j]]))
        lp, rp = dec.left[p], dec.right[:, p]
        s_raw = gdec.right[:, kp]
        s_p = s_raw / (lp @ s_raw)
        head = np.concatenate([rp, np.zeros(n)])
        second = np.concatenate([np.zeros(n), s_p])
        lrow_eta = np.concatenate([lp, np.zeros(n)])
        lrow_z = np.concatenate([np.zeros(n), gdec.left[kp] * (lp @ s_raw)])
        ap = a[p]
    elif es.formulation == "balanced-flux-relaxation":
        n, r = sys.n, sys.r
        v = profile.v_at(x)
        dec = characteristic_decomposition(sys.reduced_jacobian(u), ref=ref_dec[0])
        (Etil, E), (Htil, H), (Ftil, F) = balanced_flux_blocks(sys, u, v)
        gdec = characteristic_decomposition(H, ref=ref_dec[1])
        a, p = dec.a, dec.p
        gam, kp = gdec.a, gdec.p
        preds, pvecs = [], []
        for j in range(n):
            if j != p:
                preds.append(("rho-" if a[j] > 0 else "rho+", -lam / a[j]))
                pvecs.append(np.concatenate([dec.right[:, j], np.zeros(r)]))
        for j in range(r):
            if j != kp:
                preds.append(("nu+" if gam[j] > 0 else "nu-", gam[j] + 0j))
                pvecs.append(np.concatenate([(E @ gdec.right[:, j]) / gam[j],
                                             gdec.right[:, j]]))
        lp, rp = dec.left[p], dec.right[:, p]
        s_raw = gdec.right[:, kp]
        scale = lp @ (E @ s_raw)
        s_p = s_raw / scale
        head = np.concatenate([rp, np.zeros(r)])
        second = np.concatenate([np.zeros(n), s_p])
        lrow_eta = np.concatenate([lp, np.zeros(r)])
        lrow_z = np.concatenate([np.zeros(n), gdec.left[kp] * scale])
        ap = a[p]
    else:
        raise WrongFormulation(es.formulation)

    trans = []
    used = set()
    if preds:
        w, vl, vr = sla.eig(M, left=True, right=True)
        cost = np.abs(np.array([[pw - wi for wi in w] for _, pw in preds]))
        rows, cols = linear_sum_assignment(cost)
        matched = dict(zip(rows, cols))
        for i, (name, pw) in enumerate(preds):
            j = matched[i]
            if cost[i, j] > 0.45 * (abs(pw) + 1.0):
                raise ExpansionDomainExceeded(
                    f"mode matching ambiguous at |lam|={abs(lam):.3g}")
            used.add(j)
            vj = vr[:, j]
            ip = np.vdot(pvecs[i], vj)
            if abs(ip) < 1e-10:
                raise ExpansionDomainExceeded("prediction vector orthogonal to mode")
            vj = vj * (np.conj(ip) / abs(ip)) / np.linalg.norm(vj)
            lj = vl[:, j].conj()
            lj = lj / (lj @ vj)
            trans.append((name, w[j], lj, vj))
        principal_idx = [j for j in range(N) if j not in used]
    else:
        principal_idx = list(range(N))
    if len(principal_idx) != 2:
        raise ExpansionDomainExceeded("principal block is not two-dimensional")

    Pi0 = np.eye(N, dtype=complex)
    for _, _, lj, vj in trans:
        Pi0 -= np.outer(vj, lj)
    R0 = np.column_stack([Pi0 @ head, Pi0 @ second])
    L0 = np.vstack([lrow_eta @ Pi0, lrow_z @ Pi0])
    L0 = np.linalg.solve(L0 @ R0, L0)

    modes = {name: [] for name in BLOCK_ORDER}
    mus = {name: [] for name in BLOCK_ORDER}
    for name, wj, lj, vj in trans:
        modes[name].append((lj, vj))
        mus[name].append(wj)
    modes["p"] = [(L0[0], R0[:, 0]), (L0[1], R0[:, 1])]
    mus["p"] = [np.nan, np.nan]
    return modes, mus, float(np.real(ap))


def _assemble_LR(modes, N, with_derivs):
    sizes = {name: len(modes[name]) for name in BLOCK_ORDER}
    blocks, start = {}, 0
    for name in BLOCK_ORDER:
        blocks[name] = slice(start, start + sizes[name])
        start += sizes[name]
    L = np.zeros((N, N), dtype=complex)
    R = np.zeros((N, N), dtype=complex)
    dL = np.zeros((N, N), dtype=complex)
    dR = np.zeros((N, N), dtype=complex)
    i = 0
    for name in BLOCK_ORDER:
        for entry in modes[name]:
            if with_derivs:
                Lv, Rv, dLv, dRv = entry
                dL[i], dR[:, i] = dLv, dRv
            else:
                Lv, Rv = entry
            L[i], R[:, i] = Lv, Rv
            i += 1
    return L, R, dL, dR, blocks


def _general_refs(es):
    sys = es.system
    if es.formulation == "integrated-general-viscous":
        u0 = np.asarray(sys.base_state, dtype=float)
        B0 = sys.viscosity(u0)
        return (characteristic_decomposition(sys.jacobian(u0)),
                characteristic_decomposition(np.linalg.solve(B0, sys.jacobian(u0))))
    u0 = np.asarray(sys.base_state[0], dtype=float)
    v0 = np.atleast_1d(sys.v_star(u0))
    (_, _), (_, H0), (_, _) = balanced_flux_blocks(sys, u0, v0)
    return (characteristic_decomposition(sys.reduced_jacobian(u0)),
            characteristic_decomposition(H0))


def build_block_basis(es, profile, lam, x=None, stride=1):
    """Mode basis of A(x, lam) on the grid, classified by asymptotic behavior
    (fast growing/decaying, superslow, principal pair)."""
    lam = complex(lam)
    xs = profile.x[::stride] if x is None else np.asarray(x, dtype=float)
    if len(xs) and not np.any(np.isclose(xs, 0.0)):
        xs = np.sort(np.append(xs, 0.0))
    N = es.N
    sys = es.system
    m = len(xs)
    Ls = np.zeros((m, N, N), dtype=complex)
    Rs = np.zeros((m, N, N), dtype=complex)
    dLs = np.zeros((m, N, N), dtype=complex)
    dRs = np.zeros((m, N, N), dtype=complex)
    aps = np.zeros(m)
    mu_acc = None
    blocks = None

    if es.formulation == "integrated-identity-viscous":
        for i, xv in enumerate(xs):
            modes, mus, ap = _identity_mode_data(sys, profile, xv, lam)
            L, R, dL, dR, blocks = _assemble_LR(modes, N, with_derivs=True)
            Ls[i], Rs[i], dLs[i], dRs[i], aps[i] = L, R, dL, dR, ap
            if mu_acc is None:
                mu_acc = {k: [] for k in mus}
            for k in mus:
                mu_acc[k].append(mus[k])
        mu = {k: np.array(v) for k, v in mu_acc.items()}
        return BlockBasis(x=xs, lam=lam, L=Ls, R=Rs, dL=dLs, dR=dRs,
                          blocks=blocks, mu=mu, ap=aps, es=es, profile=profile)

    if es.formulation not in ("integrated-general-viscous",
                              "balanced-flux-relaxation"):
        raise WrongFormulation(f"no block basis for formulation {es.formulation!r}")

    ref_dec = _general_refs(es)

    def basis_at(xv):
        modes, mus, ap = _pointwise_general_modes(es, profile, xv, lam, ref_dec)
        L, R, _, _, blocks_ = _assemble_LR(modes, N, with_derivs=False)
        return L, R, blocks_, mus, ap

    h = max(1e-4, 0.02 * (xs[1] - xs[0])) if m > 1 else 1e-4
    for i, xv in enumerate(xs):
        L, R, blocks, mus, ap = basis_at(xv)
        Ls[i], Rs[i], aps[i] = L, R, ap
        if mu_acc is None:
            mu_acc = {k: [] for k in mus}
        for k in mus:
            mu_acc[k].append(mus[k])
        # 5-point stencil through the smoothly gauged family
        stenc = [basis_at(xv + off * h)[:2] for off in (-2, -1, 1, 2)]
        dLs[i] = (stenc[0][0] - 8 * stenc[1][0] + 8 * stenc[2][0] - stenc[3][0]) / (12 * h)
        dRs[i] = (stenc[0][1] - 8 * stenc[1][1] + 8 * stenc[2][1] - stenc[3][1]) / (12 * h)
    mu = {k: np.array(v) for k, v in mu_acc.items()}
    return BlockBasis(x=xs, lam=lam, L=Ls, R=Rs, dL=dLs, dR=dRs,
                      blocks=blocks, mu=mu, ap=aps, es=es, profile=profile)


# ---------------------------------------------------------------------------
# normalization and block diagonalization

def normalize_basis(basis):
    """Kill the diagonal derivative couplings: scalar alpha per transverse
    mode and a 2x2 alpha on the principal block, each solving
    alpha' = -(L dR) alpha with alpha(0) = 1."""
    x = basis.x
    m = len(x)
    L, R, dL, dR = (a.copy() for a in (basis.L, basis.R, basis.dL, basis.dR))
    i0 = int(np.argmin(np.abs(x)))

    for name in BLOCK_ORDER:
        s = basis.blocks[name]
        if s.stop == s.start:
            continue
        if name != "p":
            for j in range(s.start, s.stop):
                g = np.einsum("mi,mi->m", L[:, j, :], dR[:, :, j])
                integ = cumulative_trapezoid(g, x, initial=0.0)
                integ -= integ[i0]
                alpha = np.exp(-integ)
                dalpha = -g * alpha
                dR[:, :, j] = dR[:, :, j] * alpha[:, None] + R[:, :, j] * dalpha[:, None]
                R[:, :, j] = R[:, :, j] * alpha[:, None]
                dL[:, j, :] = dL[:, j, :] / alpha[:, None] \
                    + L[:, j, :] * (g / alpha)[:, None]
                L[:, j, :] = L[:, j, :] / alpha[:, None]
        else:
            G = np.einsum("mij,mjk->mik", L[:, s, :], dR[:, :, s])
            Gspl = CubicSpline(x, G, axis=0)

            def rhs(t, y):
                return (-Gspl(t) @ y.reshape(2, 2)).ravel()

            alpha = np.zeros((m, 2, 2), dtype=complex)
            alpha[i0] = np.eye(2)
            for target in (m - 1, 0):
                if target == i0:
                    continue
                idx = np.arange(i0, target + (1 if target > i0 else -1),
                                1 if target > i0 else -1)
                sol = solve_ivp(rhs, (x[idx[0]], x[idx[-1]]),
                                np.eye(2, dtype=complex).ravel(),
                                t_eval=x[idx], rtol=1e-12, atol=1e-14,
                                method="DOP853")
                if not sol.success:
                    raise NoContraction("alpha ODE integration failed")
                alpha[idx] = sol.y.T.reshape(-1, 2, 2)
            # define dalpha through the ODE so the post-state is exact
            dalpha = -np.einsum("mij,mjk->mik", G, alpha)
            ainv = np.linalg.inv(alpha)
            dainv = -np.einsum("mij,mjk,mkl->mil", ainv, dalpha, ainv)
            dR[:, :, s] = np.einsum("mij,mjk->mik", dR[:, :, s], alpha) \
                + np.einsum("mij,mjk->mik", R[:, :, s], dalpha)
            R[:, :, s] = np.einsum("mij,mjk->mik", R[:, :, s], alpha)
            dL[:, s, :] = np.einsum("mij,mjk->mik", ainv, dL[:, s, :]) \
                + np.einsum("mij,mjk->mik", dainv, L[:, s, :])
            L[:, s, :] = np.einsum("mij,mjk->mik", ainv, L[:, s, :])

    return BlockBasis(x=x, lam=basis.lam, L=L, R=R, dL=dL, dR=dR,
                      blocks=basis.blocks, mu=basis.mu, ap=basis.ap,
                      es=basis.es, profile=basis.profile, normalized=True)


def block_diagonalize(es, basis, profile, declared=None):
    """ReducedSystem with M = block-diagonal part of L A R, coupling Theta
    scaled by delta(x) = |eta'(x)|, and fitted envelope certificates."""
    x = basis.x
    N = basis.N
    A = np.array([es.A(xv, basis.lam) for xv in x])
    M_full = np.einsum("mij,mjk,mkl->mil", basis.L, A, basis.R)
    LdR = np.einsum("mij,mjk->mik", basis.L, basis.dR)
    delta = np.abs(profile.du_at(x) @ profile.lp_minus)
    delta = np.maximum(delta, 1e-300)

    mask = np.zeros((N, N), dtype=bool)
    for name in BLOCK_ORDER:
        s = basis.blocks[name]
        mask[s, s] = True
    M = np.where(mask[None, :, :], M_full, 0.0)
    offdiag = float(np.max(np.abs(M_full - M)))
    Theta = (-LdR + (M_full - M)) / delta[:, None, None]

    sup_theta = float(np.max(np.abs(Theta)))
    eps = profile.eps
    keep = delta > 1e-10 * np.max(delta)
    Afit = np.vstack([np.ones(keep.sum()), -np.abs(x[keep])]).T
    coef, *_ = np.linalg.lstsq(Afit, np.log(delta[keep]), rcond=None)
    rate = max(float(coef[1]), 0.0)
    certs = {
        "sup_theta": sup_theta,
        "offdiag_residual": offdiag,
        "delta_rate": rate,
        "delta_theta_hat": rate / eps,
        "C_delta": float(np.max(delta * np.exp(rate * np.abs(x))) / eps**2),
        "sup_delta": float(np.max(delta)),
    }
    if declared:
        for key in ("sup_theta", "C_delta"):
            if key in declared and certs[key] > 2.0 * declared[key]:
                raise CertificateFailure(
                    f"{key} = {certs[key]:.3g} exceeds 2x declared {declared[key]:.3g}")
    return ReducedSystem(basis=basis, M=M, Theta=Theta, delta=delta,
                         certificates=certs)


def burgers_block_target(lam, ap, beta):
    """The comparison block [[0, 1], [lam/beta, a_p/beta]]."""
    ap = np.asarray(ap)
    out = np.zeros(ap.shape + (2, 2), dtype=complex)
    out[..., 0, 1] = 1.0
    out[..., 1, 0] = lam / beta
    out[..., 1, 1] = ap / beta
    return out


def compare_burgers_block(reduced, Lam, beta, eps):
    """Entrywise sup of M0 - [[0,1],[lam/beta, a_p/beta]] against the declared
    order matrix [[|lam|, |lam|+eps], [|lam| eps, |lam|+eps^2]]."""
    lam = reduced.basis.lam
    M0 = reduced.block("p")
    target = burgers_block_target(lam, reduced.basis.ap, beta)
    diff = np.abs(M0 - target)
    sup = diff.max(axis=0)
    declared = np.array([[abs(lam), abs(lam) + eps],
                         [abs(lam) * eps, abs(lam) + eps**2]])
    return {"sup": sup, "declared": declared, "ratio": sup / declared}


def relaxation_key_facts(sys, u, v):
    """Measured residuals of the endpoint identities E s_p = r_p and
    s~_p H~ = -l_p/beta.  Both sign options of the second identity are
    reported; the displayed sign is inconsistent with the definition of the
    balanced-flux blocks, and the magnitude relation is the invariant."""
    (Etil, E), (Htil, H), (Ftil, F) = balanced_flux_blocks(sys, u, v)
    dec = characteristic_decomposition(sys.reduced_jacobian(u))
    lp, rp = dec.lp, dec.rp
    gdec = characteristic_decomposition(H)
    s_raw = gdec.right[:, gdec.p]
    scale = lp @ (E @ s_raw)
    s_p = s_raw / scale
    st_p = gdec.left[gdec.p] * scale
    _, beta = genuine_nonlinearity_and_diffusion(sys, u)
    lhs = st_p @ Htil
    return {
        "Es_p_residual": float(np.linalg.norm(E @ s_p - rp)),
        "stH_minus_lp_over_beta": float(np.linalg.norm(lhs - lp / beta)),
        "stH_plus_lp_over_beta": float(np.linalg.norm(lhs + lp / beta)),
        "beta": beta,
    }


# ---------------------------------------------------------------------------
# tracking / invariant-graph reduction

def _specrange(Mblock):
    w = np.linalg.eigvals(Mblock)
    return float(np.min(w.real)), float(np.max(w.real))


def tracking_reduce(M1, M2, Theta, delta, x, contraction_limit=0.1):
    """Invariant graphs of Z' = [[M1 + d T11, d T12], [d T21, M2 + d T22]] Z
    under the gap Re(M1 - M2) >= eta > 0 (checked away from a bounded
    interval).

    Returns (Phi1, Phi2, certificates): the graphs {(Phi1 Z2, Z2)} and
    {(Z1, Phi2 Z1)} solving their matrix Riccati equations with boundedness
    toward the attracting side.
    """
    x = np.asarray(x, dtype=float)
    m = len(x)
    M1 = np.asarray(M1, dtype=complex)
    M2 = np.asarray(M2, dtype=complex)
    k1, k2 = M1.shape[-1], M2.shape[-1]
    if M1.ndim == 2:
        M1 = np.broadcast_to(M1, (m, k1, k1)).copy()
    if M2.ndim == 2:
        M2 = np.broadcast_to(M2, (m, k2, k2)).copy()

    def getT(key, shape):
        arr = Theta.get(key)
        if arr is None:
            return np.zeros((m,) + shape, dtype=complex)
        arr = np.asarray(arr, dtype=complex)
        if arr.ndim == 2:
            arr = np.broadcast_to(arr, (m,) + shape).copy()
        return arr

    T11 = getT("11", (k1, k1))
    T12 = getT("12", (k1, k2))
    T21 = getT("21", (k2, k1))
    T22 = getT("22", (k2, k2))
    delta = np.broadcast_to(np.asarray(delta, dtype=float), (m,)).copy()

    gaps = np.array([_specrange(M1[i])[0] - _specrange(M2[i])[1] for i in range(m)])
    outer = np.abs(x) >= 0.5 * np.max(np.abs(x)) if m > 1 else np.ones(m, bool)
    eta_hat = float(np.min(gaps[outer]))
    if eta_hat <= 0:
        raise GapTooSmall(f"no positive spectral gap at the ends (min {eta_hat:.3g})")
    theta_norm = max(np.max(np.abs(T)) if T.size else 0.0
                     for T in (T11, T12, T21, T22))
    delta_hat = float(np.max(delta) * theta_norm)
    if delta_hat / eta_hat >= contraction_limit:
        raise GapTooSmall(
            f"delta/eta = {delta_hat / eta_hat:.3g} >= {contraction_limit}")

    if m > 1:
        spl = {k: CubicSpline(x, v, axis=0) for k, v in
               (("M1", M1), ("M2", M2),
                ("dT11", delta[:, None, None] * T11),
                ("dT12", delta[:, None, None] * T12),
                ("dT21", delta[:, None, None] * T21),
                ("dT22", delta[:, None, None] * T22))}
    else:
        spl = {k: (lambda v: (lambda t: v[0]))(v) for k, v in
               (("M1", M1), ("M2", M2),
                ("dT11", delta[:, None, None] * T11),
                ("dT12", delta[:, None, None] * T12),
                ("dT21", delta[:, None, None] * T21),
                ("dT22", delta[:, None, None] * T22))}
    bound = max(delta_hat / eta_hat, 1e-12)

    def run(which):
        if which == 2:
            shape = (k2, k1)
            x0, x1 = x[0], x[-1]

            def rhs(t, y):
                P = y.reshape(shape)
                dP = (spl["M2"](t) @ P - P @ spl["M1"](t) + spl["dT21"](t)
                      + spl["dT22"](t) @ P - P @ spl["dT11"](t)
                      - P @ spl["dT12"](t) @ P)
                return dP.ravel()

            P0 = sla.solve_sylvester(M2[0], -M1[0], -delta[0] * T21[0])
        else:
            shape = (k1, k2)
            x0, x1 = x[-1], x[0]

            def rhs(t, y):
                P = y.reshape(shape)
                dP = (spl["M1"](t) @ P - P @ spl["M2"](t) + spl["dT12"](t)
                      + spl["dT11"](t) @ P - P @ spl["dT22"](t)
                      - P @ spl["dT21"](t) @ P)
                return dP.ravel()

            P0 = sla.solve_sylvester(M1[-1], -M2[-1], -delta[-1] * T12[-1])

        if m == 1:
            return P0[None, :, :]
        sol = solve_ivp(rhs, (x0, x1), P0.astype(complex).ravel(),
                        dense_output=True, rtol=1e-10, atol=1e-12, method="DOP853")
        if not sol.success:
            raise NoContraction(f"graph integration failed: {sol.message}")
        out = np.array([sol.sol(t).reshape(shape) for t in x])
        if not np.all(np.isfinite(out)) or np.max(np.abs(out)) > max(50 * bound, 1.0):
            raise NoContraction("graph transform left the contraction ball")
        return out

    Phi2 = run(2)
    Phi1 = run(1)
    certs = {
        "eta_hat": eta_hat,
        "delta_hat": delta_hat,
        "sup_phi1": float(np.max(np.abs(Phi1))) if Phi1.size else 0.0,
        "sup_phi2": float(np.max(np.abs(Phi2))) if Phi2.size else 0.0,
    }
    certs["bound_ok"] = max(certs["sup_phi1"], certs["sup_phi2"]) \
        <= 4.0 * delta_hat / eta_hat + 1e-14
    return Phi1, Phi2, certs


def _remove_block(C, x, keep, drop, delta, drop_growing):
    """Invariant flow over the `keep` indices with the `drop` block slaved
    through the tracking graph."""
    keep = np.asarray(keep, dtype=int)
    drop = np.asarray(drop, dtype=int)
    C_kk = C[:, keep[:, None], keep[None, :]]
    C_kd = C[:, keep[:, None], drop[None, :]]
    C_dk = C[:, drop[:, None], keep[None, :]]
    C_dd = C[:, drop[:, None], drop[None, :]]
    dinv = (1.0 / np.maximum(delta, 1e-300))[:, None, None]
    if drop_growing:
        Theta = {"12": C_dk * dinv, "21": C_kd * dinv}
        Phi1, Phi2, certs = tracking_reduce(C_dd, C_kk, Theta, delta, x)
        Phi = Phi1
    else:
        Theta = {"12": C_kd * dinv, "21": C_dk * dinv}
        Phi1, Phi2, certs = tracking_reduce(C_kk, C_dd, Theta, delta, x)
        Phi = Phi2
    S = C_kk + np.einsum("mij,mjk->mik", C_kd, Phi)
    return S, Phi, certs


def reduce_to_slow(reduced):
    """Slow-manifold coefficient over (rho-, p, rho+) after slaving the fast
    blocks; returns (S, slow_blocks, fast_certificates)."""
    basis = reduced.basis
    C = reduced.coefficient()
    x = basis.x
    idx = {name: np.arange(basis.blocks[name].start, basis.blocks[name].stop)
           for name in BLOCK_ORDER}
    certs = {}
    cur = [n for n in BLOCK_ORDER]
    for fast, growing in (("nu+", True), ("nu-", False)):
        if idx[fast].size == 0:
            cur = [n for n in cur if n != fast]
            continue
        keep = np.concatenate([idx[n] for n in cur if n != fast])
        C, _, cert = _remove_block(C, x, keep, idx[fast], reduced.delta,
                                   drop_growing=growing)
        certs[fast] = cert
        cur = [n for n in cur if n != fast]
        offset = 0
        for n in cur:
            k = idx[n].size
            idx[n] = np.arange(offset, offset + k)
            offset += k
    slow_blocks = {}
    offset = 0
    for n in ("rho-", "p", "rho+"):
        k = idx[n].size
        slow_blocks[n] = slice(offset, offset + k)
        offset += k
    return C, slow_blocks, certs


# ---------------------------------------------------------------------------
# regimes

def regime_partition(eps, Lam, beta, C=4.0, r_min=None, R_max=None):
    """Segments I/II/III of (r_min, R_max) in original frequency, with the
    rescaling maps x -> |Lam| eps x/beta, lam -> beta lam/(Lam^2 eps^2),
    z -> beta z/(|Lam| eps)."""
    lam_scale = Lam**2 * eps**2 / beta
    x_scale = abs(Lam) * eps / beta
    if r_min is None:
        r_min = 1e-3 * min(1.0, eps**2)
    if R_max is None:
        R_max = 1.0 / C
    b1 = float(np.clip(C * lam_scale, r_min, R_max))
    b2 = float(np.clip(C * lam_scale / eps, r_min, R_max))
    return [
        RegimeSegment(tag="I", lo=r_min, hi=b1, lam_scale=lam_scale,
                      x_scale=x_scale, z_scale=x_scale),
        RegimeSegment(tag="II", lo=b1, hi=b2, lam_scale=lam_scale,
                      x_scale=x_scale, z_scale=x_scale),
        RegimeSegment(tag="III", lo=b2, hi=float(R_max), lam_scale=lam_scale,
                      x_scale=x_scale, z_scale=x_scale),
    ]


def _rescale_slow(S, slow_blocks, x, x_scale, z_scale):
    """x~ = x_scale * x; the z row of the principal block is balanced by
    z_scale; the whole coefficient divides by x_scale."""
    ns = S.shape[1]
    T = np.ones(ns)
    p = slow_blocks["p"]
    T[p.start + 1] = 1.0 / z_scale
    St = (T[None, :, None] * S * (1.0 / T)[None, None, :]) / x_scale
    return x * x_scale, St


def _slow_at_endpoint(es, profile, lam, side, seg):
    """Rescaled slow coefficient at x = side*infinity, where delta = 0 and
    the coefficient is exactly block diagonal."""
    shim = _FrozenState(profile, side)
    basis = build_block_basis(es, shim, lam, x=np.array([0.0]))
    A = es.A_limit(side, lam)
    Mfull = basis.L[0] @ A @ basis.R[0]
    idx = np.concatenate([np.arange(basis.blocks[n].start, basis.blocks[n].stop)
                          for n in ("rho-", "p", "rho+")]).astype(int)
    S = Mfull[np.ix_(idx, idx)][None, :, :]
    offset = 0
    sb = {}
    for n in ("rho-", "p", "rho+"):
        k = basis.blocks[n].stop - basis.blocks[n].start
        sb[n] = slice(offset, offset + k)
        offset += k
    _, St = _rescale_slow(S, sb, np.array([0.0]), seg.x_scale, seg.z_scale)
    return St[0], sb


def _normal_form(St, sb, xt, lam_tilde):
    """Block-triangular target: superslow diagonals kept, exact Burgers block
    [[0,1],[lam~, etabar]], and the (eta,z) <- rho forcing N kept in place."""
    m = St.shape[0]
    NF = np.zeros_like(St)
    p = sb["p"]
    rho_idx = np.concatenate([np.arange(sb["rho-"].start, sb["rho-"].stop),
                              np.arange(sb["rho+"].start, sb["rho+"].stop)]).astype(int)
    etabar = -np.tanh(xt / 2.0)
    for i in range(m):
        NF[i, p.start, p.start + 1] = 1.0
        NF[i, p.start + 1, p.start] = lam_tilde
        NF[i, p.start + 1, p.start + 1] = etabar[i]
        for j in rho_idx:
            NF[i, j, j] = St[i, j, j]
            for pa in range(p.start, p.stop):
                NF[i, pa, j] = St[i, pa, j]
    return NF, rho_idx


def _decay_fit(xt, dev, floor=1e-13):
    keep = dev > floor
    if np.count_nonzero(keep & (np.abs(xt) > 0.3 * np.max(np.abs(xt)))) < 5:
        return np.inf, 0.0
    sel = keep & (np.abs(xt) > 0.3 * np.max(np.abs(xt)))
    A = np.vstack([np.ones(sel.sum()), -np.abs(xt[sel])]).T
    coef, *_ = np.linalg.lstsq(A, np.log(dev[sel]), rcond=None)
    rate = float(coef[1])
    Chat = float(np.max(dev * np.exp(min(rate, 5.0) * np.abs(xt))))
    return rate, Chat


def regime_one_report(es, profile, lam_tilde, C=4.0, stride=8):
    """Measured regime-I certificates at one rescaled frequency: endpoint
    values of the error Phi, its decay fit, the forcing N, and |M_rho|."""
    sys = es.system
    u0 = np.asarray(sys.base_state[0] if sys.kind == "relaxation" else sys.base_state,
                    dtype=float)
    Lam, beta = genuine_nonlinearity_and_diffusion(sys, u0)
    eps = profile.eps
    seg = regime_partition(eps, Lam, beta, C=C)[0]
    lam = seg.unscale_lam(lam_tilde)

    basis = normalize_basis(build_block_basis(es, profile, lam, stride=stride))
    red = block_diagonalize(es, basis, profile)
    S, sb, fast_certs = reduce_to_slow(red)
    xt, St = _rescale_slow(S, sb, basis.x, seg.x_scale, seg.z_scale)
    NF, rho_idx = _normal_form(St, sb, xt, lam_tilde)
    Phi = St - NF

    # endpoint (x = +-infinity) values: delta vanishes, so Phi has support
    # only on the principal block there
    end = {}
    sup_phi_rho_end = 0.0
    for side in (-1, 1):
        Se, sbe = _slow_at_endpoint(es, profile, lam, side, seg)
        NFe, _ = _normal_form(Se[None, :, :], sbe,
                              np.array([np.sign(side) * 60.0]), lam_tilde)
        Pe = Se - NFe[0]
        end[side] = Pe
        ri = np.concatenate([np.arange(sbe["rho-"].start, sbe["rho-"].stop),
                             np.arange(sbe["rho+"].start, sbe["rho+"].stop)]).astype(int)
        if ri.size:
            sup_phi_rho_end = max(sup_phi_rho_end,
                                  float(np.max(np.abs(Pe[np.ix_(ri, ri)]))))

    dev = np.array([np.max(np.abs(Phi[i] - end[1 if xt[i] > 0 else -1]))
                    for i in range(len(xt))])
    rate, Chat_raw = _decay_fit(xt, dev)
    Chat = Chat_raw / ((1.0 + abs(lam_tilde)) * eps) if np.isfinite(rate) else 0.0

    p = sb["p"]
    if rho_idx.size:
        Nvals = np.abs(St[:, p, :][:, :, rho_idx])
        nprof = Nvals.reshape(len(xt), -1).max(axis=1)
        n_rate, n_C = _decay_fit(xt, nprof)
        sup_Mrho = float(max(np.max(np.abs(St[:, j, j])) for j in rho_idx))
        C_rho = sup_Mrho / (eps * abs(lam_tilde))
    else:
        n_rate, n_C = np.inf, 0.0
        sup_Mrho, C_rho = 0.0, 0.0

    return {
        "lam_tilde": lam_tilde,
        "lam": lam,
        "sup_phi_rho_endpoints": sup_phi_rho_end,
        "phi_decay_rate": rate,
        "phi_decay_C": Chat,
        "N_decay_rate": n_rate,
        "N_decay_C": n_C,
        "sup_M_rho": sup_Mrho,
        "C_rho": C_rho,
        "fast_tracking": fast_certs,
        "blockdiag_certs": red.certificates,
    }


def regime_two_report(profile, sys, C=4.0, nsamples=5):
    """Measured gap of the Burgers-block roots mu = (etabar +- sqrt(etabar^2
    + 4 lam~))/2 over regime II: min |sqrt(etabar^2+4 lam~)| / sqrt|lam~|."""
    eps = profile.eps
    mags = np.geomspace(C, C / eps, nsamples)
    xt = np.linspace(-30, 30, 241)
    etabar = -np.tanh(xt / 2.0)
    worst = np.inf
    for mag in mags:
        for ang in (0.0, np.pi / 4, np.pi / 2):
            lt = mag * np.exp(1j * ang)
            gap = np.min(np.abs(np.sqrt(etabar**2 + 4 * lt + 0j)))
            worst = min(worst, gap / np.sqrt(mag))
    return {"eta_hat_sqrt": float(worst), "magnitudes": mags.tolist()}


def regime_three_report(es, profile, C=4.0, nsamples=4):
    """Measured definiteness of the superslow coefficients on regime III:
    min |Re mu~| against theta C^2 eps / 2 at the endpoint states."""
    sys = es.system
    u0 = np.asarray(sys.base_state[0] if sys.kind == "relaxation" else sys.base_state,
                    dtype=float)
    Lam, beta = genuine_nonlinearity_and_diffusion(sys, u0)
    eps = profile.eps
    seg = regime_partition(eps, Lam, beta, C=C)[2]
    lt_lo, lt_hi = C / eps, 1.0 / (C * eps**2)
    if lt_hi <= lt_lo:
        lt_hi = 2 * lt_lo
    mags = np.geomspace(lt_lo, lt_hi, nsamples)
    margins_minus, margins_plus = [], []
    for side in (-1, 1):
        u = profile.u_plus if side > 0 else profile.u_minus
        jac = sys.jacobian if sys.kind == "viscous" else sys.reduced_jacobian
        dec = characteristic_decomposition(jac(u))
        for mag in mags:
            for ang in (0.0, np.pi / 2):
                lam = seg.unscale_lam(mag * np.exp(1j * ang))
                for j, aj in enumerate(dec.a):
                    if j == dec.p:
                        continue
                    sgn = 1.0 if aj > 0 else -1.0
                    mu = 0.5 * (aj - sgn * np.sqrt(aj**2 + 4 * lam + 0j))
                    mu_resc = mu / seg.x_scale
                    (margins_minus if aj > 0 else margins_plus).append(mu_resc.real)
    expected = C**2 * eps / 2.0
    out = {"expected_scale": expected}
    out["rho_minus_max_re"] = float(np.max(margins_minus)) if margins_minus else -np.inf
    out["rho_plus_min_re"] = float(np.min(margins_plus)) if margins_plus else np.inf
    out["definite"] = (not margins_minus or out["rho_minus_max_re"] <= -expected) and \
                      (not margins_plus or out["rho_plus_min_re"] >= expected)
    return out


def regime_partition_and_normal_form(es, profile, C=4.0, r_min=None, R_max=None,
                                     lam_tilde_samples=(0.6, 1.5 + 1.0j),
                                     stride=8):
    """Regime segments plus the measured normal-form certificates."""
    sys = es.system
    u0 = np.asarray(sys.base_state[0] if sys.kind == "relaxation" else sys.base_state,
                    dtype=float)
    Lam, beta = genuine_nonlinearity_and_diffusion(sys, u0)
    if profile.eps > 0.25:
        raise ExpansionDomainExceeded("regime analysis assumes eps <= 0.25")
    if C < 4:
        raise ValueError("regime constant C must be >= 4")
    segs = regime_partition(profile.eps, Lam, beta, C=C, r_min=r_min, R_max=R_max)
    reports = {
        "I": [regime_one_report(es, profile, lt, C=C, stride=stride)
              for lt in lam_tilde_samples],
        "II": regime_two_report(profile, sys, C=C),
        "III": regime_three_report(es, profile, C=C),
    }
    return segs, reports
