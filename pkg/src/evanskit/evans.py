"""Evans function evaluation by renormalized exterior-power integration,
winding numbers over closed contours, stability verdicts, and the
small-amplitude convergence study."""

import cmath
from dataclasses import dataclass, field
from itertools import combinations
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ContourTooCoarse, IntegrationFailure, ZeroOnContour
from .subspace import continue_frame_along_path, stable_unstable_frames


@dataclass
class EvansSample:
    """Evans value at one frequency.  `value` is the renormalized determinant;
    the conceptual value is value * exp(logscale) with logscale real."""

    lam: complex
    value: complex
    logscale: float
    diagnostics: dict = field(default_factory=dict)


@dataclass
class Contour:
    """Ordered frequency samples along a (possibly closed) path."""

    points: np.ndarray
    closed: bool
    geometry: str
    param: object = None          # t in [0, 1) -> lambda, used for refinement
    tvals: np.ndarray = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=complex)
        if self.tvals is None:
            self.tvals = np.linspace(0.0, 1.0, len(self.points), endpoint=False)

    def at(self, t):
        if self.param is not None:
            return self.param(t)
        # piecewise-linear fallback between stored samples
        ts = np.concatenate([self.tvals, [1.0]])
        ps = np.concatenate([self.points, [self.points[0] if self.closed
                                           else self.points[-1]]])
        j = int(np.searchsorted(ts, t, side="right")) - 1
        j = min(max(j, 0), len(ps) - 2)
        w = (t - ts[j]) / (ts[j + 1] - ts[j])
        return ps[j] * (1 - w) + ps[j + 1] * w


@dataclass
class WindingResult:
    winding: int
    min_abs: float
    max_abs: float
    samples: list
    depth: int
    phase_sum: float


def half_annulus_contour(rmin, rmax, n=256,
                         fractions=(0.075, 0.20, 0.45, 0.20, 0.075)):
    """Positively oriented boundary of {Re lam >= 0, rmin <= |lam| <= rmax},
    starting at lam = rmin (where the splitting is most robust): lower half
    of the inner arc, lower segment, outer arc through +rmax, upper segment,
    upper half of the inner arc.  Segments are log-spaced in |lambda|."""
    f1, f2, f3, f4, _ = np.cumsum(fractions) / np.sum(fractions)
    lr_min, lr_max = np.log(rmin), np.log(rmax)

    def param(t):
        t = t % 1.0
        if t < f1:
            s = t / f1
            return rmin * np.exp(-1j * (np.pi / 2) * s)
        if t < f2:
            s = (t - f1) / (f2 - f1)
            return -1j * np.exp(lr_min + s * (lr_max - lr_min))
        if t < f3:
            s = (t - f2) / (f3 - f2)
            return rmax * np.exp(1j * (-np.pi / 2 + np.pi * s))
        if t < f4:
            s = (t - f3) / (f4 - f3)
            return 1j * np.exp(lr_max - s * (lr_max - lr_min))
        s = (t - f4) / (1.0 - f4)
        return rmin * np.exp(1j * (np.pi / 2) * (1.0 - s))

    t = np.linspace(0.0, 1.0, n, endpoint=False)
    return Contour(points=np.array([param(ti) for ti in t]), closed=True,
                   geometry=f"half-annulus[{rmin:.3g},{rmax:.3g}]",
                   param=param, tvals=t)


def circle_contour(center, radius, n=64):
    def param(t):
        return center + radius * np.exp(2j * np.pi * (t % 1.0))

    t = np.linspace(0.0, 1.0, n, endpoint=False)
    return Contour(points=np.array([param(ti) for ti in t]), closed=True,
                   geometry=f"circle[{center:.3g},{radius:.3g}]",
                   param=param, tvals=t)


# ---------------------------------------------------------------------------
# exterior-power machinery

_LIFT_CACHE = {}


def _subsets(N, k):
    return list(combinations(range(N), k))


def _lift_plan(N, k):
    """Sparse structural plan for the induced action on the k-th exterior
    power: diagonal index lists plus single-swap entries with parity signs."""
    key = (N, k)
    if key in _LIFT_CACHE:
        return _LIFT_CACHE[key]
    subs = _subsets(N, k)
    index = {s: i for i, s in enumerate(subs)}
    entries = []  # (row, col, a_row, a_col, sign)
    for i, I in enumerate(subs):
        for pa, a in enumerate(I):
            rest = I[:pa] + I[pa + 1:]
            for b in range(N):
                if b in rest:
                    continue
                J = tuple(sorted(rest + (b,)))
                pb = J.index(b)
                entries.append((index[J], i, b, a, (-1.0) ** (pa + pb)))
    plan = (subs, index, entries)
    _LIFT_CACHE[key] = plan
    return plan


_LIFT_OP = {}


def _lift_operator(N, k):
    """Dense operator S with lift(A).ravel() = S @ A.ravel(); the induced
    action is linear in A, so this is exact and built once per (N, k)."""
    key = (N, k)
    if key in _LIFT_OP:
        return _LIFT_OP[key]
    subs, _, entries = _lift_plan(N, k)
    m = len(subs)
    S = np.zeros((m * m, N * N))
    for row, col, a_row, a_col, sign in entries:
        S[row * m + col, a_row * N + a_col] += sign
    _LIFT_OP[key] = S
    return S


def lift_matrix(A, k):
    """Matrix of the induced infinitesimal action of A on wedge^k."""
    N = A.shape[0]
    S = _lift_operator(N, k)
    m = int(round(np.sqrt(S.shape[0])))
    return (S @ A.ravel()).reshape(m, m)


def wedge_columns(V):
    """Pluecker vector of an N x k frame: all k x k minors in subset order."""
    N, k = V.shape
    subs, _, _ = _lift_plan(N, k)
    return np.array([np.linalg.det(V[list(I), :]) for I in subs])


def _pairing_signs(N, k):
    """sign of the permutation (I, I^c) of (0..N-1) for each k-subset I."""
    subs, index, _ = _lift_plan(N, k)
    comp_index = []
    signs = []
    csubs, cindex, _ = _lift_plan(N, N - k)
    for I in subs:
        Ic = tuple(j for j in range(N) if j not in I)
        perm = list(I) + list(Ic)
        sgn = 1.0
        seen = [False] * N
        for i in range(N):
            if seen[i]:
                continue
            j, clen = i, 0
            while not seen[j]:
                seen[j] = True
                j = perm.index(j)
                clen += 1
            if clen % 2 == 0:
                sgn = -sgn
        comp_index.append(cindex[Ic])
        signs.append(sgn)
    return np.array(comp_index), np.array(signs)


def wedge_pairing(yp, ym, N, k):
    """Coefficient of e_1 ^ ... ^ e_N in yp ^ ym, yp in wedge^k."""
    comp, signs = _pairing_signs(N, k)
    return complex(np.sum(signs * yp * ym[comp]))


# ---------------------------------------------------------------------------
# Evans evaluation

def anchor_frames(es, lam):
    """Fresh stable(+)/unstable(-) frames of the asymptotic matrices."""
    Vp = stable_unstable_frames(es.A_limit(+1, lam), "stable",
                                matfun=lambda z: es.A_limit(+1, z),
                                lam=lam, side=+1)
    Vm = stable_unstable_frames(es.A_limit(-1, lam), "unstable",
                                matfun=lambda z: es.A_limit(-1, z),
                                lam=lam, side=-1)
    return Vp, Vm


def _renorm_rate(M, kind):
    """Sum of the stable/unstable eigenvalues (complex); its real part is
    subtracted from the flow, the imaginary part compensated analytically."""
    w = np.linalg.eigvals(M)
    sel = w.real < 0 if kind == "stable" else w.real > 0
    return complex(np.sum(w[sel]))


def _integrate_side(es, lam, V, side, tol):
    """Integrate the wedge of the frame from x = side*L to 0 with the
    dominant real rate removed; returns (wedge at 0, removed exponent)."""
    N = es.N
    k = V.shape[1]
    kind = "stable" if side > 0 else "unstable"
    # subtract the full complex dominant rate: the real part keeps the wedge
    # O(1), the imaginary part removes its asymptotic oscillation so the
    # integrator can take long steps in the constant-coefficient tails
    sigma = _renorm_rate(es.A_limit(side, lam), kind)
    y0 = wedge_columns(V)
    x0 = side * es.L
    S = _lift_operator(N, k)
    m = len(y0)
    diag = np.arange(m)

    def coeff(x):
        lifted = (S @ es.A(x, lam).ravel()).reshape(m, m)
        lifted[diag, diag] -= sigma
        return lifted

    # explicit RK is step-limited by the decayed stiff modes once the
    # spectral radius times the domain is large; switch to implicit then
    rho = float(np.max(np.abs(np.linalg.eigvals(es.A_limit(side, lam)))))
    stiff = rho * es.L > 250.0

    if not stiff:
        def rhs(x, y):
            return coeff(x) @ y

        sol = solve_ivp(rhs, (x0, 0.0), y0.astype(complex), method="DOP853",
                        rtol=tol, atol=tol * 1e-2, dense_output=False)
        if not sol.success:
            raise IntegrationFailure(
                f"side {side:+d} integration failed: {sol.message}")
        out = sol.y[:, -1]
        nfev = sol.nfev
    else:
        def real_coeff(x):
            Mx = coeff(x)
            top = np.hstack([Mx.real, -Mx.imag])
            bot = np.hstack([Mx.imag, Mx.real])
            return np.vstack([top, bot])

        def rhs(x, y):
            return real_coeff(x) @ y

        def jac(x, y):
            return real_coeff(x)

        Y0 = np.concatenate([y0.real, y0.imag])
        sol = solve_ivp(rhs, (x0, 0.0), Y0, method="BDF", jac=jac,
                        rtol=max(tol, 1e-10), atol=max(tol, 1e-10) * 1e-2)
        if not sol.success:
            raise IntegrationFailure(
                f"side {side:+d} stiff integration failed: {sol.message}")
        out = sol.y[:m, -1] + 1j * sol.y[m:, -1]
        nfev = sol.nfev
    # value at x=0 is the conjugated-frame wedge, analytic in lambda; the
    # removed scale exp(Re sigma (x - x0)) is real positive by construction
    logscale = -sigma.real * x0
    return out, float(logscale), nfev


def evans_evaluate(es, lam, anchors=None, tol=1e-9):
    """Renormalized Evans determinant at lam from the given (or freshly
    computed) asymptotic anchor frames."""
    lam = complex(lam)
    if anchors is None:
        anchors = anchor_frames(es, lam)
    Vp, Vm = anchors
    Vp_mat = Vp.V if hasattr(Vp, "V") else Vp
    Vm_mat = Vm.V if hasattr(Vm, "V") else Vm
    yp, logp, nf1 = _integrate_side(es, lam, Vp_mat, +1, tol)
    ym, logm, nf2 = _integrate_side(es, lam, Vm_mat, -1, tol)
    D = wedge_pairing(yp, ym, es.N, Vp_mat.shape[1])
    cond = min(np.linalg.svd(Vp_mat, compute_uv=False)[-1],
               np.linalg.svd(Vm_mat, compute_uv=False)[-1])
    return EvansSample(lam=lam, value=D, logscale=logp + logm,
                       diagnostics={"nfev": nf1 + nf2, "frame_cond": float(cond)})


def _phase_increment(d1, d2):
    return cmath.phase(d2 / d1)


def contour_anchor_frames(es, contour):
    """Frames at each contour sample, continued sequentially from the start."""
    Vp, Vm = anchor_frames(es, contour.points[0])
    frames = [(Vp, Vm)]
    for lam in contour.points[1:]:
        Vp = continue_frame_along_path(Vp, [lam])
        Vm = continue_frame_along_path(Vm, [lam])
        frames.append((Vp, Vm))
    return frames


def winding_number(es, contour, tol=1e-8, evaluator=None, jobs=1,
                   max_depth=12, zero_floor=1e-8):
    """Integer winding of the Evans function along a closed contour with
    adaptive bisection until every phase step is below pi/2."""
    if not contour.closed:
        raise ValueError("winding requires a closed contour")

    if evaluator is not None:
        entries = [{"t": t, "lam": lam,
                    "sample": EvansSample(lam=lam, value=complex(evaluator(lam)),
                                          logscale=0.0)}
                   for t, lam in zip(contour.tvals, contour.points)]

        def make_entry(t, left):
            lam = contour.at(t)
            return {"t": t, "lam": lam,
                    "sample": EvansSample(lam=lam, value=complex(evaluator(lam)),
                                          logscale=0.0)}
    else:
        frames = contour_anchor_frames(es, contour)

        def _eval(args):
            lam, fr = args
            return evans_evaluate(es, lam, anchors=fr, tol=tol)

        tasks = list(zip(contour.points, frames))
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                samples = list(pool.map(_eval, tasks))
        else:
            samples = [_eval(tk) for tk in tasks]
        entries = [{"t": t, "lam": lam, "sample": s, "frames": fr}
                   for t, lam, s, fr in
                   zip(contour.tvals, contour.points, samples, frames)]

        def make_entry(t, left):
            lam = contour.at(t)
            Vp = continue_frame_along_path(left["frames"][0], [lam])
            Vm = continue_frame_along_path(left["frames"][1], [lam])
            s = evans_evaluate(es, lam, anchors=(Vp, Vm), tol=tol)
            return {"t": t, "lam": lam, "sample": s, "frames": (Vp, Vm)}

    depth = 0
    while True:
        values = [e["sample"].value for e in entries]
        absd = np.abs(values)
        vmax = float(np.max(absd))
        if float(np.min(absd)) < zero_floor * vmax:
            j = int(np.argmin(absd))
            raise ZeroOnContour("|D| below zero floor on contour",
                                lam=entries[j]["lam"], value=values[j])
        closed_vals = values + [values[0]]
        incs = [_phase_increment(closed_vals[i], closed_vals[i + 1])
                for i in range(len(values))]
        bad = [i for i, inc in enumerate(incs) if abs(inc) >= np.pi / 2]
        if not bad:
            break
        if depth >= max_depth:
            raise ContourTooCoarse(
                f"refinement depth {max_depth} exceeded with {len(bad)} coarse steps")
        depth += 1
        for i in reversed(bad):
            left = entries[i]
            t_right = entries[i + 1]["t"] if i + 1 < len(entries) else 1.0
            t_mid = 0.5 * (left["t"] + t_right)
            entries.insert(i + 1, make_entry(t_mid, left))

    total = float(np.sum(incs))
    w = int(round(total / (2 * np.pi)))
    return WindingResult(winding=w, min_abs=float(np.min(absd)), max_abs=vmax,
                         samples=[e["sample"] for e in entries], depth=depth,
                         phase_sum=total)


@dataclass
class Verdict:
    status: str                   # "stable" | "unstable" | "inconclusive"
    unstable_count: int
    winding: WindingResult = None
    r_min: float = 0.0
    R_max: float = 0.0
    detail: str = ""


def default_radii(es, eps):
    """Conservative contour radii: R_max = 10 (1 + sup ||A(x,1)||^2),
    r_min = 1e-3 min(1, eps^2)."""
    xg = np.linspace(-es.L, es.L, 101)
    sup = max(np.linalg.norm(es.A(x, 1.0), 2) for x in xg)
    return 1e-3 * min(1.0, eps**2), 10.0 * (1.0 + sup**2)


def stability_verdict(es, eps, r_min=None, R_max=None, tol=1e-8, npoints=256,
                      jobs=1, zero_floor=1e-8):
    """Winding-number stability verdict over the punctured half-disk boundary."""
    d_rmin, d_rmax = default_radii(es, eps)
    r_min = d_rmin if r_min is None else r_min
    R_max = d_rmax if R_max is None else R_max
    contour = half_annulus_contour(r_min, R_max, n=npoints)
    try:
        wr = winding_number(es, contour, tol=tol, jobs=jobs, zero_floor=zero_floor)
    except ZeroOnContour as exc:
        return Verdict(status="inconclusive", unstable_count=-1,
                       r_min=r_min, R_max=R_max,
                       detail=f"zero floor hit at lambda={exc.lam:.6g}")
    inner = [abs(s.value) for s in wr.samples if abs(s.lam) <= 1.5 * r_min]
    floor = zero_floor * wr.max_abs
    if inner and min(inner) <= floor:
        return Verdict(status="inconclusive", unstable_count=-1, winding=wr,
                       r_min=r_min, R_max=R_max,
                       detail="|D| at the inner arc is below the zero floor")
    if wr.winding == 0:
        return Verdict(status="stable", unstable_count=0, winding=wr,
                       r_min=r_min, R_max=R_max)
    return Verdict(status="unstable", unstable_count=wr.winding, winding=wr,
                   r_min=r_min, R_max=R_max)


def evans_convergence_study(members, limiting, contour, tol=1e-9):
    """Gauge-aligned sup-difference of Evans functions along a contour in the
    rescaled frequency, with fitted order in eps.

    `members`: list of (eps, es, lam_map) with lam_map mapping rescaled to
    original frequency; `limiting`: (es0, lam_map0).
    """

    def sampled_values(es, lam_map):
        pts = np.array([lam_map(z) for z in contour.points])
        sub = Contour(points=pts, closed=False, geometry="mapped")
        frames = contour_anchor_frames(es, sub)
        vals = np.array([evans_evaluate(es, lam, anchors=fr, tol=tol).value
                         for lam, fr in zip(pts, frames)])
        return vals / vals[0]

    base = sampled_values(*limiting)
    eps_list, diffs = [], []
    for eps, es, lam_map in members:
        vals = sampled_values(es, lam_map)
        eps_list.append(eps)
        diffs.append(float(np.max(np.abs(vals - base))))
    scale = float(np.max(np.abs(base)))
    floor = 100.0 * tol * scale
    order = float(np.polyfit(np.log(eps_list), np.log(diffs), 1)[0]) \
        if len(diffs) > 1 and min(diffs) > floor else np.nan
    return {"eps": eps_list, "sup_diff": diffs, "order": order,
            "scale": scale, "noise_floor": floor,
            "at_noise_floor": bool(max(diffs) <= floor)}
