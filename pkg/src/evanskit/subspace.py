"""Stable/unstable frames of asymptotic matrices, analytic continuation along
frequency paths, and the small-frequency transverse mode expansions."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .errors import BranchCrossing, DegenerateMode, SplittingFailure


@dataclass
class AnalyticFrame:
    """Basis of a stable or unstable invariant subspace with continuation state."""

    lam0: complex
    V: np.ndarray                  # N x k
    kind: str                      # "stable" | "unstable"
    side: int = 0                  # +1 / -1 when tied to an asymptotic matrix
    lam: complex = None
    matfun: Optional[Callable] = None   # lam -> matrix, used for continuation
    path: list = field(default_factory=list)

    def __post_init__(self):
        if self.lam is None:
            self.lam = self.lam0

    @property
    def k(self):
        return self.V.shape[1]

    def copy(self):
        return AnalyticFrame(lam0=self.lam0, V=self.V.copy(), kind=self.kind,
                             side=self.side, lam=self.lam, matfun=self.matfun,
                             path=list(self.path))


def _sorter(kind):
    if kind == "stable":
        return lambda z: z.real < 0
    return lambda z: z.real > 0


def _schur_split(M, kind):
    T, Z, sdim = sla.schur(np.asarray(M, dtype=complex), output="complex",
                           sort=_sorter(kind))
    return T, Z, sdim


def stable_unstable_frames(M, kind, axis_tol=1e-12, matfun=None, lam=None, side=0):
    """Ordered-Schur frame for the invariant subspace with Re mu < 0 (stable)
    or Re mu > 0 (unstable)."""
    M = np.asarray(M, dtype=complex)
    w = np.linalg.eigvals(M)
    scale = max(np.max(np.abs(w)), 1.0)
    j = int(np.argmin(np.abs(w.real)))
    if abs(w[j].real) < axis_tol * scale:
        raise SplittingFailure(
            f"eigenvalue {w[j]:.6g} too close to the imaginary axis", eigenvalue=w[j])
    T, Z, sdim = _schur_split(M, kind)
    if sdim == 0:
        raise SplittingFailure(f"no {kind} eigenvalues")
    V = Z[:, :sdim].copy()
    return AnalyticFrame(lam0=lam if lam is not None else 0j, V=V, kind=kind,
                         side=side, matfun=matfun)


def spectral_projector(M, kind):
    """Oblique spectral projector onto the stable/unstable invariant subspace."""
    N = M.shape[0]
    T, Z, k = _schur_split(M, kind)
    if k == 0:
        return np.zeros_like(np.asarray(M, dtype=complex))
    if k == N:
        return np.eye(N, dtype=complex)
    T11, T12, T22 = T[:k, :k], T[:k, k:], T[k:, k:]
    Y = sla.solve_sylvester(T11, -T22, -T12)
    P_T = np.zeros((N, N), dtype=complex)
    P_T[:k, :k] = np.eye(k)
    P_T[:k, k:] = -Y
    return Z @ P_T @ Z.conj().T


def _cluster_gap(M, kind):
    """Distance between the tracked eigenvalue group and its complement."""
    w = np.linalg.eigvals(M)
    inside = w.real < 0 if kind == "stable" else w.real > 0
    if not inside.any() or inside.all():
        return np.inf
    return float(np.min(np.abs(w[inside][:, None] - w[~inside][None, :])))


def _max_angle(V1, V2):
    ang = sla.subspace_angles(V1, V2)
    return float(np.max(ang)) if ang.size else 0.0


def continue_frame_along_path(frame, path, matfun=None, max_rotation=0.1,
                              max_depth=30, cross_tol=1e-10):
    """Transport the frame analytically along a lambda path.

    Each accepted step applies the second-order projector transport
    V <- P1 (I + dP + dP^2/2) V, which keeps the span exact at the new point
    and the gauge accurate to O(step^3).  Steps subdivide until the subspace
    rotation per step is below `max_rotation`.
    """
    matfun = matfun or frame.matfun
    if matfun is None:
        raise ValueError("continuation requires a matrix family (matfun)")
    out = frame.copy()
    out.matfun = matfun
    lam_cur = out.lam
    P_cur = spectral_projector(matfun(lam_cur), out.kind)
    for lam_target in path:
        stack = [(lam_cur, lam_target, 0)]
        while stack:
            a, b, depth = stack.pop()
            M_b = matfun(b)
            w = np.linalg.eigvals(M_b)
            scale = max(np.max(np.abs(w)), 1.0)
            count = int(np.sum(w.real < 0)) if out.kind == "stable" \
                else int(np.sum(w.real > 0))
            if count != out.V.shape[1]:
                raise BranchCrossing(
                    f"tracked subspace changed dimension near lambda={b:.6g}")
            if _cluster_gap(M_b, out.kind) < cross_tol * scale:
                raise BranchCrossing(f"eigenvalue groups collide near lambda={b:.6g}")
            P_b = spectral_projector(M_b, out.kind)
            rot = _max_angle(_range_basis(P_cur), _range_basis(P_b))
            if rot > max_rotation:
                if depth >= max_depth:
                    raise BranchCrossing(
                        f"step refinement exhausted near lambda={b:.6g}")
                mid = 0.5 * (a + b)
                stack.append((mid, b, depth + 1))
                stack.append((a, mid, depth + 1))
                continue
            dP = P_b - P_cur
            W = out.V + dP @ out.V + 0.5 * (dP @ (dP @ out.V))
            out.V = P_b @ W
            P_cur = P_b
            lam_cur = b
            out.path.append(b)
        out.lam = lam_cur
    return out


def _range_basis(P):
    """Orthonormal basis of the range of a projector (rank from trace)."""
    k = int(round(P.trace().real))
    U, s, _ = np.linalg.svd(P)
    return U[:, :k]


def transverse_mode_expansions(a, lam, context=None, min_speed=1e-8):
    """Eigenvalue/eigenvector data of the first-order coefficient for one
    transverse characteristic field.

    Identity viscosity: exact quadratic-formula roots with binormalized
    eigenvectors.  General viscosity / relaxation: leading-plus-first-order
    expansions (slow mu = -lam/a + beta lam^2/a^3, fast mu = gamma).
    Returns a list of mode dicts {"mu", "L", "R", "class"}.
    """
    context = dict(context or {})
    kind = context.get("kind", "identity")
    a = float(a)
    if abs(a) < min_speed:
        raise DegenerateMode(f"|a| = {abs(a):.3g} below tolerance")
    lam = complex(lam)

    if kind == "identity":
        l = np.atleast_1d(context.get("l", np.array([1.0])))
        r = np.atleast_1d(context.get("r", np.array([1.0])))
        s = np.sqrt(a * a + 4.0 * lam)
        sgn = 1.0 if a > 0 else -1.0
        mu_fast = 0.5 * (a + sgn * s)
        mu_slow = 0.5 * (a - sgn * s)
        modes = []
        for mu, cls in ((mu_fast, "fast"), (mu_slow, "slow")):
            den = lam + mu * mu
            if abs(den) > 1e-14 * max(1.0, abs(lam)):
                L = np.concatenate([lam * l / den, mu * l / den])
            else:
                # removable 0/0 at lam = 0 for the slow branch
                L = np.concatenate([l, -l / a])
            R = np.concatenate([r, mu * r])
            modes.append({"mu": mu, "L": L, "R": R, "class": cls})
        return modes

    if kind == "general":
        l = np.atleast_1d(context["l"])
        r = np.atleast_1d(context["r"])
        B = np.atleast_2d(context["B"])
        beta = float(l @ B @ r)
        mu_slow = -lam / a + beta * lam**2 / a**3
        modes = [{
            "mu": mu_slow,
            "L": np.concatenate([l, -(l @ B) / a]),
            "R": np.concatenate([r, 0 * r]),
            "class": "slow",
        }]
        for g, s_vec, st_vec in context.get("fast", []):
            s_vec = np.atleast_1d(s_vec)
            st_vec = np.atleast_1d(st_vec)
            modes.append({
                "mu": complex(g),
                "L": np.concatenate([0 * st_vec, st_vec / g]),
                "R": np.concatenate([s_vec, g * s_vec]),
                "class": "fast",
            })
        return modes

    if kind == "relaxation":
        l = np.atleast_1d(context["l"])
        r = np.atleast_1d(context["r"])
        Bstar = np.atleast_2d(context["Bstar"])
        E = np.atleast_2d(context["E"])
        H = np.atleast_2d(context["H"])
        beta = float(l @ Bstar @ r)
        mu_slow = -lam / a + beta * lam**2 / a**3
        ttil = -np.linalg.solve(H.T, (l @ E).T).T
        modes = [{
            "mu": mu_slow,
            "L": np.concatenate([l, np.atleast_1d(ttil).ravel()]),
            "R": np.concatenate([r, np.zeros(H.shape[0])]),
            "class": "slow",
        }]
        for g, s_vec, st_vec in context.get("fast", []):
            s_vec = np.atleast_1d(s_vec)
            st_vec = np.atleast_1d(st_vec)
            modes.append({
                "mu": complex(g),
                "L": np.concatenate([np.zeros(len(l)), st_vec]),
                "R": np.concatenate([(E @ s_vec) / g, s_vec]),
                "class": "fast",
            })
        return modes

    raise ValueError(f"unknown expansion kind {kind!r}")
