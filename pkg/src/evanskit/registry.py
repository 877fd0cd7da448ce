"""Built-in example systems and the name registry used by the CLI."""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import UnknownSystem
from .model import RelaxationSystem, ViscousSystem


def burgers_system(radius=4.0):
    """Scalar Burgers equation u_t + (u^2/2)_x = u_xx."""
    return ViscousSystem(
        name="burgers",
        n=1,
        flux=lambda u: np.array([0.5 * u[0] ** 2]),
        jacobian=lambda u: np.array([[u[0]]]),
        hessian=lambda u, v, w: np.array([v[0] * w[0]]),
        viscosity=lambda u: np.eye(1),
        dviscosity=lambda u, v: np.zeros((1, 1)),
        base_state=np.zeros(1),
        radius=radius,
    )


def gnl2x2_system(b1=1.0, b2=1.0, radius=1.0):
    """Genuinely nonlinear 2x2 model: f(u) = (u1^2/2, u1 + u2), B = diag(b1, b2)."""
    B = np.diag([float(b1), float(b2)])
    return ViscousSystem(
        name="gnl2x2",
        n=2,
        flux=lambda u: np.array([0.5 * u[0] ** 2, u[0] + u[1]]),
        jacobian=lambda u: np.array([[u[0], 0.0], [1.0, 1.0]]),
        hessian=lambda u, v, w: np.array([v[0] * w[0], 0.0]),
        viscosity=lambda u: B,
        dviscosity=lambda u, v: np.zeros((2, 2)),
        base_state=np.zeros(2),
        radius=radius,
    )


def swap2x2_system(radius=1.0):
    """Linear flux f(u) = (u2, u1): strictly hyperbolic but no near-zero speed."""
    return ViscousSystem(
        name="swap2x2",
        n=2,
        flux=lambda u: np.array([u[1], u[0]]),
        jacobian=lambda u: np.array([[0.0, 1.0], [1.0, 0.0]]),
        hessian=lambda u, v, w: np.zeros(2),
        viscosity=lambda u: np.eye(2),
        dviscosity=lambda u, v: np.zeros((2, 2)),
        base_state=np.zeros(2),
        radius=radius,
    )


def jinxin_system(a=1.0, drift=0.0, radius=0.5):
    """Jin-Xin relaxation of Burgers: f~ = v, g~ = a^2 u, q = f(u) - v with
    f(u) = u^2/2 + drift*u; the equilibrium manifold is v = f(u)."""
    a2 = float(a) ** 2

    def f(u):
        return 0.5 * u[0] ** 2 + drift * u[0]

    return RelaxationSystem(
        name="jinxin",
        n=1,
        r=1,
        f_tilde=lambda u, v: np.array([v[0]]),
        g_tilde=lambda u, v: np.array([a2 * u[0]]),
        q=lambda u, v: np.array([f(u) - v[0]]),
        fu=lambda u, v: np.zeros((1, 1)),
        fv=lambda u, v: np.eye(1),
        gu=lambda u, v: np.array([[a2]]),
        gv=lambda u, v: np.zeros((1, 1)),
        qu=lambda u, v: np.array([[u[0] + drift]]),
        qv=lambda u, v: -np.eye(1),
        v_star=lambda u: np.array([f(u)]),
        base_state=(np.zeros(1), np.zeros(1)),
        radius=radius,
    )


def unstable_relaxation_system(radius=0.5):
    """Sign-flipped source (q_v > 0): violates equilibrium stability."""
    base = jinxin_system(radius=radius)
    return RelaxationSystem(
        name="unstable_relaxation",
        n=1,
        r=1,
        f_tilde=base.f_tilde,
        g_tilde=base.g_tilde,
        q=lambda u, v: np.array([v[0] - 0.5 * u[0] ** 2]),
        fu=base.fu,
        fv=base.fv,
        gu=base.gu,
        gv=base.gv,
        qu=lambda u, v: np.array([[-u[0]]]),
        qv=lambda u, v: np.eye(1),
        v_star=lambda u: np.array([0.5 * u[0] ** 2]),
        base_state=(np.zeros(1), np.zeros(1)),
        radius=radius,
    )


@dataclass(frozen=True)
class MultidModel:
    """Coupled Burgers/linear-degenerate 2x2 model with constant diagonal
    viscosity blocks, studied as a family over the transverse frequency xi2."""

    a: float = 1.0
    B11: np.ndarray = None
    B12: np.ndarray = None
    B21: np.ndarray = None
    B22: np.ndarray = None

    def __post_init__(self):
        for name, default in (("B11", np.eye(2)), ("B12", np.zeros((2, 2))),
                              ("B21", np.zeros((2, 2))), ("B22", np.eye(2))):
            if getattr(self, name) is None:
                object.__setattr__(self, name, default)

    name = "multid-model"
    kind = "multid"


@dataclass(frozen=True)
class SystemEntry:
    name: str
    factory: Callable
    params: dict            # parameter name -> (default, doc)
    u_minus: Callable       # eps -> left state (u-part)
    doc: str


REGISTRY = {
    "burgers": SystemEntry(
        name="burgers",
        factory=burgers_system,
        params={"radius": (4.0, "neighborhood radius")},
        u_minus=lambda eps: np.array([eps]),
        doc="scalar Burgers equation, identity viscosity",
    ),
    "gnl2x2": SystemEntry(
        name="gnl2x2",
        factory=gnl2x2_system,
        params={"b1": (1.0, "first viscosity entry"),
                "b2": (1.0, "second viscosity entry"),
                "radius": (1.0, "neighborhood radius")},
        u_minus=lambda eps: np.array([eps, 0.0]),
        doc="genuinely nonlinear 2x2 viscous model",
    ),
    "jinxin": SystemEntry(
        name="jinxin",
        factory=jinxin_system,
        params={"a": (1.0, "frozen sound speed"),
                "drift": (0.0, "linear flux drift f'(0)"),
                "radius": (0.5, "neighborhood radius")},
        u_minus=lambda eps: np.array([eps]),
        doc="Jin-Xin relaxation of Burgers",
    ),
    "multid-model": SystemEntry(
        name="multid-model",
        factory=MultidModel,
        params={"a": (1.0, "transverse characteristic speed")},
        u_minus=lambda eps: np.array([eps]),
        doc="coupled Burgers/linear-degenerate multi-d model at fixed xi2",
    ),
}


def get_system(name, **params):
    try:
        entry = REGISTRY[name]
    except KeyError:
        raise UnknownSystem(f"unknown system {name!r}; known: {sorted(REGISTRY)}")
    return entry.factory(**params)


def list_systems():
    """Registry listing: name -> {parameters, doc}."""
    return {
        name: {"doc": e.doc,
               "params": {k: {"default": v[0], "doc": v[1]} for k, v in e.params.items()}}
        for name, e in REGISTRY.items()
    }
