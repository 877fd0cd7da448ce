"""Exception types shared across the toolkit."""


class EvansKitError(Exception):
    """Base class for all evanskit errors."""


class NotStrictlyHyperbolic(EvansKitError):
    """Spectrum of a flux Jacobian is not real and simple to tolerance."""


class DegenerateField(EvansKitError):
    """Genuine-nonlinearity coefficient vanishes to tolerance."""


class NonDissipative(EvansKitError):
    """Effective diffusion coefficient is not positive."""


class SingularRelaxation(EvansKitError):
    """q_v is singular at the requested state."""


class NoEndpoint(EvansKitError):
    """Newton solve for the opposite shock endpoint failed."""


class NoConnection(EvansKitError):
    """Profile boundary-value solve failed or entropy condition violated."""


class WrongFormulation(EvansKitError):
    """Assembly routine called on a system it does not apply to."""


class SingularViscosity(EvansKitError):
    """B(u) not invertible somewhere along the profile."""


class SingularA(EvansKitError):
    """Full flux Jacobian of a relaxation system is singular on the profile."""


class NotParabolic(EvansKitError):
    """Viscosity quadratic form fails the parabolicity check."""


class SplittingFailure(EvansKitError):
    """Asymptotic matrix has an eigenvalue too close to the imaginary axis."""

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class BranchCrossing(EvansKitError):
    """Two tracked eigenvalue groups collide along a continuation path."""


class DegenerateMode(EvansKitError):
    """Transverse characteristic speed too close to zero."""


class ExpansionDomainExceeded(EvansKitError):
    """|lambda| too large for the small-frequency mode expansions."""


class IntegrationFailure(EvansKitError):
    """ODE integration did not meet the requested tolerance."""


class ContourTooCoarse(EvansKitError):
    """Adaptive contour refinement exceeded its depth limit."""


class ZeroOnContour(EvansKitError):
    """|D| fell below the zero floor on a contour sample."""

    def __init__(self, message, lam=None, value=None):
        super().__init__(message)
        self.lam = lam
        self.value = value


class GapTooSmall(EvansKitError):
    """Coupling/gap ratio too large for the tracking contraction."""


class NoContraction(EvansKitError):
    """Invariant-graph iteration failed to settle."""


class CertificateFailure(EvansKitError):
    """A measured bound exceeded its declared constant by more than 2x."""


class UnknownSystem(EvansKitError):
    """Requested system name is not in the registry."""
