"""Evans-function spectral stability toolkit for small-amplitude shock profiles."""

__version__ = "0.1.0"

from . import errors, evalsys, evans, model, profile, reduction, registry, subspace

__all__ = [
    "errors",
    "evalsys",
    "evans",
    "model",
    "profile",
    "reduction",
    "registry",
    "subspace",
]
