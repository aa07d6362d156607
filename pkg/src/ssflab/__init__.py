"""Numerical spectral shift function, excess charge and scattering phase toolkit."""

__version__ = "0.1.0"

from .curves import SSFCurve
from .errors import SSFError
from .operators import Grid, Potential, build_free, build_perturbed
from .spectral import EigenSystem, eigendecompose

__all__ = ["SSFCurve", "SSFError", "Grid", "Potential", "build_free", "build_perturbed",
           "EigenSystem", "eigendecompose", "__version__"]
