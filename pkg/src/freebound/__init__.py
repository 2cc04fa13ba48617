"""Bounds on classical canonical and grand-canonical free energies at fixed density."""

from .density import GridDensity, load_density, mass
from .errors import FreeboundError
from .potential import PotentialSpec, hard_core, load_potential, power_law

__all__ = ["GridDensity", "PotentialSpec", "FreeboundError", "hard_core", "load_density",
           "load_potential", "mass", "power_law"]
__version__ = "0.1.0"
