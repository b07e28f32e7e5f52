"""Monte Carlo harness for the 2D stochastic Navier-Stokes equations.

Implicit Euler-Maruyama time stepping with Taylor-Hood (P2/P1) mixed
finite elements on uniform triangulations of the unit square, driven by
truncated spectral Wiener noise with exact coarse/fine path coupling.
"""

from snsmc.errors import ConfigurationError, PicardError, SolverError

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "PicardError", "SolverError", "__version__"]
