"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: configuration/validation problems
exit 1, numerical failures exit 2, I/O problems exit 3.
"""


class ConfigurationError(ValueError):
    """Invalid mesh size, time step, tolerance, or config file contents."""


class SolverError(RuntimeError):
    """A linear or nonlinear solve failed to meet its contract."""


class PicardError(SolverError):
    """Fixed-point iteration did not converge within the iteration cap."""

    def __init__(self, message, step_index=None, last_ratio=None):
        super().__init__(message)
        self.step_index = step_index
        self.last_ratio = last_ratio
