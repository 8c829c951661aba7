"""Exception types shared across the solver suite.

The command line front end maps these onto exit codes: configuration
problems exit with 1, numerical failures with 2.
"""


class ConfigurationError(ValueError):
    """Invalid parameters, inconsistent options, or a malformed config file."""


class DomainError(ConfigurationError):
    """An argument lies outside the domain an operation is defined on."""


class SolverError(RuntimeError):
    """A numerical routine failed to produce a usable result."""


class AccuracyError(SolverError):
    """A computed quantity drifted past its configured accuracy bound."""


class QuadratureError(SolverError):
    """Oscillatory quadrature did not converge within its point budget."""

    def __init__(self, message: str, achieved_tol: float | None = None):
        super().__init__(message)
        self.achieved_tol = achieved_tol
