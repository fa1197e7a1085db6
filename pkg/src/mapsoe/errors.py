"""Exception hierarchy.

Everything raised deliberately by the library derives from :class:`MapError`
so callers (and the CLI) can separate modelling problems from bugs.
"""


class MapError(Exception):
    """Base class for library errors."""


class ValidationError(MapError, ValueError):
    """Input does not describe a valid model (bad shape, sign, row sum...)."""

    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


class StructuralError(MapError, ValueError):
    """The generator or block layout has the wrong structure (e.g. reducible)."""


class NumericalError(MapError, ArithmeticError):
    """A linear solve or iteration failed to produce a trustworthy answer."""


class UnsupportedCaseError(MapError, NotImplementedError):
    """The requested quantity is not available for this kind of input."""


class PreconditionError(MapError, ValueError):
    """An operation-specific precondition is violated (e.g. MMPP is not slow)."""


class InstabilityError(MapError, ArithmeticError):
    """Queue is not positive recurrent (utilisation >= 1)."""


class InfeasibleFitError(MapError):
    """No multistart run satisfied the fit constraints.

    ``best`` holds the least-infeasible :class:`~mapsoe.fitting.FitResult`.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
