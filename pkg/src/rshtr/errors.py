"""Exception types shared across the package."""


class RshtrError(Exception):
    """Base class for all package-specific errors."""


class InvalidConfig(RshtrError):
    """A configuration value violates its documented domain."""


class NumericalFailure(RshtrError):
    """An evaluation produced a non-finite result.

    Carries enough context (which hook, which entry) to locate the
    offending computation.
    """

    def __init__(self, message, index=None, value=None):
        super().__init__(message)
        self.index = index
        self.value = value


class SubproblemNotConverged(RshtrError):
    """The iterative eigensolver failed to certify a solution."""

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class LineSearchExhausted(RshtrError):
    """Backtracking exceeded its iteration budget."""

    def __init__(self, message, eta_last=None, ls_iters=0):
        super().__init__(message)
        self.eta_last = eta_last
        self.ls_iters = ls_iters


class ParseError(RshtrError):
    """A data file could not be parsed."""

    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column
