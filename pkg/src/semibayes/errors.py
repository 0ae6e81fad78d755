"""Exception hierarchy. The CLI maps each class to an exit code."""


class SemiBayesError(Exception):
    exit_code = 1


class InputError(SemiBayesError):
    """Malformed or insufficient data."""

    exit_code = 2


class InsufficientDataError(InputError):
    pass


class NumericalError(SemiBayesError, ArithmeticError):
    """Linear-algebra failure, optimiser non-convergence, degenerate weights."""

    exit_code = 3


class DegenerateWeightsError(NumericalError):
    pass


class FitError(NumericalError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(SemiBayesError, ValueError):
    exit_code = 4


class DomainError(SemiBayesError, ValueError):
    """Argument outside the mathematical domain of an operation."""

    exit_code = 4
