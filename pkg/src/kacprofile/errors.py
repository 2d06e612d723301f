"""Exception hierarchy shared by every module."""


class KacProfileError(Exception):
    """Base class for all package errors."""


class ConfigurationError(KacProfileError, ValueError):
    """Invalid construction parameters (grid sizes, sample budgets, ...)."""


class DomainError(KacProfileError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ContractError(KacProfileError, ValueError):
    """Operands are individually valid but incompatible (e.g. different grids)."""


class NonConvergenceError(KacProfileError, RuntimeError):
    """An iterative solver exhausted its budget.

    Attributes
    ----------
    residual : float
        The last observed residual.
    iterations : int
        Number of iterations performed.
    """

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
