"""Exception hierarchy shared by all modules."""


class OstopError(Exception):
    """Base class for solver errors."""


class InvalidParameterError(OstopError, ValueError):
    pass


class DomainError(OstopError, ValueError):
    """An argument lies outside the state space."""


class QuadratureError(OstopError, ArithmeticError):
    """Numerical integration failed.

    ``reason`` is one of ``"numeric"`` (non-finite integrand), ``"accuracy"``
    (subdivision budget exhausted) or ``"divergent"`` (an unbounded tail does
    not decay).  ``estimate`` and ``error`` carry the best value reached.
    """

    def __init__(self, message, reason, estimate=float("nan"), error=float("inf")):
        super().__init__(message)
        self.reason = reason
        self.estimate = estimate
        self.error = error


class ResolutionError(OstopError):
    """Sign changes of the reward's generator are finer than the scan grid."""


class ConvergenceError(OstopError):
    """An iteration ran out of budget. ``last`` holds the final iterate."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class ConsistencyError(OstopError):
    """A computed pair failed its own post-hoc check."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DegeneracyError(OstopError):
    """The continuation region swallowed the whole state space.

    This cannot happen for a non-negative reward satisfying the inversion
    formula, so it signals that the inputs violate those hypotheses.
    """


class BudgetError(OstopError):
    """A brute-force search would exceed its combinatorial budget."""


class ConfigError(OstopError, ValueError):
    pass
