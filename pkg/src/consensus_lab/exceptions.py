"""Exception hierarchy shared by every module of the package."""


class ConsensusLabError(Exception):
    """Base class for all package errors."""


class ParameterError(ConsensusLabError, ValueError):
    """A numeric parameter violates an operation's precondition."""


class DegenerateGraphError(ParameterError):
    """The graph has an isolated node or is otherwise unusable."""


class PreconditionError(ParameterError):
    """An input is well-formed but outside the operation's domain."""


class DimensionError(ParameterError):
    """Array shapes do not agree."""


class NumericalError(ConsensusLabError, ArithmeticError):
    """An iterative numerical routine failed to converge.

    Attributes
    ----------
    diagnostics : dict
        Iteration counts, residuals and similar details from the failing routine.
    """

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class ConvergenceError(NumericalError):
    """A simulated quantity did not settle within the horizon."""


class BracketError(ConsensusLabError, ValueError):
    """A bisection bracket does not enclose the feasibility boundary."""
