"""Exception types shared across the package.

Every numerical failure mode gets its own class so callers (and the CLI)
can distinguish "your input is out of the validated regime" from "the
iteration did not converge".
"""


class EffcapError(Exception):
    """Base class for all solver and model errors."""


class ConvergenceError(EffcapError):
    """An iterative solve exhausted its budget without meeting tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class MultipleRootsError(EffcapError):
    """A root-verification sweep found more than one candidate solution."""


class TransformDivergenceError(EffcapError):
    """A moment generating function is not finite at the requested argument."""


class InfeasibleModelError(EffcapError):
    """The model admits no solution in the expected bracket."""


class MonotonicityError(EffcapError):
    """A quantity that must be monotone for the solve to be trusted is not."""


class ConcavityError(EffcapError):
    """An objective that must be concave along the search path is not."""


class InsufficientDataError(EffcapError):
    """An estimator was asked to run on too few samples or blocks."""


class ScenarioError(EffcapError):
    """A scenario file failed validation; message names the offending field."""
