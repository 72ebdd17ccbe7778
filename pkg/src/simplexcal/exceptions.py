"""Exception hierarchy for simplexcal.

Every error raised by this package derives from :class:`SimplexCalError`,
so callers can catch one type at an API boundary. Each subclass also
derives from the closest built-in category (``ValueError``, ``IndexError``,
...) so generic handlers keep working.
"""


class SimplexCalError(Exception):
    """Base class for all simplexcal errors."""


class InvalidProbability(SimplexCalError, ValueError):
    """Input is not a usable probability vector (negative entries, bad sum, NaN)."""


class DimensionMismatch(SimplexCalError, ValueError):
    """Operands disagree on the number of classes."""


class IndexOutOfRange(SimplexCalError, IndexError):
    """Class index outside ``[0, c)``."""


class BoundaryPoint(SimplexCalError, ValueError):
    """A zero entry reached a log-ratio operation; clip the input first."""


class NumericalUnderflow(SimplexCalError, ArithmeticError):
    """A calibrated probability underflowed to exactly zero."""


class NotPositiveDefinite(SimplexCalError, RuntimeError):
    """Symmetric part of the fitted matrix fell below the eigenvalue floor."""


class DegenerateLabels(SimplexCalError, ValueError):
    """Labels are degenerate (single class) for the requested fit."""


class NoFeasibleThreshold(SimplexCalError, RuntimeError):
    """No score threshold satisfies the conditional error constraint."""


class EmptyDataset(SimplexCalError, ValueError):
    """Operation requires at least one sample."""


class InsufficientData(SimplexCalError, ValueError):
    """Too few samples for the requested binning."""


class UndefinedAUC(SimplexCalError, ValueError):
    """AUC needs at least one error and one correct sample."""


class InvalidArgument(SimplexCalError, ValueError):
    """Argument outside its documented domain."""
