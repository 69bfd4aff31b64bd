"""Exception hierarchy for coalval.

Every error raised on purpose by the package derives from
:class:`CoalvalError` so callers can catch one base class.  Errors that
signal a numerical breakdown additionally derive from
:class:`NumericalError`; the command line maps those to exit code 3.
"""


class CoalvalError(Exception):
    """Base class for all package errors."""


class ConfigError(CoalvalError, ValueError):
    """Invalid configuration or arguments."""


class NumericalError(CoalvalError, ArithmeticError):
    """A numerical procedure failed (factorization, consistency check)."""


# datasets
class EmptyCoalition(CoalvalError, ValueError):
    pass


class MissingOwner(CoalvalError, KeyError):
    pass


class ParseError(CoalvalError, ValueError):
    """CSV content could not be parsed; ``row`` is the 1-based file line."""

    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class HeterogeneousSchema(CoalvalError, ValueError):
    pass


class UnknownClass(CoalvalError, ValueError):
    pass


# transport
class EmptyDistribution(CoalvalError, ValueError):
    pass


class CacheMiss(CoalvalError, KeyError):
    pass


class DimensionMismatch(CoalvalError, ValueError):
    pass


class SingleClass(CoalvalError, ValueError):
    pass


class MissingEmbedding(CoalvalError, ValueError):
    pass


class RegressionUnsupported(CoalvalError, ValueError):
    pass


class ProblemTooLarge(CoalvalError, ValueError):
    pass


# kernel / gp
class NonSquare(CoalvalError, ValueError):
    pass


class EmptyGrid(CoalvalError, ValueError):
    pass


class FactorizationFailure(NumericalError):
    pass


class InconsistentPosterior(NumericalError):
    pass


# semivalue / active
class TooManyOwners(CoalvalError, ValueError):
    pass


class DuplicateCoalition(CoalvalError, ValueError):
    pass


class AlignmentError(CoalvalError, ValueError):
    pass


class MissingPrefix(CoalvalError, KeyError):
    pass


class DegenerateSchur(NumericalError):
    pass


class BudgetExceedsPool(CoalvalError, ValueError):
    pass


# utility
class ConstantTarget(CoalvalError, ValueError):
    pass


class DegenerateTrainingWarning(UserWarning):
    """A surrogate could not be trained meaningfully; a floor value was used."""


# reports
class OwnerMismatch(CoalvalError, ValueError):
    pass
