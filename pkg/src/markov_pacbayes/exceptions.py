"""Exception hierarchy.

Everything raised for bad inputs derives from :class:`ValidationError` (a
``ValueError``), so callers can catch one type. :class:`NumericalFailure`
signals an eigensolver or consistency-check breakdown instead.
"""


class ValidationError(ValueError):
    """Base class for invalid inputs or violated preconditions."""


class NumericalFailure(ArithmeticError):
    """A numerical routine failed to converge or produced inconsistent output."""


# kernels and distributions
class EmptyMatrix(ValidationError):
    pass


class NegativeEntry(ValidationError):
    pass


class RowSumViolation(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NonUniqueStationary(ValidationError):
    pass


class ZeroLength(ValidationError):
    pass


class TOutOfRange(ValidationError):
    pass


class DTooSmall(ValidationError):
    pass


class DegenerateSpectrum(ValidationError):
    """The spectrum has no eigenvalue other than 1 (single-state kernel)."""


# spectral
class ZeroStationaryMass(ValidationError):
    pass


class NotStationary(ValidationError):
    pass


class NotReversible(ValidationError):
    pass


# estimation
class StateOutOfRange(ValidationError):
    pass


class DegenerateCounts(ValidationError):
    pass


class AllZeroSample(ValidationError):
    pass


# bounds
class LambdaTooLarge(ValidationError):
    pass


class EmptyGrid(ValidationError):
    pass


class SupportViolation(ValidationError):
    pass


class EpsilonExceedsGamma(ValidationError):
    pass


class SampleSizeConditionViolated(ValidationError):
    pass


class MissingMixingInputs(ValidationError):
    pass


# experiments
class MissingLabels(ValidationError):
    pass
