"""Exception hierarchy shared across the package."""


class BondmidError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(BondmidError, ValueError):
    """A vector or matrix does not have the expected shape."""


class NotPositiveSemiDefinite(BondmidError, ValueError):
    """A matrix that must be PSD has a significantly negative eigenvalue.

    Carries the name of the offending matrix in ``args[0]``.
    """


class NonPositiveParameter(BondmidError, ValueError):
    """A parameter that must be strictly positive is zero or negative."""


class WrongSpreadMode(BondmidError, ValueError):
    """Operation requires the other spread dynamics mode."""


class WrongDimension(BondmidError, ValueError):
    """Operation is undefined at this universe size."""


class EmptyInterval(BondmidError, ValueError):
    """Two-sided truncation interval has lower bound >= upper bound."""


class DegenerateBoth(BondmidError, ValueError):
    """Both the diffusion and the observation-noise variance are zero."""


class InvalidPrior(BondmidError, ValueError):
    """Prior is inconsistent with the model universe."""


class NonMonotoneTime(BondmidError, ValueError):
    """Event timestamp does not strictly increase the filter clock."""


class UnknownBond(BondmidError, ValueError):
    """Event references a bond index outside the universe."""


class TimeInPast(BondmidError, ValueError):
    """Prediction time lies before the current filter time."""


class AllWeightsZero(BondmidError, RuntimeError):
    """Every particle received zero likelihood for an event.

    Signals model/data inconsistency; the event is not applied.
    """


class EstimationError(BondmidError, ValueError):
    """Base class for calibration failures."""


class InsufficientData(EstimationError):
    """Not enough samples to estimate the requested quantity."""


class NoOverlap(EstimationError):
    """Series have no common time range after alignment."""


class DegenerateVolatility(EstimationError):
    """A series shows no variation, so its volatility is unidentifiable."""


class DegenerateSpread(EstimationError):
    """Target spread moments are zero or negative."""


class MissingSpreads(EstimationError):
    """Composite series has no spread column for a bond that needs one."""


class InputFileError(BondmidError, ValueError):
    """A config or data file failed to parse or validate."""
