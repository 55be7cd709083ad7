"""Exception types shared across the package."""


class VacalError(Exception):
    """Base class for all package-specific errors."""


class InvalidTargetSetError(VacalError):
    """Target amplitudes and frequencies are inconsistent or out of range."""


class OutOfRangeError(VacalError):
    """An angle or frequency argument lies outside its admissible range."""


class UnmappableFrequencyError(OutOfRangeError):
    """An angular frequency has no direction of arrival for this array."""


class InvalidReferenceError(VacalError):
    """A reference channel element that must equal one does not."""


class DegenerateCalibrationError(VacalError):
    """An imbalance estimate is too close to zero to be inverted."""


class ReferenceChannelDegenerateError(VacalError):
    """The weight of the reference channel is too close to zero to normalize."""


class DegenerateSpectrumError(VacalError):
    """A spectrum has no usable main peak or no sidelobe region."""


class InsufficientGeometryError(VacalError):
    """The observation set cannot constrain the requested fit."""


class InsufficientDataError(VacalError):
    """Not enough input records to run the requested analysis."""


class ReplayFormatError(VacalError):
    """A replay file line does not match the expected record layout."""


class ExperimentError(VacalError):
    """Too many Monte Carlo trials failed to trust the aggregate."""
