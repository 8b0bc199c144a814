"""Exception hierarchy shared by all supermix modules."""


class SupermixError(Exception):
    """Base class for every error raised by supermix."""


class DimensionMismatchError(SupermixError, ValueError):
    pass


class InvalidMeasureError(SupermixError, ValueError):
    pass


class UndefinedSeparationError(SupermixError, ValueError):
    pass


class UndefinedGradientError(SupermixError, ValueError):
    pass


class EmptyInputError(SupermixError, ValueError):
    pass


class BandMismatchError(SupermixError, ValueError):
    pass


class AmbiguousRegionError(SupermixError, ValueError):
    pass


class SupportMismatchError(SupermixError, ValueError):
    pass


class InsufficientGridError(SupermixError, ValueError):
    pass


class IllConditionedCertificateError(SupermixError, ArithmeticError):
    """The interpolation system of a certificate could not be solved reliably."""

    def __init__(self, message, condition_number):
        super().__init__(f"{message} (condition number ~ {condition_number:.3e})")
        self.condition_number = condition_number
