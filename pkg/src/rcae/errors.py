"""Exception hierarchy shared by every rcae module."""


class RCAEError(Exception):
    """Base class for all rcae errors."""


class DimMismatch(RCAEError, ValueError):
    pass


class TargetTooSmall(DimMismatch):
    pass


class KernelTooLarge(DimMismatch):
    pass


class NonNegligibleImaginaryPart(RCAEError, ArithmeticError):
    """Inverse DFT left an imaginary residue; some upstream plane lost conjugate symmetry."""


class DivisionByZero(RCAEError, ZeroDivisionError):
    pass


class InvalidSigma(RCAEError, ValueError):
    pass


class ModeMismatch(RCAEError, ValueError):
    pass


class EmptyStats(RCAEError, ValueError):
    pass


class EmptyBatch(RCAEError, ValueError):
    pass


class ConfigError(RCAEError, ValueError):
    pass


class InvalidSpec(ConfigError):
    pass


class DataError(RCAEError):
    pass


class UnreadablePath(DataError, OSError):
    pass


class DecodeFailure(DataError):
    pass


class DimUnderflow(DataError, ValueError):
    pass


class EmptyDataset(DataError, ValueError):
    pass


class OverlappingSplits(DataError, ValueError):
    pass


class StreamTooShort(DataError, ValueError):
    pass


class CheckpointError(RCAEError):
    pass
