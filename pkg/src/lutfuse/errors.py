"""Exception types shared across the package."""


class LutFuseError(Exception):
    """Base class for all package errors."""


class InvalidArgument(LutFuseError, ValueError):
    pass


class InvalidState(LutFuseError, RuntimeError):
    pass


class NumericError(LutFuseError, ArithmeticError):
    """Raised when an optimizer step would produce non-finite values."""


class DataError(LutFuseError):
    """No usable training/evaluation data."""


class PngError(LutFuseError):
    pass


class PngDecodeError(PngError):
    """File is not a PNG, or is truncated/corrupt."""


class PngUnsupportedError(PngError):
    """Valid PNG that uses a feature outside the supported subset."""


class BundleError(LutFuseError):
    """Malformed bundle file or CRC mismatch."""
