"""Exception types shared across the package.

Operating-system level failures (missing files, permissions) surface as the
built-in ``OSError``; everything below signals a contract violation that the
caller can act on.
"""


class StyleAugError(Exception):
    """Base class for all package-specific errors."""


class ShapeMismatch(StyleAugError, ValueError):
    """Array extents are incompatible with the requested operation."""


class UnknownTag(StyleAugError, KeyError):
    """A layer tag was requested that the network does not define."""


class FormatError(StyleAugError, ValueError):
    """A weight file is malformed: bad magic, version, or truncation."""


class DecodeError(StyleAugError, ValueError):
    """An image file could not be decoded into a supported pixel format."""


class StepSizeError(StyleAugError, RuntimeError):
    """Pixel optimization achieved no loss decrease (divergent step size)."""


class InsufficientPool(StyleAugError, ValueError):
    """A replacement image pool is smaller than the number of slots to fill."""


class NumericError(StyleAugError, ArithmeticError):
    """A non-finite value appeared where the computation requires finite ones."""


class MissingLayer(StyleAugError, KeyError):
    """A weight-export mapping references a layer absent from the source model."""
