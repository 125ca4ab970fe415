"""Exception types shared across the package."""


class DeepirError(Exception):
    """Base class for errors raised by this package."""


class FormatError(DeepirError):
    """A binary file (weights, feature dump, field dump) is malformed."""
