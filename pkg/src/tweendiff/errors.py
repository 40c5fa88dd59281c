"""Exception types shared across the package."""


class TweendiffError(Exception):
    """Base class for package errors."""


class ConfigurationError(TweendiffError):
    """Unknown identifiers, invalid config files, or incompatible settings."""


class DataFormatError(TweendiffError):
    """Corrupt or truncated container files."""


class NumericError(TweendiffError):
    """Non-finite values encountered during model evaluation or sampling."""


class DivergenceError(NumericError):
    """Training loss became non-finite."""


class EmptyFrameError(TweendiffError):
    """A frame has no pixels above the tracking threshold."""
