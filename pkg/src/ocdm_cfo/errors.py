"""Exception hierarchy.

Every error raised deliberately by the package derives from :class:`OcdmError`
so callers (the CLI in particular) can separate bad input from bugs.
"""


class OcdmError(Exception):
    pass


class DimensionError(OcdmError, ValueError):
    """Array length or matrix shape does not match the configured block size."""


class InvalidSizeError(OcdmError, ValueError):
    pass


class TapsExceedBlockError(OcdmError, ValueError):
    pass


class RangeError(OcdmError, ValueError):
    """Normalized CFO outside [-pi, pi)."""


class FramingError(OcdmError, ValueError):
    pass


class NoNullSpaceError(OcdmError, ValueError):
    """Fewer than one null subchirp beyond the channel order (N - K - L < 1)."""


class NoExcessCpError(OcdmError, ValueError):
    pass


class SingularChannelError(OcdmError, ArithmeticError):
    pass


class CombinatorialBlowupError(OcdmError, ValueError):
    pass


class UndersampledError(OcdmError, ValueError):
    pass


class DegenerateConfigurationError(OcdmError, ValueError):
    pass


class ConfigurationError(OcdmError, ValueError):
    """Experiment plan incompatible with the requested estimator or equalizer."""
