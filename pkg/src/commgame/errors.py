"""Exception types shared across the package."""


class CommGameError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(CommGameError):
    """Operands have incompatible or invalid shapes."""


class ConfigError(CommGameError):
    """Invalid configuration value or file."""


class NumericsError(CommGameError):
    """A computation produced NaN/Inf or otherwise left the finite domain."""


class TapeError(CommGameError):
    """Gradient tape misuse (double backward, nested tapes, ...)."""


class ContractError(CommGameError):
    """An input violated an operation's stated precondition."""


class UnsupportedModeError(CommGameError):
    """The requested quantity is defined as unsupported for this channel mode."""
