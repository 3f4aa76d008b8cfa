"""
Exception hierarchy shared by every module, with the CLI exit code each maps to
"""

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_IO = 3


class NCFMError(Exception):
    """Base class for all errors raised by this package"""

    exit_code = EXIT_NUMERIC


class ConfigError(NCFMError):
    """Invalid configuration value, unknown key or unparseable config file"""

    exit_code = EXIT_CONFIG


class ShapeError(NCFMError, ValueError):
    """Array dimensions do not agree"""


class ArgumentError(NCFMError, ValueError):
    """An argument is outside its documented domain"""


class StateError(NCFMError, RuntimeError):
    """An object is not in the state an operation requires"""


class NumericError(NCFMError, ArithmeticError):
    """A loss or gradient became non-finite"""


class DataParseError(NCFMError):
    """A data file is missing or does not conform to its format"""

    exit_code = EXIT_IO


class CheckpointError(NCFMError):
    """A checkpoint file cannot be read, written or has the wrong version"""

    exit_code = EXIT_IO
