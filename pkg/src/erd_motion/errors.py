"""Exception types shared across the package."""


class ErdError(Exception):
    """Base class for all errors raised by erd_motion."""


class ShapeError(ErdError, ValueError):
    """Array dimensions do not agree."""


class ArgumentError(ErdError, ValueError):
    """An argument is outside its documented domain."""


class NumericError(ErdError, ArithmeticError):
    """A computation produced a non-finite or otherwise invalid number."""


class ParseError(ErdError, ValueError):
    """A data file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ConfigError(ErdError, ValueError):
    """Run configuration is invalid or inconsistent."""


class CheckpointError(ErdError, ValueError):
    """A checkpoint file is malformed or of an unsupported version."""
