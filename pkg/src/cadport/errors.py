"""Exception types shared across the package."""


class CadportError(Exception):
    pass


class ParseError(CadportError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(CadportError, ValueError):
    pass


class InsufficientDataError(CadportError, ValueError):
    pass


class AlignmentError(CadportError, ValueError):
    pass


class ParameterError(CadportError, ValueError):
    pass


class ShapeError(CadportError, ValueError):
    pass


class NumericError(CadportError, ArithmeticError):
    pass


class UndefinedMetricError(CadportError, ArithmeticError):
    pass


class StateError(CadportError, RuntimeError):
    pass


class ConfigError(CadportError, ValueError):
    pass


class DependencyError(CadportError, RuntimeError):
    pass
