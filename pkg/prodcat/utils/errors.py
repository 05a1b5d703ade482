from typing import Optional

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


class ProdcatError(Exception):
    """Base error; carries the CLI exit code and a context dict for the failure envelope."""

    exit_code = EXIT_DATA

    def __init__(self, message: str, context: Optional[dict] = None):
        super().__init__(message)
        self.message = message
        self.context = context or {}


class UsageError(ProdcatError):
    exit_code = EXIT_USAGE


class InputFileError(ProdcatError):
    exit_code = EXIT_IO

    def __init__(self, message: str, path: str, context: Optional[dict] = None):
        super().__init__(message, {"path": str(path), **(context or {})})
        self.path = str(path)


class DataValidationError(ProdcatError):
    exit_code = EXIT_DATA


class ShapeError(DataValidationError):
    """Operand shapes are incompatible for a tensor op."""


class ConfigError(DataValidationError):

    def __init__(self, message: str, key: str, context: Optional[dict] = None):
        super().__init__(f"{key}: {message}", {"key": key, **(context or {})})
        self.key = key


class CheckpointError(DataValidationError):
    pass


class NumericalError(ProdcatError):
    exit_code = EXIT_NUMERICAL


__all__ = [
    "EXIT_OK",
    "EXIT_USAGE",
    "EXIT_IO",
    "EXIT_DATA",
    "EXIT_NUMERICAL",
    "ProdcatError",
    "UsageError",
    "InputFileError",
    "DataValidationError",
    "ShapeError",
    "ConfigError",
    "CheckpointError",
    "NumericalError",
]
