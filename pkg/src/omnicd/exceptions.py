"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class OmniCDError(Exception):
    exit_code = 1


class UsageError(OmniCDError, ValueError):
    exit_code = 1


class ConfigError(UsageError):
    pass


class DataError(OmniCDError, ValueError):
    exit_code = 2


class ShapeError(DataError):
    pass


class MalformedManifestError(DataError):
    def __init__(self, path, lineno, reason):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {reason}")


class NumericError(OmniCDError, ArithmeticError):
    exit_code = 3

    def __init__(self, message, component=None):
        self.component = component
        super().__init__(message)
