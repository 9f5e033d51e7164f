"""Exception hierarchy shared by every module of the package."""


class MateError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(MateError, ValueError):
    pass


class DimensionError(MateError, ValueError):
    pass


class IngestionError(MateError, ValueError):
    def __init__(self, message, row=None, column=None):
        loc = ""
        if row is not None:
            loc = f" (row {row}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + loc)
        self.row = row
        self.column = column


class DegenerateFeatureError(MateError, ValueError):
    def __init__(self, message, row):
        super().__init__(f"{message} (feature row {row})")
        self.row = row


class NumericalError(MateError, ArithmeticError):
    pass


class SolverError(NumericalError):
    pass


class PoleError(NumericalError):
    pass


class ConsistencyError(NumericalError):
    pass


class NonIdentifiableError(MateError, ValueError):
    pass


class TrimError(MateError, ValueError):
    pass


class UnidentifiableBlockError(MateError, ValueError):
    pass


class RatioDegenerateError(NumericalError):
    pass


class GridError(MateError, ValueError):
    pass


class ConfigError(MateError, ValueError):
    pass
