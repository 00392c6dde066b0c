"""Exception hierarchy.

The CLI maps each family to an exit code: config errors to 2, data errors
to 3 and numerical failures to 4.
"""


class IOpError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(IOpError, ValueError):
    pass


class DataError(IOpError, ValueError):
    pass


class LoadError(DataError):
    pass


class ValidationError(DataError):
    pass


class SchemaError(DataError):
    pass


class SubsetError(DataError):
    pass


class EncodingError(DataError):
    pass


class NumericalError(IOpError, ArithmeticError):
    pass


class DomainError(NumericalError):
    """Inputs outside the domain of an index (e.g. nonpositive values for the MLD)."""


class FitError(NumericalError):
    pass


class SelectionError(NumericalError):
    pass
