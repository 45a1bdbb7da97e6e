"""Exception hierarchy shared across the package."""


class EdgenasError(Exception):
    """Base class for all package errors."""


class DimensionError(EdgenasError):
    """Operand shapes do not conform to the operation's shape rule."""


class NumericError(EdgenasError):
    """Invalid numeric domain (log of non-positive, NaN/Inf detected, ...)."""


class ContractError(EdgenasError):
    """A caller violated an API precondition."""


class IngestionError(EdgenasError):
    """A data file could not be parsed."""


class SplitError(EdgenasError):
    """A requested dataset split is infeasible."""


class SamplingError(EdgenasError):
    """A requested random sample is infeasible."""


class ConfigurationError(EdgenasError):
    """Invalid or incomplete run configuration."""
