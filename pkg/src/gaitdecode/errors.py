"""Exception types shared across the package."""


class GaitDecodeError(Exception):
    """Base class for all package errors."""


class ShapeError(GaitDecodeError):
    """Operand shapes are inconsistent with the operation's contract."""


class ParameterError(GaitDecodeError):
    """A numeric parameter is outside its valid range."""


class ContractError(GaitDecodeError):
    """An API precondition was violated (e.g. non-scalar backward root)."""


class NonFiniteError(GaitDecodeError):
    """NaN or Inf encountered where finite values are required."""


class ConfigurationError(GaitDecodeError):
    """A configuration value is inconsistent (montage, model config, ...)."""


class DataFormatError(GaitDecodeError):
    """A data file does not match its declared schema."""


class SplitError(GaitDecodeError):
    """A dataset split policy cannot be applied to the given data."""


class MetricUndefinedError(GaitDecodeError):
    """A metric is undefined for the given inputs (e.g. zero variance)."""


class DegenerateTestError(GaitDecodeError):
    """A statistical test is degenerate (e.g. zero-variance differences)."""
