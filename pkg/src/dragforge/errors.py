"""Exception types shared across the engine."""


class DragforgeError(Exception):
    """Base class for all engine errors."""


class BoundsError(DragforgeError):
    """A coordinate falls outside the grid it is bound to."""


class ShapeError(DragforgeError):
    """Array dimensions are inconsistent with what an operation requires."""


class ParameterError(DragforgeError):
    """A hyperparameter or argument is outside its valid range."""


class DataError(DragforgeError):
    """Input data is malformed (non-finite values, bad labels, ...)."""


class NumericError(DragforgeError):
    """A computation produced or encountered a non-finite value."""


class FormatError(DragforgeError):
    """A file does not conform to one of the supported binary formats."""


class ConfigError(DragforgeError):
    """A run configuration failed validation."""
