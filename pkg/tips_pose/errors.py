"""
Root exception for the pipeline.

Domain modules define their own subclasses next to the code that raises them;
the CLI maps anything deriving from TipsError to a runtime-failure exit code.
"""


class TipsError(Exception):
    """Base class for all pipeline errors"""
    pass


class TipsValidationError(TipsError, ValueError):
    """Raised when an input violates a documented precondition"""
    pass


class TrainingDiagnosticError(TipsError, RuntimeError):
    """Raised when training produces non-finite or diverging values"""
    pass


class ShapeMismatchError(TipsValidationError):
    """Raised when a tensor does not have the shape a network expects"""
    pass


class EmptyBatchError(TipsValidationError):
    """Raised when a loss or metric receives no samples"""
    pass
