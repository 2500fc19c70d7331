"""
Domain failures shared across the pipeline apps.

Plain invalid input is reported with django.core.exceptions.ValidationError;
the classes below cover the failures that are not a malformed argument.
"""


class UndefinedQuantityError(ArithmeticError):
    """A probability of causation conditions on an event of probability zero."""


class EstimationError(ValueError):
    """Counts are insufficient to estimate a distribution for a subpopulation."""


class SpecMismatchError(ValueError):
    """Artifacts produced from different SCMs were combined."""


class ResourceBudgetError(RuntimeError):
    """A computation would exceed its configured memory budget."""


class CacheMismatchError(RuntimeError):
    """A manifest does not match the inputs it claims to describe."""
