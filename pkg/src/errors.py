"""
Error types shared by every SmoothLab module.
"""
from typing import Optional


class SmoothLabError(Exception):
    """Base class for all SmoothLab errors."""


class InvalidOutcomeError(SmoothLabError, ValueError):
    """An outcome component does not belong to its lattice factor."""


class InvalidValuationError(SmoothLabError, ValueError):
    """A valuation violates its declared shape (empty family, negative value...)."""


class InvalidGridError(SmoothLabError, ValueError):
    """A bid grid is missing the distinguished bid 0 or is malformed."""


class ConfigurationError(SmoothLabError, ValueError):
    """Dimensions or cross-references of a scenario do not line up."""


class UtilityRangeError(SmoothLabError, ValueError):
    """A learner received a utility outside its declared range."""


class ParameterError(SmoothLabError, ValueError):
    """A numeric parameter is outside the range an operation accepts."""


class InvalidInstanceError(SmoothLabError, ValueError):
    """A SINR instance has degenerate geometry or constants."""


class BudgetExceededError(SmoothLabError, RuntimeError):
    """An exact enumeration would exceed its budget."""

    def __init__(self, what: str, required: float, budget: float, hint: Optional[str] = None):
        self.what = what
        self.required = required
        self.budget = budget
        message = f"{what}: enumeration needs {required:.6g} terms, budget is {budget:.6g}"
        if hint:
            message = f"{message} ({hint})"
        super().__init__(message)
