"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class GCLMError(Exception):
    """Base class for all package errors."""


class ConfigurationError(GCLMError, ValueError):
    """Invalid parameters, mismatched cutoffs or violated admissibility guards.

    ``violations`` holds every problem found, not only the first one.
    """

    def __init__(self, message: str, violations: list[str] | None = None):
        self.violations = list(violations) if violations else [message]
        super().__init__(message)


class NumericalError(GCLMError, ArithmeticError):
    """Non-finite input or output detected."""


class BlowUpError(GCLMError):
    """A trajectory left the admissible region (non-finite or huge norm).

    Carries the time of detection and the recent history of L2 norms.
    """

    def __init__(self, t: float, norm_history: list[tuple[float, float]], reason: str):
        self.t = t
        self.norm_history = list(norm_history)
        self.reason = reason
        super().__init__(f"blow-up at t={t:.6g}: {reason}")

    def report(self) -> dict:
        return {
            "t": self.t,
            "reason": self.reason,
            "norm_history": [[float(s), float(n)] for s, n in self.norm_history],
        }


class InsufficientSamplesError(GCLMError):
    """Too few surviving realizations for a statistical fit."""
