"""Exception hierarchy.

Input problems derive from ``ValueError``; failures of a numerical method on
valid input derive from :class:`NumericalError`. The CLI maps the first group
to exit code 2 and the second to exit code 3.
"""

from __future__ import annotations

from typing import Any


class NumericalError(RuntimeError):
    """A computation failed on valid input. ``details`` is JSON-serializable."""

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.details = details


class IllConditionedError(NumericalError):
    """Dense system or Gram matrix too ill-conditioned to trust."""


class ZeroGainError(NumericalError):
    """A synthesized feedback gain vanished at the working truncation."""


class SingularTransformError(NumericalError):
    """The assembled transform is numerically singular."""


class InstabilityError(NumericalError):
    """A trajectory grew beyond the blow-up threshold or became non-finite."""


class ResonanceError(ValueError):
    """A denominator p^2 + lambda - n^2 vanished: lambda lies in {i^2 - j^2}."""


class SharpRangeError(ValueError):
    """A Sobolev index lies outside the range where the estimate holds."""


class AliasingError(ValueError):
    """Physical grid too coarse for the requested truncation."""


class DecayFitError(ValueError):
    """The decay fit window contains no usable data."""


class ControllabilityError(ValueError):
    """A targeted mode has a vanishing potential coefficient."""


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""


class StabilityWarning(RuntimeWarning):
    """Time step exceeds the conservative feedback stability estimate."""


class SmallnessWarning(RuntimeWarning):
    """Initial data exceeds the configured smallness for the nonlinear run."""
