"""Exception types shared across the toolkit."""

from __future__ import annotations


class VolterraError(Exception):
    """Base class for toolkit-specific failures."""


class QuadratureConvergenceError(VolterraError):
    """A refining quadrature did not meet its tolerance."""

    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved


class NonIntegrableError(VolterraError):
    """An integrability probe kept growing under mesh refinement."""

    def __init__(self, message: str, estimates: tuple[float, ...] = ()):
        super().__init__(message)
        self.estimates = estimates


class SmallnessViolationError(VolterraError):
    """The one-step kernel integral is not below 1, so the resolvent
    series has no contraction margin on this grid."""

    def __init__(self, message: str, value: float):
        super().__init__(message)
        self.value = value


class ResolventDivergenceError(VolterraError):
    """Resolvent term norms failed to decay within the term budget."""

    def __init__(self, message: str, term_norms: tuple[float, ...] = ()):
        super().__init__(message)
        self.term_norms = term_norms


class GridMismatchError(VolterraError):
    """Two tables built on different grids were combined."""


class SchemeBlowUpError(VolterraError):
    """A simulated state became non-finite; the step index is kept so the
    blow-up can be located instead of silently clamped."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class ConfigError(VolterraError):
    """A config file violated the documented schema."""

    def __init__(self, field: str, expected: str, got: object):
        super().__init__(f"[{field}] expected {expected}, got {got!r}")
        self.field = field
        self.expected = expected
        self.got = got
