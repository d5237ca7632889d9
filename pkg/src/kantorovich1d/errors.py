"""Semantic exception hierarchy.

Public functions never raise bare ValueError for contract violations; they
raise one of the classes below so callers (and the CLI exit-code mapping)
can tell configuration mistakes from numerical failures.
"""


class SolverError(Exception):
    """Base class for every error raised by this package."""


class DomainError(SolverError):
    """An argument lies outside the mathematical domain of an operation."""


class StateError(SolverError):
    """An object is not in the state an operation requires (e.g. unset constant)."""


class BracketError(SolverError):
    """A root bracket is invalid or carries no sign change."""


class EvaluationError(SolverError):
    """A user-supplied function returned a non-finite or malformed value."""


class RootConvergenceError(SolverError):
    """The root iteration cap was exhausted before the bracket closed."""


class QuadratureError(SolverError):
    """Adaptive subdivision ran out of depth before meeting the tolerance.

    Carries the best available estimate so callers doing sign-only checks
    can still proceed deliberately.
    """

    def __init__(self, message, best_estimate, error_bound):
        super().__init__(message)
        self.best_estimate = float(best_estimate)
        self.error_bound = float(error_bound)


class PositivityError(SolverError):
    """A density is not strictly positive where it must be."""


class BalanceError(SolverError):
    """Source and sink masses are not both 1 within tolerance."""


class LayoutError(SolverError):
    """The support layout is not admissible for the requested operation."""


class InfeasibleStressError(DomainError):
    """|theta| > 1 would force a slope beyond the gradient constraint."""


class FeasibilityError(SolverError):
    """A grid function violates the discrete feasibility constraints."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = tuple(violations)


class ConfigError(SolverError):
    """A run configuration document is malformed or inconsistent."""
