"""Exception types shared across the workbench."""


class BudgetExhaustedError(RuntimeError):
    """Raised when a function evaluation is requested past the run budget."""


class InvalidSpecError(ValueError):
    """Raised for malformed instance-generation specs or run configs."""


class InvariantViolationError(ValueError):
    """Raised when a loaded or constructed instance breaks a structural invariant."""


class GateViolationError(RuntimeError):
    """Raised when withheld structural metadata reaches a compliant code path."""


class DegenerateSamplesError(RuntimeError):
    """Raised when a covariance update would collapse (all samples identical)."""


class ProposerUnavailableError(RuntimeError):
    """Raised when a proposal source has nothing left to offer."""
