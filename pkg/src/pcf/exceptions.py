"""Exception types shared across the package."""


class PcfError(Exception):
    """Base class for all library failures."""


class InsufficientSamplesError(PcfError, ValueError):
    """Raised when an operation needs more samples than were provided."""


class SingularityError(PcfError, ValueError):
    """Raised when a linear system is rank deficient."""


class DegenerateInputError(PcfError, ValueError):
    """Raised when an input has no variation where variation is required."""


class InvalidRankError(PcfError, ValueError):
    """Raised when a requested component count cannot be produced."""


class DivergenceError(PcfError, RuntimeError):
    """Raised when an optimizer produces a non-finite loss.

    Carries the step index at which training was aborted.
    """

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")


class SchemaError(PcfError, ValueError):
    """Raised when a dataset file violates the CSV schema."""
