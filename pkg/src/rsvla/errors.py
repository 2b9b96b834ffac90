"""Shared exception types."""


class DegenerateVectorError(ValueError):
    """A zero-norm vector was given where a direction is required."""


class ShapeError(ValueError):
    """Operand dimensions are inconsistent."""


class GridBoundsError(IndexError):
    """A rectangle or index falls outside its grid."""


class TrainingDivergedError(RuntimeError):
    """A non-finite loss appeared during training."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")
