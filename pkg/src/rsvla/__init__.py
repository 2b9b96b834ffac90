"""rsvla: dynamic-resolution input pipeline, multi-scale vision-language
alignment losses, a desk-scale joint training loop with verified gradients,
and the caption/retrieval evaluation metric suite."""

from . import capmetrics, cli, dris, gridcore, msvlam, toyvlm
from .errors import (DegenerateVectorError, GridBoundsError, ShapeError,
                     TrainingDivergedError)

__version__ = "0.1.0"

__all__ = [
    "capmetrics", "cli", "dris", "gridcore", "msvlam", "toyvlm",
    "DegenerateVectorError", "GridBoundsError", "ShapeError",
    "TrainingDivergedError",
]
