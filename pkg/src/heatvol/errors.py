"""Exception types shared across the package.

The CLI maps each family to a distinct exit code (see :mod:`heatvol.cli`).
"""

from __future__ import annotations


class HeatvolError(Exception):
    """Base class for all package errors."""


class SchemaError(HeatvolError, ValueError):
    """Annotation content violates the declared layout or value ranges."""


class AnnotationParseError(SchemaError):
    """A line of an annotation file is not valid JSON."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class EmptySubjectError(HeatvolError, ValueError):
    """No visible keypoint exists to define a subject box."""


class SpecError(HeatvolError, ValueError):
    """A network or lateral specification is inconsistent."""


class ShapeError(HeatvolError, ValueError):
    """Array shapes are incompatible for an operation."""


class UsageError(HeatvolError, RuntimeError):
    """An operation was called out of order (e.g. backward before forward)."""


class DivergenceError(HeatvolError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"loss became non-finite ({loss}) during epoch {epoch}")
        self.epoch = epoch
        self.loss = loss
