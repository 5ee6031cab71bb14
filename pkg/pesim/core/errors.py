"""
Exception hierarchy for the accelerator model.

Everything the simulator raises derives from AcceleratorError so the CLI
can turn it into a one-line message and a nonzero exit status.
"""

from typing import Optional, Tuple


class AcceleratorError(Exception):
    """Base class for all simulator errors."""


class ShapeError(AcceleratorError, ValueError):
    """Invalid dimensions, stride/pad, or a tensor that does not match its layer."""


class PackingError(AcceleratorError, ValueError):
    """int8x4 packing requested for a channel count that is not a multiple of 4."""


class LayoutError(AcceleratorError, ValueError):
    """A tensor carries the wrong layout tag for the requested operation."""


class ConfigError(AcceleratorError, ValueError):
    """Core and layer configuration that cannot be combined."""


class FixtureError(AcceleratorError, ValueError):
    """Malformed fixture document."""


class OutOfWindowError(AcceleratorError, ValueError):
    """Oracle query for an input pixel outside the tile's input window."""


class UnschedulableError(AcceleratorError):
    """A layer that cannot be mapped onto the configured core."""

    def __init__(self, layer: str, constraint: str):
        self.layer = layer
        self.constraint = constraint
        super().__init__(f"layer '{layer}' is unschedulable: {constraint}")


class CommandStreamError(AcceleratorError):
    """No command reproduces a receiver-set transition."""

    def __init__(
        self,
        message: str,
        position: Optional[Tuple[int, int]] = None,
        before: Optional[tuple] = None,
        after: Optional[tuple] = None,
    ):
        self.position = position
        self.before = before
        self.after = after
        if position is not None:
            message = f"{message} at input {position}: {before} -> {after}"
        super().__init__(message)


class BufferOverflowError(AcceleratorError, AssertionError):
    """A PE buffer exceeded its capacity. Indicates a scheduling bug."""
