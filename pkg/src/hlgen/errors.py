"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand dimensions are incompatible with the requested operation."""


class VocabError(ValueError):
    """A token id falls outside the model vocabulary."""


class BoundsError(ValueError):
    """A character/byte range falls outside the underlying text."""


class CapacityError(RuntimeError):
    """The requested sequence would exceed the model's maximum length."""


class WeightFormatError(RuntimeError):
    """A weight or snapshot file is malformed, truncated, or inconsistent."""


class EmptySelectionError(ValueError):
    """A region selection produced no highlighted patches after downsampling."""


class SinkTokenError(ValueError):
    """Attempt to highlight the sequence-start sink position."""
