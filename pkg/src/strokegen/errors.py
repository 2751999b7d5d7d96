"""Exception types shared across the package."""


class StrokegenError(Exception):
    """Base class for all package errors."""


class InvalidStroke(StrokegenError):
    """Stroke data violates a structural invariant (non-finite, empty, bad pen bit)."""


class DegenerateStroke(StrokegenError):
    """Stroke data is structurally valid but geometrically degenerate (no ink, zero height)."""


class InvalidArgument(StrokegenError):
    """An argument is outside the documented domain of the operation."""


class ParseError(StrokegenError):
    """A file could not be parsed. Carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(StrokegenError):
    """Parsed data violates a domain invariant. Carries line number and reason."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class LayoutUnderflow(StrokegenError):
    """Fewer separable stroke groups than words; a layout cannot be derived."""


class LayoutError(StrokegenError):
    """A word layout is missing or unusable where one is required."""


class VocabError(StrokegenError):
    """A character outside the vocabulary. Carries the character and its position."""

    def __init__(self, char: str, position: int):
        super().__init__(f"character {char!r} at position {position} not in vocabulary")
        self.char = char
        self.position = position


class NumericalError(StrokegenError):
    """A computation produced non-finite values."""


class DivergenceError(StrokegenError):
    """The sampling chain blew up instead of converging."""


class CheckpointError(StrokegenError):
    """A checkpoint file is malformed, corrupt, or of an incompatible version."""
