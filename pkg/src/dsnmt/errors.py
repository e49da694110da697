"""Exception types raised across the engine."""


class DimensionError(ValueError):
    """Operand shapes do not fit the operation."""


class InvalidMaskError(ValueError):
    """An attention mask leaves a row with no admissible position."""


class CorruptInputError(ValueError):
    """Token ids or file contents are outside the accepted range."""


class ParseError(ValueError):
    """A vocabulary or merges file has a malformed line."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InternalStateError(RuntimeError):
    """Decoder bookkeeping went out of sync."""


class FormatError(ValueError):
    """Checkpoint header is not recognised."""


class IntegrityError(ValueError):
    """Checkpoint content does not match its declared configuration."""


class ResourceError(MemoryError):
    """The memory pool could not obtain a block from the system."""
