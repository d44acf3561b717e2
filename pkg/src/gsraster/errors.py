"""Exception types shared across the pipeline."""


class FormatError(ValueError):
    """A file does not match its expected on-disk layout."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ValidationError(ValueError):
    """A value violates a domain invariant."""


class ConfigError(ValueError):
    """An unsupported combination of configuration options."""
