"""Exception types shared across the package."""


class SinosrError(Exception):
    """Base class for all package errors."""


class ValidationError(SinosrError):
    """A value violates a documented invariant or precondition."""


class DimensionError(SinosrError):
    """Array shapes or counts are incompatible."""


class GeometryError(SinosrError):
    """A shape does not fit the region it must occupy."""


class FileFormatError(SinosrError):
    """A binary file is malformed. Carries the byte offset of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class SolverError(SinosrError):
    """Wave solver misconfiguration or mid-run instability."""


class TrainingError(SinosrError):
    """Training aborted (for example a non-finite loss)."""


class ConfigError(SinosrError):
    """Invalid pipeline configuration. Names the offending key."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
