"""Exception hierarchy shared across the package."""


class MemescanError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(MemescanError, ValueError):
    """Operand shapes are incompatible."""


class FormatError(MemescanError, ValueError):
    """A binary or text file does not match its expected layout."""

    def __init__(self, message, byte_offset=None):
        if byte_offset is not None:
            message = f"{message} (at byte {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class ManifestError(MemescanError, ValueError):
    """A dataset manifest failed parsing or validation."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ValidationError(MemescanError, ValueError):
    """An input value violates a documented invariant."""


class DegenerateAgreementError(ValidationError):
    """Fleiss' kappa is undefined: expected agreement equals 1."""


class DivergenceError(MemescanError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


class RenderError(MemescanError, KeyError):
    """A prompt template placeholder has no binding."""

    def __init__(self, placeholder):
        super().__init__(f"unbound placeholder: {placeholder!r}")
        self.placeholder = placeholder


class TransportError(MemescanError, RuntimeError):
    """The HTTP completion backend failed at the transport level."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class BackendError(MemescanError, RuntimeError):
    """The completion backend returned an unusable result."""
