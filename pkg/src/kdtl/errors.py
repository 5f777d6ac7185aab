"""Exception hierarchy shared by the kdtl modules."""


class KDTLError(Exception):
    """Base class for all kdtl errors."""


class DomainError(KDTLError, ValueError):
    """An argument lies outside the domain of a function."""


class ParseError(KDTLError, ValueError):
    """A document does not conform to its schema."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class ValidationError(KDTLError, ValueError):
    """A parsed value violates a physical or structural invariant."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class InsufficientDataError(ValidationError):
    """Too few data points for the requested operation."""


class DegenerateSignalError(DomainError):
    """A fringe scan carries no usable signal."""


class BracketError(KDTLError, RuntimeError):
    """A 1-D minimum sits on the edge of the search bracket."""


class NotApplicableError(KDTLError, ValueError):
    """The requested estimate needs inputs that are absent (e.g. error bars)."""


class ConfigError(KDTLError, ValueError):
    """A numerical configuration is under-resolved or inconsistent."""


class NumericalQualityError(KDTLError, RuntimeError):
    """A simulation failed an internal accuracy check (e.g. aliasing)."""
