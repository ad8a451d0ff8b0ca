"""Exception hierarchy shared across the package."""


class TiltBAError(Exception):
    """Base class for all package errors."""


class InvalidParametersError(TiltBAError, ValueError):
    """Parameters are non-finite, out of domain, or produce non-finite output."""


class PackingError(TiltBAError, ValueError):
    """A parameter vector does not match the dataset dimensions."""


class FactorizationError(TiltBAError, ArithmeticError):
    """A symmetric positive-definite factorization failed."""


class TriangulationError(TiltBAError, ValueError):
    pass


class GenerationError(TiltBAError, ValueError):
    pass


class DatasetFormatError(TiltBAError, ValueError):
    """A dataset file is malformed or has an unsupported version."""
