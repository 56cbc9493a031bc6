"""Exception types shared across the package."""


class SymproxError(Exception):
    """Base class for all package errors."""


class ValidationError(SymproxError, ValueError):
    """Invalid input: malformed measure, penalty or config payload."""


class SizeMismatch(ValidationError):
    pass


class TooLarge(ValidationError):
    pass


class InvalidGrid(ValidationError):
    pass


class OutOfRange(ValidationError):
    pass


class DegenerateGrid(ValidationError):
    pass


class Unevaluable(SymproxError):
    """The penalty value is not available (only its proximal map is)."""


class NoConvergence(SymproxError):
    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class NoSolution(SymproxError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class BracketFailure(SymproxError):
    def __init__(self, message, endpoints=None):
        super().__init__(message)
        self.endpoints = endpoints
