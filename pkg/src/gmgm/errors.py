"""Exception types shared across the package."""


class NotPositiveDefiniteError(ValueError):
    """An eigenvalue configuration or matrix violates positive definiteness."""


class ConvergenceError(RuntimeError):
    """Iteration failed to converge; carries diagnostic state."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
