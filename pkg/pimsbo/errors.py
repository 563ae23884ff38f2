"""
Exception types raised by pimsbo
"""


class PimsboError(Exception):
    """Base class for all pimsbo errors"""


class DimensionError(PimsboError, ValueError):
    """Points of mismatched dimension or with non-finite coordinates"""


class DomainError(PimsboError, ValueError):
    """Invalid grid, box or lattice request"""


class FactorizationError(PimsboError):
    """Cholesky factorization failed"""

    def __init__(self, what, detail=""):
        self.what = what
        message = f"Cholesky factorization of {what} failed"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class NumericalError(PimsboError):
    """A floating-point guard was exceeded"""


class ConfigError(PimsboError, ValueError):
    """Invalid experiment configuration"""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")

