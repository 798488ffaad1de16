"""Exception hierarchy shared by every subsystem."""


class AutoGSTError(Exception):
    """Base class for all errors raised by this package."""


class SpaceMismatch(AutoGSTError, ValueError):
    pass


class ArityError(AutoGSTError, ValueError):
    pass


class UnboundSymbol(AutoGSTError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unbound symbol"


class InvalidBC(AutoGSTError, ValueError):
    pass


class SingularSystem(AutoGSTError, ArithmeticError):
    pass


class NonConvergence(AutoGSTError, RuntimeError):
    """An iteration ran out of budget.

    ``residual_norm`` holds the last residual seen; eigensolvers also attach
    their best approximations as ``best``.
    """

    def __init__(self, message, residual_norm=None, best=None):
        super().__init__(message)
        self.residual_norm = residual_norm
        self.best = best


class BreakdownError(AutoGSTError, RuntimeError):
    pass


class TapeSealed(AutoGSTError, RuntimeError):
    pass


class TapeNotSealed(AutoGSTError, RuntimeError):
    pass


class UnsupportedFunctional(AutoGSTError, ValueError):
    pass


class InvalidInnerProduct(AutoGSTError, ValueError):
    pass


class OracleMismatch(AutoGSTError, AssertionError):
    def __init__(self, message, probe=None, error=None):
        super().__init__(message)
        self.probe = probe
        self.error = error


class ConfigError(AutoGSTError, ValueError):
    """Bad configuration; ``key`` names the offending entry when known."""

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key


class DimensionMismatch(AutoGSTError, ValueError):
    pass


class ShapeError(AutoGSTError, ValueError):
    pass


class UnknownModel(AutoGSTError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown model"
