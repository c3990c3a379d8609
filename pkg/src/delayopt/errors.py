"""Exception types raised across the package."""


class DelayOptError(Exception):
    """Base class for all package errors."""


class ExprSyntaxError(DelayOptError, SyntaxError):
    """Malformed expression source. ``offset`` is the 0-based byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.msg = message
        self.offset = offset

    def __str__(self):
        return f"{self.msg} at offset {self.offset}"


class UnknownIdentifier(DelayOptError, NameError):
    def __init__(self, name, offset):
        super().__init__(f"unknown identifier {name!r} at offset {offset}")
        self.name = name
        self.offset = offset


class DomainError(DelayOptError, ArithmeticError):
    """log/sqrt of a negative number, division by zero, and similar."""


class NonSmooth(DelayOptError):
    """A non-differentiable primitive was hit where derivatives are needed."""


class OutOfDomain(DelayOptError, ValueError):
    """Evaluation time outside the represented interval."""


class ConfigError(DelayOptError, ValueError):
    pass


class ProblemError(DelayOptError, ValueError):
    """Inconsistent problem description."""


class NonFinite(DelayOptError, FloatingPointError):
    """The numerical solution left the floating-point range."""


class InfeasibleStart(DelayOptError, ValueError):
    pass
