"""Exception hierarchy shared by all modules."""


class WgfracError(Exception):
    """Base class for library errors."""


class DomainError(WgfracError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class EvaluationError(WgfracError, ArithmeticError):
    """A numerical evaluation failed to reach its accuracy contract.

    ``diagnostics`` carries whatever partial information was available
    (terms used, last partial sum, ...).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class UsageError(WgfracError, ValueError):
    """Inputs are individually valid but inconsistent with each other."""


class ExprSyntaxError(WgfracError, ValueError):
    """Raised by the expression parser.

    Attributes
    ----------
    offset : int
        Byte offset into the source text where parsing failed.
    expected : tuple of str
        Token kinds that would have been accepted at ``offset``.
    """

    def __init__(self, message, offset, expected=()):
        super().__init__(f"{message} at offset {offset}"
                         + (f" (expected one of: {', '.join(expected)})" if expected else ""))
        self.offset = offset
        self.expected = tuple(expected)


class UnknownIdentifierError(ExprSyntaxError):
    """An identifier is neither a variable nor a known function."""


class ExprDomainError(DomainError):
    """Expression evaluation left the domain of a function (``log(-1)``)."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class NonConvergenceError(WgfracError, RuntimeError):
    """An iterative solver stopped without meeting its tolerance."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class ValidationError(WgfracError, ValueError):
    """A problem or configuration failed validation."""
