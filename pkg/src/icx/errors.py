"""Exception hierarchy shared across the package."""


class ICXError(Exception):
    """Base class for every error raised by icx."""


class ValidationError(ICXError):
    def __init__(self, violations):
        self.violations = list(violations)
        msg = "; ".join(str(v) for v in self.violations) or "invalid input"
        super().__init__(msg)


class IndexOutOfRange(ICXError):
    pass


class DuplicateRequest(ICXError):
    pass


class ShapeMismatch(ICXError):
    pass


class NonFiniteInput(ICXError):
    pass


class InfeasibleParams(ICXError):
    pass


class SpanViolation(ICXError):
    pass


class InvalidRank(ICXError):
    pass


class NoFeasibleRank(ICXError):
    pass


class NotConverged(ICXError):
    pass


class OffSubspaceInput(ICXError):
    pass


class TooLarge(ICXError):
    pass


class InvalidArgs(ICXError):
    pass


class BoundViolation(ICXError):
    """A solver result contradicts a proven bound; indicates a solver bug."""
