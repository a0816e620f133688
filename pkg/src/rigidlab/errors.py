"""Exception types raised by the geometry and solver modules."""


class GeometryError(Exception):
    """Base class for all numerical-geometry failures."""


class InvalidArgumentError(GeometryError, ValueError):
    pass


class DegenerateMetricError(GeometryError):
    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class NotAGraphError(GeometryError):
    """Gradient bound ``|grad r|_g < 1`` violated."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class NotIsometricError(GeometryError):
    pass


class NotConvexError(GeometryError):
    pass


class OriginNotInsideError(GeometryError):
    pass


class TangencyError(GeometryError):
    pass


class HypothesisViolatedError(GeometryError):
    pass


class BadInitializationError(GeometryError):
    pass


class NoConvergenceError(GeometryError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
