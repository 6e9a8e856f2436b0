"""Exception types shared across the package."""


class GeowalkError(Exception):
    """Base class for all package errors."""


class AnchorMismatchError(GeowalkError, ValueError):
    """A tangent vector is not tangent at the point it is used with."""


class ManifoldMismatchError(GeowalkError, ValueError):
    """Objects from different manifolds were combined."""


class CutLocusError(GeowalkError):
    """The minimal geodesic between two points is not unique.

    ``representatives`` holds one canonical preimage per requested wrap
    count so callers that only need norms (rate functions) can continue.
    """

    def __init__(self, message, representatives=()):
        super().__init__(message)
        self.representatives = list(representatives)


class PreconditionError(GeowalkError, ValueError):
    """An input violates a documented precondition."""


class DivergenceError(GeowalkError, ArithmeticError):
    """An ODE integration produced non-finite state."""

    def __init__(self, message, last_valid_time):
        super().__init__(message)
        self.last_valid_time = last_valid_time


class NonConvexProfileError(GeowalkError, ValueError):
    """A log-MGF profile failed the convexity check."""


class UnknownLemmaError(GeowalkError, KeyError):
    """Requested lemma experiment is not registered."""


class MetricEvaluationError(GeowalkError, ValueError):
    """A chart metric could not be evaluated or is not a valid metric."""


class GridMismatchError(GeowalkError, ValueError):
    """A trajectory does not belong to the metric or grid it is used with."""
