"""Exception hierarchy shared by all modules."""


class CollisionLabError(Exception):
    """Base class for all package errors."""


class InputError(CollisionLabError, ValueError):
    """Malformed or mismatched arguments."""


class ResourceError(CollisionLabError, RuntimeError):
    """Requested computation exceeds a configured size cap."""


class PreconditionError(CollisionLabError, ValueError):
    """A numerical precondition (e.g. smallness of delta) does not hold."""


class DomainError(CollisionLabError, ValueError):
    """Argument outside the mathematical domain of the operation."""


class SingularEvaluationError(CollisionLabError, ArithmeticError):
    """Potential evaluated at a coincident particle pair."""

    def __init__(self, pair, message=None):
        self.pair = tuple(pair)
        super().__init__(message or f"particles {self.pair[0]} and {self.pair[1]} coincide")


class IntegrationError(CollisionLabError, RuntimeError):
    """Integration failed outside of a detected singularity."""


class InconclusiveError(CollisionLabError, RuntimeError):
    """Numerics cannot decide the requested classification."""
