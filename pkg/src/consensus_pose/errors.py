"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class ConsensusPoseError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class InvalidInputError(ConsensusPoseError, ValueError):
    """An argument violates a documented precondition."""

    exit_code = 3


class InvalidExtrinsicsError(InvalidInputError):
    """A rotation block is not in SO(3)."""


class ValidationError(InvalidInputError):
    """A file or document failed schema/invariant validation on load."""


class DegenerateGeometryError(ConsensusPoseError):
    """Too few or collinear correspondences to determine a closed-form update."""

    exit_code = 4


class NumericalFailureError(ConsensusPoseError):
    """A non-finite value appeared during optimization."""

    exit_code = 5

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class SceneGenerationError(ConsensusPoseError):
    """The requested synthetic configuration cannot be realized."""

    exit_code = 3
