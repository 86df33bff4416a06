"""Exception hierarchy.

Every error carries a stable exit-code category so the CLI can map it
without inspecting messages: ``ValidationFailure`` subclasses exit with 1,
``NumericalFailure`` subclasses exit with 2.
"""

from __future__ import annotations


class PoseforgeError(Exception):
    exit_code = 2


class ValidationFailure(PoseforgeError):
    exit_code = 1


class NumericalFailure(PoseforgeError):
    exit_code = 2


# se3
class DegenerateMean(NumericalFailure):
    """Weighted rotation sum is singular; no unique chordal mean exists."""


# camera
class BehindCamera(NumericalFailure):
    pass


# lsq
class NonFiniteResidual(NumericalFailure):
    def __init__(self, message: str, params=None):
        super().__init__(message)
        self.params = params


# pnp
class InsufficientFeatures(ValidationFailure):
    pass


class DegenerateConfiguration(NumericalFailure):
    pass


# rwhe
class DegenerateMotion(NumericalFailure):
    pass


class NoConvergence(NumericalFailure):
    pass


# fusion
class InsufficientSamples(ValidationFailure):
    pass


class ZeroVariance(NumericalFailure):
    pass


# metrics
class LengthMismatch(ValidationFailure):
    pass


class ZeroRangeTruth(ValidationFailure):
    pass


# io / cli
class ParseError(ValidationFailure):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(ValidationFailure):
    def __init__(self, message: str, field: str | None = None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field


class MissingProfile(ValidationFailure):
    pass
