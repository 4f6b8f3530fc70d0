"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end.
"""


class QefError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ParseError(QefError):
    exit_code = 2


class ValidationError(QefError):
    exit_code = 3


class NotHurwitz(ValidationError):
    """A matrix required to be Hurwitz has an eigenvalue with Re >= -tol."""


class NotHermitian(QefError):
    pass


class NotPSD(QefError):
    pass


class SolveFailure(QefError):
    """A linear system was numerically singular."""


class SingularTransform(QefError):
    pass


class SingularV(QefError):
    pass


class GenerationFailure(QefError):
    pass


class GammaSingular(QefError):
    """A matrix of the Lyapunov cascade is numerically singular."""

    exit_code = 4

    def __init__(self, index, condition):
        self.index = index
        self.condition = condition
        super().__init__(f"gamma_{index} is singular (condition number {condition:.3e})")


class StabilizingSolutionLost(QefError):
    """Newton iterates of the Riccati solver left the stabilizing region."""

    exit_code = 5


class NoConvergence(StabilizingSolutionLost):
    pass


class ThetaBeyondThreshold(QefError):
    exit_code = 6


class OdeBlowup(ThetaBeyondThreshold):
    pass
