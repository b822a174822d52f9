"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Operand shapes do not chain."""


class SingularMatrixError(ValueError):
    """Matrix is singular to working tolerance."""

    def __init__(self, message, cond=float("inf")):
        super().__init__(message)
        self.cond = cond


class NonFiniteStateError(FloatingPointError):
    """A recurrent state became non-finite or exceeded the overflow guard."""

    def __init__(self, message, timestep):
        super().__init__(f"{message} (timestep {timestep})")
        self.timestep = timestep


class DegreeOverflowError(ValueError):
    """Polynomial has significant coefficients above the comparison degree."""


class NotPolynomialError(TypeError):
    """Model contains a non-polynomial activation and cannot be fingerprinted."""


class MergeRefused(ValueError):
    """Rank-1 merge preconditions failed; nothing was changed."""


class UnregisteredPrimitive(TypeError):
    """Operation on a traced tensor has no registered gradient."""


class DivergenceError(FloatingPointError):
    """Training loss became non-finite."""

    def __init__(self, message, step, last_good=None):
        super().__init__(f"{message} at step {step}")
        self.step = step
        self.last_good = last_good
