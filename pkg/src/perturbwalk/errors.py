"""Exception hierarchy shared by every module."""


class PerturbWalkError(Exception):
    """Base class for all errors raised by perturbwalk."""


class NonZeroMean(PerturbWalkError, ValueError):
    pass


class NotNormalized(PerturbWalkError, ValueError):
    pass


class DimensionMismatch(PerturbWalkError, ValueError):
    pass


class BadExponent(PerturbWalkError, ValueError):
    pass


class NotInDomain(PerturbWalkError, ValueError):
    """The jump law is not in the domain of attraction of the normal law."""


class DegenerateLaw(PerturbWalkError, ValueError):
    pass


class BoxTooSmall(PerturbWalkError, ValueError):
    """More than the allowed mass escaped the truncation box."""

    def __init__(self, leaked: float, box_radius: int):
        super().__init__(f"leaked mass {leaked:.3g} exceeds 0.01 at box radius {box_radius}")
        self.leaked = leaked
        self.box_radius = box_radius


class NumericUnderflow(PerturbWalkError, ValueError):
    """The renewal recursion left [0, 1] or lost monotonicity.

    Raised when the input is not a genuine return-probability sequence.
    """


class InsufficientData(PerturbWalkError, ValueError):
    pass


class DegenerateCovariance(PerturbWalkError, ValueError):
    pass


class ConfigError(PerturbWalkError, ValueError):
    pass
